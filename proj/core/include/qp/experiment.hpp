#ifndef QPROP_EXPERIMENT_HPP
#define QPROP_EXPERIMENT_HPP

#include <map>
#include <string>
#include <vector>

#include "qp/dataset.hpp"
#include "qp/inference.hpp"
#include "qp/predict.hpp"

namespace qp {

std::string method_name(Method m);

struct ExperimentSpec {
  std::string name;
  Dataset dataset;                   // binary task input
  std::vector<double> coal_events;   // count task input (overrides dataset)
  std::vector<Method> methods = {Method::ep, Method::qp};
  std::vector<int> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int folds = 10;
  bool standardize = true;
  FitConfig fit;                          // sigma_source/table applied to QP runs
  const SigmaLookupTable* qp_table = nullptr;
  HyperOptConfig hyperopt;
  double init_gamma = 1.0;
  double init_lengthscale = 1.0;
  std::string output_dir;  // empty: nothing written, results returned only
  int parallelism = 1;
  double failure_budget = 0.05;

  void validate() const;
};

struct RunRecord {
  int seed = 0;
  int fold = 0;
  Method method = Method::ep;
  bool failed = false;
  std::string error;
  Metrics metrics;
  int sweeps = 0;
  bool fit_converged = false;
  std::int64_t fallbacks = 0;  // table fallbacks + quadrature fallbacks
  int hyper_iters = 0;
  double wall_ms = 0.0;
};

struct MethodAggregate {
  double te_mean = 0.0, te_std = 0.0;
  double ntll_mean = 0.0, ntll_std = 0.0;
  int runs = 0, failures = 0;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::map<Method, MethodAggregate> aggregates;
  double frac_qp_ntll_lt_ep = 0.0;   // strict, over runs where both succeeded
  double frac_qp_ntll_le_ep = 0.0;
  std::int64_t scatter_points = 0;
  std::int64_t predictive_ordering_violations = 0;  // var_qp > var_ep + 1e-9
  bool failure_budget_exceeded = false;
  std::string runs_csv_path, aggregate_json_path, scatter_csv_path;
};

// Full protocol: per seed x fold x method, optimize hyperparameters, fit,
// predict, evaluate. Writes per-run CSV, aggregate JSON, and an
// (var_ep, var_qp) scatter CSV when output_dir is set.
ExperimentResult run_experiment(const ExperimentSpec& spec);

}  // namespace qp

#endif
