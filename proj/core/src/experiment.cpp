#include "qp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "qp/errors.hpp"
#include "qp/kernel.hpp"

namespace qp {

namespace {

using json = nlohmann::json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct WorkUnit {
  int seed = 0;
  int fold = 0;
  Eigen::MatrixXd x_train, x_test;
  std::vector<int> y_train, y_test;
};

struct UnitOutput {
  std::vector<RunRecord> records;                       // one per method
  std::map<Method, std::vector<LatentPrediction>> latents;  // per test point
};

const Likelihood& likelihood_for(Task task) {
  static const ProbitLikelihood probit;
  static const PoissonSquareLikelihood poisson;
  if (task == Task::binary) return probit;
  return poisson;
}

UnitOutput run_unit(const ExperimentSpec& spec, const WorkUnit& unit, Task task) {
  UnitOutput out;
  const Likelihood& lik = likelihood_for(task);
  const int dim = static_cast<int>(unit.x_train.cols());

  for (Method method : spec.methods) {
    RunRecord rec;
    rec.seed = unit.seed;
    rec.fold = unit.fold;
    rec.method = method;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      FitConfig fc = spec.fit;
      fc.method = method;
      if (method == Method::qp && fc.sigma_source == SigmaStarSource::table) {
        fc.table = spec.qp_table;
      }
      KernelParams init;
      init.gamma = spec.init_gamma;
      init.lengthscales = Eigen::VectorXd::Constant(dim, spec.init_lengthscale);

      const HyperOptResult hyper =
          optimize_hypers(unit.x_train, unit.y_train, lik, init, fc, spec.hyperopt);
      rec.hyper_iters = hyper.iterations;
      rec.sweeps = hyper.posterior.diagnostics.sweeps;
      rec.fit_converged = hyper.posterior.diagnostics.converged;
      const FitDiagnostics& d = hyper.posterior.diagnostics;
      rec.fallbacks = d.ep_fallbacks + d.direct_fallbacks + d.moment_quadratures +
                      d.cdf_quadratures;

      CovMatrix k = build_cov(unit.x_train, hyper.params);
      cholesky_with_jitter(k, hyper.params.gamma);
      const LatentPredictor predictor(k, hyper.posterior);
      const Eigen::MatrixXd cross = build_cross_cov(unit.x_train, unit.x_test, hyper.params);

      std::vector<LatentPrediction> latents(unit.x_test.rows());
      for (Eigen::Index t = 0; t < unit.x_test.rows(); ++t) {
        latents[t] = predictor.latent(cross.col(t), hyper.params.gamma);
      }
      rec.metrics = task == Task::binary ? evaluate_binary(unit.y_test, latents)
                                         : evaluate_count(unit.y_test, latents);
      out.latents[method] = std::move(latents);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::string method_name(Method m) { return m == Method::ep ? "EP" : "QP"; }

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw ValidationError("ExperimentSpec: seeds must be nonempty");
  if (methods.empty()) throw ValidationError("ExperimentSpec: methods must be nonempty");
  if (coal_events.empty()) {
    dataset.validate();
    if (folds < 2) throw ValidationError("ExperimentSpec: folds must be >= 2");
    if (folds > dataset.n()) throw ValidationError("ExperimentSpec: folds > n");
  }
  if (name.empty()) throw ValidationError("ExperimentSpec: name must be nonempty");
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const Task task = spec.coal_events.empty() ? spec.dataset.task : Task::count;

  // Assemble deterministic work units.
  std::vector<WorkUnit> units;
  for (int seed : spec.seeds) {
    if (!spec.coal_events.empty()) {
      const CoalSplit split = prepare_coal_mining(spec.coal_events, seed);
      WorkUnit u;
      u.seed = seed;
      u.fold = 0;
      u.x_train = split.train.x;
      u.y_train = split.train.y;
      u.x_test = split.test.x;
      u.y_test = split.test.y;
      if (spec.standardize) {
        const Standardization s = fit_standardizer(u.x_train);
        u.x_train = apply_standardizer(s, u.x_train);
        u.x_test = apply_standardizer(s, u.x_test);
      }
      units.push_back(std::move(u));
      continue;
    }
    const std::vector<FoldSplit> folds = make_folds(spec.dataset.n(), seed, spec.folds);
    for (int f = 0; f < static_cast<int>(folds.size()); ++f) {
      WorkUnit u;
      u.seed = seed;
      u.fold = f;
      const auto& split = folds[f];
      u.x_train.resize(split.train_idx.size(), spec.dataset.dim());
      u.x_test.resize(split.test_idx.size(), spec.dataset.dim());
      for (std::size_t r = 0; r < split.train_idx.size(); ++r) {
        u.x_train.row(r) = spec.dataset.x.row(split.train_idx[r]);
        u.y_train.push_back(spec.dataset.y[split.train_idx[r]]);
      }
      for (std::size_t r = 0; r < split.test_idx.size(); ++r) {
        u.x_test.row(r) = spec.dataset.x.row(split.test_idx[r]);
        u.y_test.push_back(spec.dataset.y[split.test_idx[r]]);
      }
      if (spec.standardize) {
        const Standardization s = fit_standardizer(u.x_train);
        u.x_train = apply_standardizer(s, u.x_train);
        u.x_test = apply_standardizer(s, u.x_test);
      }
      units.push_back(std::move(u));
    }
  }

  // Worker pool; each unit writes its own slot, so output order (and content)
  // is independent of the pool size.
  std::vector<UnitOutput> outputs(units.size());
  {
    std::atomic<std::size_t> next{0};
    const int workers =
        std::max(1, std::min<int>(spec.parallelism, static_cast<int>(units.size())));
    const auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= units.size()) return;
        outputs[i] = run_unit(spec, units[i], task);
      }
    };
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
  }

  ExperimentResult result;
  for (auto& out : outputs) {
    for (auto& rec : out.records) result.runs.push_back(rec);
  }
  std::sort(result.runs.begin(), result.runs.end(), [](const RunRecord& a, const RunRecord& b) {
    if (a.seed != b.seed) return a.seed < b.seed;
    if (a.fold != b.fold) return a.fold < b.fold;
    return method_name(a.method) < method_name(b.method);
  });

  // Aggregates: per-seed fold averages, then mean +- std over seeds.
  for (Method m : spec.methods) {
    MethodAggregate agg;
    std::vector<double> te_by_seed, ntll_by_seed;
    for (int seed : spec.seeds) {
      double te = 0.0, ntll = 0.0;
      int count = 0;
      for (const auto& rec : result.runs) {
        if (rec.method != m || rec.seed != seed) continue;
        ++agg.runs;
        if (rec.failed) {
          ++agg.failures;
          continue;
        }
        te += rec.metrics.te;
        ntll += rec.metrics.ntll;
        ++count;
      }
      if (count > 0) {
        te_by_seed.push_back(te / count);
        ntll_by_seed.push_back(ntll / count);
      }
    }
    const auto mean_std = [](const std::vector<double>& v) {
      if (v.empty()) return std::pair<double, double>{0.0, 0.0};
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      var /= v.size();
      return std::pair<double, double>{mean, std::sqrt(var)};
    };
    std::tie(agg.te_mean, agg.te_std) = mean_std(te_by_seed);
    std::tie(agg.ntll_mean, agg.ntll_std) = mean_std(ntll_by_seed);
    if (agg.runs > 0 &&
        agg.failures > spec.failure_budget * static_cast<double>(agg.runs)) {
      result.failure_budget_exceeded = true;
    }
    result.aggregates[m] = agg;
  }

  // QP-vs-EP comparisons per (seed, fold) and scatter data.
  const bool have_both =
      std::find(spec.methods.begin(), spec.methods.end(), Method::ep) != spec.methods.end() &&
      std::find(spec.methods.begin(), spec.methods.end(), Method::qp) != spec.methods.end();
  int lt = 0, le = 0, both = 0;
  if (have_both) {
    for (std::size_t i = 0; i < units.size(); ++i) {
      const auto& recs = outputs[i].records;
      const RunRecord* ep = nullptr;
      const RunRecord* qp = nullptr;
      for (const auto& r : recs) {
        if (r.method == Method::ep) ep = &r;
        if (r.method == Method::qp) qp = &r;
      }
      if (ep == nullptr || qp == nullptr || ep->failed || qp->failed) continue;
      ++both;
      if (qp->metrics.ntll < ep->metrics.ntll) ++lt;
      if (qp->metrics.ntll <= ep->metrics.ntll) ++le;
      const auto& lat_ep = outputs[i].latents.at(Method::ep);
      const auto& lat_qp = outputs[i].latents.at(Method::qp);
      for (std::size_t t = 0; t < lat_ep.size(); ++t) {
        ++result.scatter_points;
        if (lat_qp[t].var > lat_ep[t].var + 1e-9) ++result.predictive_ordering_violations;
      }
    }
    if (both > 0) {
      result.frac_qp_ntll_lt_ep = static_cast<double>(lt) / both;
      result.frac_qp_ntll_le_ep = static_cast<double>(le) / both;
    }
  }

  if (!spec.output_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(spec.output_dir);
    const fs::path base = fs::path(spec.output_dir);

    const fs::path runs_path = base / (spec.name + "_runs.csv");
    std::ofstream runs(runs_path, std::ios::trunc);
    runs << "dataset,seed,fold,method,te,ntll,sweeps,fallbacks,hyper_iters,failed,wall_ms\n";
    for (const auto& rec : result.runs) {
      runs << spec.name << ',' << rec.seed << ',' << rec.fold << ','
           << method_name(rec.method) << ',' << fmt_double(rec.metrics.te) << ','
           << fmt_double(rec.metrics.ntll) << ',' << rec.sweeps << ',' << rec.fallbacks
           << ',' << rec.hyper_iters << ',' << (rec.failed ? 1 : 0) << ','
           << fmt_double(rec.wall_ms) << '\n';
    }
    result.runs_csv_path = runs_path.string();

    json agg;
    agg["dataset"] = spec.name;
    agg["task"] = task == Task::binary ? "binary" : "count";
    agg["seeds"] = spec.seeds;
    agg["folds"] = spec.coal_events.empty() ? spec.folds : 1;
    agg["config"] = {
        {"damping", spec.fit.damping},
        {"inner_tol", spec.fit.inner_tol},
        {"max_sweeps", spec.fit.max_sweeps},
        {"update_order", spec.fit.order == UpdateOrder::index ? "index" : "random"},
        {"sigma_source",
         spec.fit.sigma_source == SigmaStarSource::table ? "table" : "quadrature"},
        {"standardize", spec.standardize},
        {"init_gamma", spec.init_gamma},
        {"init_lengthscale", spec.init_lengthscale},
        {"hyperopt_max_iters", spec.hyperopt.max_iters},
        {"hyperopt_rel_f_tol", spec.hyperopt.rel_f_tol},
    };
    for (const auto& [m, a] : result.aggregates) {
      agg["methods"][method_name(m)] = {
          {"te_mean", a.te_mean},     {"te_std", a.te_std},
          {"ntll_mean", a.ntll_mean}, {"ntll_std", a.ntll_std},
          {"runs", a.runs},           {"failures", a.failures},
      };
    }
    agg["frac_qp_ntll_lt_ep"] = result.frac_qp_ntll_lt_ep;
    agg["frac_qp_ntll_le_ep"] = result.frac_qp_ntll_le_ep;
    agg["scatter_points"] = result.scatter_points;
    agg["predictive_ordering_violations"] = result.predictive_ordering_violations;
    agg["failure_budget_exceeded"] = result.failure_budget_exceeded;
    const fs::path agg_path = base / (spec.name + "_aggregate.json");
    std::ofstream(agg_path, std::ios::trunc) << agg.dump(2) << '\n';
    result.aggregate_json_path = agg_path.string();

    if (have_both) {
      const fs::path scatter_path = base / (spec.name + "_scatter.csv");
      std::ofstream scatter(scatter_path, std::ios::trunc);
      scatter << "seed,fold,point,var_ep,var_qp\n";
      for (std::size_t i = 0; i < units.size(); ++i) {
        const auto it_ep = outputs[i].latents.find(Method::ep);
        const auto it_qp = outputs[i].latents.find(Method::qp);
        if (it_ep == outputs[i].latents.end() || it_qp == outputs[i].latents.end()) continue;
        for (std::size_t t = 0; t < it_ep->second.size(); ++t) {
          scatter << units[i].seed << ',' << units[i].fold << ',' << t << ','
                  << fmt_double(it_ep->second[t].var) << ','
                  << fmt_double(it_qp->second[t].var) << '\n';
        }
      }
      result.scatter_csv_path = scatter_path.string();
    }
  }
  return result;
}

}  // namespace qp
