// qprop: EP / QP inference for GP classification and Poisson regression.
//
// Subcommands: precompute-table, fit, predict, run-experiment,
// verify-invariants. A plain key=value config file can seed any option
// (--config); command-line flags override it. QP_TABLE_DIR locates lookup
// tables when --table is not given.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "qp/dataset.hpp"
#include "qp/errors.hpp"
#include "qp/experiment.hpp"
#include "qp/inference.hpp"
#include "qp/kernel.hpp"
#include "qp/lookup_table.hpp"
#include "qp/predict.hpp"
#include "qp/projection.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct SchemaFlags {
  std::string data_path;
  std::string label_column = "label";
  std::string task = "binary";
  std::vector<std::string> label_values;
  std::vector<std::string> feature_columns;

  void attach(CLI::App* cmd, bool required_data = true) {
    auto* opt = cmd->add_option("--data", data_path, "input CSV (header row)");
    if (required_data) opt->required();
    cmd->add_option("--label-column", label_column, "label column name");
    cmd->add_option("--task", task, "binary|count")
        ->check(CLI::IsMember({"binary", "count"}));
    cmd->add_option("--label-values", label_values,
                    "two raw label values mapped to -1,+1 (binary); other rows dropped");
    cmd->add_option("--feature-columns", feature_columns,
                    "feature columns (default: all non-label columns)");
  }

  qp::Dataset load() const {
    qp::CsvSchema schema;
    schema.label_column = label_column;
    schema.task = task == "count" ? qp::Task::count : qp::Task::binary;
    schema.label_values = label_values;
    schema.feature_columns = feature_columns;
    return qp::load_dataset(data_path, schema);
  }
};

struct FitFlags {
  std::string method = "ep";
  std::string sigma_source = "quadrature";
  std::string table_path;
  double damping = 0.9;
  double inner_tol = 1e-6;
  int max_sweeps = 200;
  std::string update_order = "index";
  std::uint64_t order_seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--method", method, "ep|qp")->check(CLI::IsMember({"ep", "qp"}));
    cmd->add_option("--sigma-source", sigma_source, "quadrature|table (QP only)")
        ->check(CLI::IsMember({"quadrature", "table"}));
    cmd->add_option("--table", table_path,
                    "lookup table file (default: $QP_TABLE_DIR/<likelihood>.qplt)");
    cmd->add_option("--damping", damping, "site update damping in (0,1]");
    cmd->add_option("--inner-tol", inner_tol, "RMS site-change tolerance");
    cmd->add_option("--max-sweeps", max_sweeps, "sweep cap");
    cmd->add_option("--update-order", update_order, "index|random")
        ->check(CLI::IsMember({"index", "random"}));
    cmd->add_option("--order-seed", order_seed, "seed for random update order");
  }

  qp::FitConfig config() const {
    qp::FitConfig fc;
    fc.method = method == "qp" ? qp::Method::qp : qp::Method::ep;
    fc.sigma_source = sigma_source == "table" ? qp::SigmaStarSource::table
                                              : qp::SigmaStarSource::quadrature;
    fc.damping = damping;
    fc.inner_tol = inner_tol;
    fc.max_sweeps = max_sweeps;
    fc.order = update_order == "random" ? qp::UpdateOrder::random : qp::UpdateOrder::index;
    fc.order_seed = order_seed;
    return fc;
  }

  std::string resolve_table(const std::string& likelihood_name) const {
    if (!table_path.empty()) return table_path;
    const char* dir = std::getenv("QP_TABLE_DIR");
    if (dir == nullptr || *dir == '\0') return {};
    return (fs::path(dir) / (likelihood_name + ".qplt")).string();
  }
};

std::vector<int> parse_seed_range(const std::string& text) {
  // "0-9" or "0,1,5" or "7"
  std::vector<int> seeds;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-', 1);
    if (dash != std::string::npos) {
      const int lo = std::stoi(part.substr(0, dash));
      const int hi = std::stoi(part.substr(dash + 1));
      for (int s = lo; s <= hi; ++s) seeds.push_back(s);
    } else if (!part.empty()) {
      seeds.push_back(std::stoi(part));
    }
  }
  if (seeds.empty()) throw qp::ValidationError("empty seed range: " + text);
  return seeds;
}

json site_to_json(const qp::SiteParams& s) {
  return {{"log_zt", s.log_zt}, {"mu_t", s.mu_t},
          {"var_t", s.vacuous() ? json("inf") : json(s.var_t)}};
}

qp::SiteParams site_from_json(const json& j) {
  qp::SiteParams s;
  s.log_zt = j.at("log_zt").get<double>();
  s.mu_t = j.at("mu_t").get<double>();
  if (j.at("var_t").is_string()) {
    s.var_t = std::numeric_limits<double>::infinity();
  } else {
    s.var_t = j.at("var_t").get<double>();
  }
  return s;
}

// ---------------------------------------------------------------------------

int cmd_precompute(const std::string& likelihood, std::vector<int> y_values, bool toy,
                   double mu_min, double mu_max, double mu_step, double sigma_min,
                   double sigma_max, double log10_sigma_step, std::string out_path,
                   int parallelism) {
  qp::GridSpec grid;
  if (toy) {
    grid.mu = qp::GridAxis{-3.0, 3.0, 13};
    grid.log10_sigma = qp::GridAxis{-0.5, 0.5, 9};
  } else {
    grid.mu = qp::GridAxis::from_step(mu_min, mu_max, mu_step);
    grid.log10_sigma = qp::GridAxis::from_step(std::log10(sigma_min),
                                               std::log10(sigma_max), log10_sigma_step);
  }
  const qp::ProbitLikelihood probit;
  const qp::PoissonSquareLikelihood poisson;
  const qp::Likelihood& lik =
      likelihood == "probit" ? static_cast<const qp::Likelihood&>(probit)
                             : static_cast<const qp::Likelihood&>(poisson);
  if (y_values.empty()) {
    if (likelihood == "probit") {
      y_values = {-1, 1};
    } else {
      for (int y = 0; y <= 16; ++y) y_values.push_back(y);
    }
  }
  if (out_path.empty()) {
    const char* dir = std::getenv("QP_TABLE_DIR");
    const fs::path base = (dir != nullptr && *dir != '\0') ? fs::path(dir) : fs::path(".");
    fs::create_directories(base);
    out_path = (base / (likelihood + ".qplt")).string();
  }

  std::cerr << "precomputing " << likelihood << " table: " << grid.mu.count << " x "
            << grid.log10_sigma.count << " nodes x " << y_values.size() << " slices\n";
  const auto t0 = std::chrono::steady_clock::now();
  qp::PrecomputeReport report;
  const qp::SigmaLookupTable table =
      qp::precompute_table(lik, y_values, grid, parallelism, &report);
  qp::save_table(table, out_path);
  const qp::SigmaLookupTable reloaded = qp::load_table(out_path);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "table: " << out_path << "\n"
            << "nodes: " << report.nodes << " (failures: " << report.failures << ")\n"
            << "checksum: " << qp::checksum_hex(reloaded.checksum) << "\n"
            << "seconds: " << secs << "\n";
  return kExitOk;
}

int cmd_fit(const SchemaFlags& schema, const FitFlags& fit_flags, double init_gamma,
            double init_lengthscale, bool optimize, int hyper_iters,
            const std::string& out_path) {
  const qp::Dataset data = schema.load();
  const qp::Standardization std_params = qp::fit_standardizer(data.x);
  const Eigen::MatrixXd x = qp::apply_standardizer(std_params, data.x);

  const qp::ProbitLikelihood probit;
  const qp::PoissonSquareLikelihood poisson;
  const qp::Likelihood& lik = data.task == qp::Task::binary
                                  ? static_cast<const qp::Likelihood&>(probit)
                                  : static_cast<const qp::Likelihood&>(poisson);

  qp::FitConfig fc = fit_flags.config();
  qp::SigmaLookupTable table;
  if (fc.method == qp::Method::qp && fc.sigma_source == qp::SigmaStarSource::table) {
    const std::string path = fit_flags.resolve_table(lik.name());
    if (path.empty()) {
      throw qp::ValidationError("table sigma source needs --table or QP_TABLE_DIR");
    }
    table = qp::load_table(path);
    fc.table = &table;
  }

  qp::KernelParams params;
  params.gamma = init_gamma;
  params.lengthscales = Eigen::VectorXd::Constant(data.dim(), init_lengthscale);

  qp::PosteriorState post;
  int hyper_iterations = 0;
  if (optimize) {
    qp::HyperOptConfig hc;
    hc.max_iters = hyper_iters;
    const qp::HyperOptResult result = qp::optimize_hypers(x, data.y, lik, params, fc, hc);
    params = result.params;
    post = result.posterior;
    hyper_iterations = result.iterations;
  } else {
    qp::CovMatrix k = qp::build_cov(x, params);
    qp::cholesky_with_jitter(k, params.gamma);
    post = qp::fit(k, data.y, lik, fc);
  }

  json out;
  out["task"] = data.task == qp::Task::binary ? "binary" : "count";
  out["method"] = fit_flags.method;
  out["sigma_source"] = fit_flags.sigma_source;
  out["data"] = {{"path", schema.data_path},
                 {"n", data.n()},
                 {"dim", data.dim()},
                 {"rows_dropped", data.provenance.rows_dropped}};
  out["standardization"] = {
      {"mean", std::vector<double>(std_params.mean.data(),
                                   std_params.mean.data() + std_params.mean.size())},
      {"scale", std::vector<double>(std_params.scale.data(),
                                    std_params.scale.data() + std_params.scale.size())}};
  out["kernel"] = {{"gamma", params.gamma},
                   {"lengthscales",
                    std::vector<double>(params.lengthscales.data(),
                                        params.lengthscales.data() +
                                            params.lengthscales.size())}};
  out["log_evidence"] = post.log_evidence;
  out["hyper_iterations"] = hyper_iterations;
  out["diagnostics"] = {{"sweeps", post.diagnostics.sweeps},
                        {"converged", post.diagnostics.converged},
                        {"skipped_cavities", post.diagnostics.skipped_cavities},
                        {"clipped_sites", post.diagnostics.clipped_sites},
                        {"ordering_violations", post.diagnostics.ordering_violations}};
  json sites = json::array();
  for (const auto& s : post.sites) sites.push_back(site_to_json(s));
  out["sites"] = sites;
  // Standardized inputs and labels embedded so `predict` is self contained.
  json xtrain = json::array();
  for (int i = 0; i < data.n(); ++i) {
    json row = json::array();
    for (int j = 0; j < data.dim(); ++j) row.push_back(x(i, j));
    xtrain.push_back(row);
  }
  out["x_train"] = xtrain;
  out["y_train"] = data.y;

  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw qp::ValidationError("fit: cannot write " + out_path);
  f << out.dump(2) << '\n';
  std::cout << "model: " << out_path << "\nlog_evidence: " << post.log_evidence
            << "\nsweeps: " << post.diagnostics.sweeps
            << (post.diagnostics.converged ? "" : " (not converged)") << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const SchemaFlags& schema,
                const std::string& out_path) {
  std::ifstream f(model_path);
  if (!f) throw qp::ValidationError("predict: cannot open " + model_path);
  json model = json::parse(f);

  const bool binary = model.at("task") == "binary";
  const int dim = model.at("data").at("dim").get<int>();
  qp::KernelParams params;
  params.gamma = model.at("kernel").at("gamma").get<double>();
  const auto ls = model.at("kernel").at("lengthscales").get<std::vector<double>>();
  params.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), ls.size());

  const auto xj = model.at("x_train");
  Eigen::MatrixXd x_train(xj.size(), dim);
  for (std::size_t i = 0; i < xj.size(); ++i) {
    for (int j = 0; j < dim; ++j) x_train(i, j) = xj[i][j].get<double>();
  }
  std::vector<qp::SiteParams> sites;
  for (const auto& sj : model.at("sites")) sites.push_back(site_from_json(sj));

  qp::Standardization std_params;
  const auto mean = model.at("standardization").at("mean").get<std::vector<double>>();
  const auto scale = model.at("standardization").at("scale").get<std::vector<double>>();
  std_params.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  std_params.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), scale.size());

  SchemaFlags test_schema = schema;
  test_schema.task = binary ? "binary" : "count";
  const qp::Dataset test = test_schema.load();
  if (test.dim() != dim) throw qp::ValidationError("predict: feature dimension mismatch");
  const Eigen::MatrixXd x_test = qp::apply_standardizer(std_params, test.x);

  qp::CovMatrix k = qp::build_cov(x_train, params);
  qp::cholesky_with_jitter(k, params.gamma);
  const std::vector<int> y_train = model.at("y_train").get<std::vector<int>>();
  qp::PosteriorState post = qp::recompute_posterior(k, sites);
  const qp::LatentPredictor predictor(k, post);
  const Eigen::MatrixXd cross = qp::build_cross_cov(x_train, x_test, params);

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw qp::ValidationError("predict: cannot write " + out_path);
  std::vector<qp::LatentPrediction> latents(test.n());
  if (binary) {
    out << "latent_mean,latent_var,prob_positive,label\n";
  } else {
    out << "latent_mean,latent_var,nb_k,nb_c,mode\n";
  }
  for (int t = 0; t < test.n(); ++t) {
    latents[t] = predictor.latent(cross.col(t), params.gamma);
    if (binary) {
      const double prob = qp::class_predictive_prob(latents[t]);
      out << latents[t].mean << ',' << latents[t].var << ',' << prob << ','
          << qp::class_label(prob) << '\n';
    } else {
      const qp::NbParams nb = qp::count_predictive(latents[t]);
      out << latents[t].mean << ',' << latents[t].var << ',' << nb.k << ',' << nb.c << ','
          << qp::nb_mode(nb) << '\n';
    }
  }
  const qp::Metrics metrics = binary ? qp::evaluate_binary(test.y, latents)
                                     : qp::evaluate_count(test.y, latents);
  std::cout << "predictions: " << out_path << "\nte: " << metrics.te
            << "\nntll: " << metrics.ntll << "\n";
  return kExitOk;
}

int cmd_run_experiment(const SchemaFlags& schema, const FitFlags& fit_flags,
                       const std::string& coal_path, const std::string& name,
                       const std::string& seed_range, int folds, bool no_standardize,
                       const std::string& out_dir, int parallelism, int hyper_iters,
                       double init_gamma, double init_lengthscale,
                       const std::vector<std::string>& methods) {
  qp::ExperimentSpec spec;
  spec.name = name;
  if (!coal_path.empty()) {
    spec.coal_events = qp::load_event_times(coal_path);
  } else {
    spec.dataset = schema.load();
  }
  spec.methods.clear();
  for (const auto& m : methods) {
    spec.methods.push_back(m == "qp" ? qp::Method::qp : qp::Method::ep);
  }
  spec.seeds = parse_seed_range(seed_range);
  spec.folds = folds;
  spec.standardize = !no_standardize;
  spec.fit = fit_flags.config();
  spec.fit.method = qp::Method::ep;  // per-method override happens per run
  spec.hyperopt.max_iters = hyper_iters;
  spec.init_gamma = init_gamma;
  spec.init_lengthscale = init_lengthscale;
  spec.output_dir = out_dir;
  spec.parallelism = parallelism;

  qp::SigmaLookupTable table;
  if (spec.fit.sigma_source == qp::SigmaStarSource::table) {
    const std::string lik_name = coal_path.empty()
                                     ? (spec.dataset.task == qp::Task::binary
                                            ? "probit"
                                            : "poisson_square")
                                     : "poisson_square";
    const std::string path = fit_flags.resolve_table(lik_name);
    if (path.empty()) {
      throw qp::ValidationError("table sigma source needs --table or QP_TABLE_DIR");
    }
    table = qp::load_table(path);
    spec.qp_table = &table;
  }

  const qp::ExperimentResult result = qp::run_experiment(spec);
  for (const auto& [m, agg] : result.aggregates) {
    std::cout << qp::method_name(m) << ": te " << agg.te_mean << " +- " << agg.te_std
              << ", ntll " << agg.ntll_mean << " +- " << agg.ntll_std << " ("
              << agg.failures << "/" << agg.runs << " failures)\n";
  }
  std::cout << "frac QP ntll < EP: " << result.frac_qp_ntll_lt_ep << "\n";
  if (!result.runs_csv_path.empty()) {
    std::cout << "runs: " << result.runs_csv_path << "\naggregate: "
              << result.aggregate_json_path << "\nscatter: " << result.scatter_csv_path
              << "\n";
  }
  if (result.failure_budget_exceeded) {
    std::cerr << "error: method failure budget exceeded\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_verify(int trials, std::uint64_t seed) {
  // Randomized spot checks of the core invariants; a fast subset of the
  // acceptance suite for use in the field.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u_mu(-3.0, 3.0);
  std::uniform_real_distribution<double> u_logvar(std::log(0.05), std::log(9.0));
  std::uniform_int_distribution<int> u_label(0, 1);
  std::uniform_int_distribution<int> u_count(0, 8);

  const qp::ProbitLikelihood probit;
  const qp::PoissonSquareLikelihood poisson;
  int failures = 0;
  double max_mean_gap = 0.0, max_identity_gap = 0.0;
  int ordering_violations = 0;

  for (int t = 0; t < trials; ++t) {
    const bool use_probit = (t % 2 == 0);
    const qp::Likelihood& lik =
        use_probit ? static_cast<const qp::Likelihood&>(probit)
                   : static_cast<const qp::Likelihood&>(poisson);
    const int y = use_probit ? (u_label(rng) == 0 ? -1 : 1) : u_count(rng);
    const qp::CavityParams cav{u_mu(rng), std::exp(u_logvar(rng))};
    try {
      const qp::TiltedMoments tm = lik.tilted_moments(cav, y);
      const auto cdf = [&](double x) { return lik.tilted_cdf(x, cav, y).value; };
      const qp::ProjectedGaussian g =
          qp::project_w2(cdf, tm.mean, lik.support_hint(cav, y));
      max_mean_gap = std::max(max_mean_gap, std::fabs(g.mean - tm.mean));
      if (g.var > tm.var + 1e-9) ++ordering_violations;
      const auto pdf_stub = [&](double x) {
        const double h = 1e-5;
        return (cdf(x + h) - cdf(x - h)) / (2 * h);
      };
      const double w22 = qp::wasserstein_pp(2.0, cdf, pdf_stub, lik.support_hint(cav, y),
                                            g.mean, std::sqrt(g.var), 1e-9);
      max_identity_gap = std::max(max_identity_gap, std::fabs(w22 - (tm.var - g.var)));
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "trial " << t << " failed: " << e.what() << "\n";
    }
  }
  const bool ok = failures == 0 && ordering_violations == 0 && max_mean_gap <= 1e-10 &&
                  max_identity_gap <= 1e-6;
  std::cout << (ok ? "PASS" : "FAIL") << ": trials " << trials << ", failures "
            << failures << ", ordering violations " << ordering_violations
            << ", max |mu_qp - mu_ep| " << max_mean_gap << ", max W2 identity gap "
            << max_identity_gap << "\n";
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EP and quantile-propagation inference for GP models"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config appear after the subcommand name too
  app.set_config("--config", "", "plain key=value config file; flags override");

  // precompute-table
  auto* pre = app.add_subcommand("precompute-table", "build a sigma* lookup table");
  std::string pre_lik = "probit";
  std::vector<int> pre_y;
  bool pre_toy = false;
  double mu_min = -10.0, mu_max = 10.0, mu_step = 1e-3;
  double sigma_min = 0.1, sigma_max = 10.0, log10_sigma_step = 1e-3;
  std::string pre_out;
  int pre_par = 1;
  pre->add_option("--likelihood", pre_lik, "probit|poisson-square")
      ->check(CLI::IsMember({"probit", "poisson-square"}));
  pre->add_option("--y", pre_y, "observation slices (default: -1,1 or 0..16)");
  pre->add_flag("--toy", pre_toy, "small 13x9 grid for smoke tests");
  pre->add_option("--mu-min", mu_min);
  pre->add_option("--mu-max", mu_max);
  pre->add_option("--mu-step", mu_step);
  pre->add_option("--sigma-min", sigma_min);
  pre->add_option("--sigma-max", sigma_max);
  pre->add_option("--log10-sigma-step", log10_sigma_step);
  pre->add_option("--out", pre_out, "output file (default $QP_TABLE_DIR/<lik>.qplt)");
  pre->add_option("--parallelism", pre_par, "precompute threads");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit EP/QP on a CSV dataset");
  SchemaFlags fit_schema;
  FitFlags fit_flags;
  double init_gamma = 1.0, init_lengthscale = 1.0;
  bool no_hyperopt = false;
  int hyper_iters = 1000;
  std::string fit_out = "model.json";
  fit_schema.attach(fit_cmd);
  fit_flags.attach(fit_cmd);
  fit_cmd->add_option("--gamma", init_gamma, "initial signal variance");
  fit_cmd->add_option("--lengthscale", init_lengthscale, "initial lengthscale (all dims)");
  fit_cmd->add_flag("--no-hyperopt", no_hyperopt, "skip hyperparameter optimization");
  fit_cmd->add_option("--hyper-iters", hyper_iters, "optimizer iteration cap");
  fit_cmd->add_option("--out", fit_out, "model JSON output path");

  // predict
  auto* pred = app.add_subcommand("predict", "predict with a fitted model");
  std::string model_path;
  SchemaFlags pred_schema;
  std::string pred_out = "predictions.csv";
  pred->add_option("--model", model_path, "model JSON from `fit`")->required();
  pred_schema.attach(pred);
  pred->add_option("--out", pred_out, "predictions CSV path");

  // run-experiment
  auto* run = app.add_subcommand("run-experiment",
                                 "seeded benchmark protocol (folds x methods)");
  SchemaFlags run_schema;
  FitFlags run_fit;
  std::string coal_path, run_name = "experiment", seed_range = "0-9";
  int run_folds = 10, run_par = 1, run_hyper_iters = 1000;
  bool no_standardize = false;
  double run_gamma = 1.0, run_ls = 1.0;
  std::vector<std::string> run_methods = {"ep", "qp"};
  std::string run_out_dir = "results";
  run_schema.attach(run, /*required_data=*/false);
  run_fit.attach(run);
  run->add_option("--coal-events", coal_path,
                  "event-time CSV; switches to the count-task protocol");
  run->add_option("--name", run_name, "experiment name (output prefix)");
  run->add_option("--seeds", seed_range, "seed list/range, e.g. 0-9 or 0,3,7");
  run->add_option("--folds", run_folds, "fold count");
  run->add_flag("--no-standardize", no_standardize);
  run->add_option("--methods", run_methods, "subset of {ep, qp}")
      ->check(CLI::IsMember({"ep", "qp"}));
  run->add_option("--out-dir", run_out_dir, "output directory");
  run->add_option("--parallelism", run_par, "worker pool size");
  run->add_option("--hyper-iters", run_hyper_iters, "optimizer iteration cap");
  run->add_option("--gamma", run_gamma, "initial signal variance");
  run->add_option("--lengthscale", run_ls, "initial lengthscale");

  // verify-invariants
  auto* verify = app.add_subcommand("verify-invariants",
                                    "randomized projection/ordering spot checks");
  int verify_trials = 200;
  std::uint64_t verify_seed = 0;
  verify->add_option("--trials", verify_trials);
  verify->add_option("--seed", verify_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      return cmd_precompute(pre_lik == "poisson-square" ? "poisson_square" : pre_lik,
                            pre_y, pre_toy, mu_min, mu_max, mu_step, sigma_min,
                            sigma_max, log10_sigma_step, pre_out, pre_par);
    }
    if (fit_cmd->parsed()) {
      return cmd_fit(fit_schema, fit_flags, init_gamma, init_lengthscale, !no_hyperopt,
                     hyper_iters, fit_out);
    }
    if (pred->parsed()) {
      return cmd_predict(model_path, pred_schema, pred_out);
    }
    if (run->parsed()) {
      if (coal_path.empty() && run_schema.data_path.empty()) {
        throw qp::ValidationError("run-experiment: need --data or --coal-events");
      }
      return cmd_run_experiment(run_schema, run_fit, coal_path, run_name, seed_range,
                                run_folds, no_standardize, run_out_dir, run_par,
                                run_hyper_iters, run_gamma, run_ls, run_methods);
    }
    if (verify->parsed()) {
      return cmd_verify(verify_trials, verify_seed);
    }
  } catch (const qp::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const qp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
