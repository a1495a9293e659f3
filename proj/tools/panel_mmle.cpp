// Command-line front end: point estimation from CSV panels, hypothesis tests,
// replication experiments from JSON configs, and unit-root limit-law draws.
//
// Exit codes: 0 success, 1 numerical failure, 2 usage/config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "panelmmle/estimators.hpp"
#include "panelmmle/inference.hpp"
#include "panelmmle/limit_dist.hpp"
#include "panelmmle/monte_carlo.hpp"
#include "panelmmle/panel_data.hpp"
#include "panelmmle/stats_util.hpp"

namespace pm = panelmmle;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input panels are usage errors (exit 2), with line/unit context
// from the reader.
pm::PanelDataset load_panel(const std::string& path) {
  try {
    return pm::read_panel_csv(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

pm::WeightMatrix parse_weight(const std::string& text, int dim) {
  if (text.empty() || text == "identity") return pm::WeightMatrix::identity(dim);
  if (text.rfind("diag:", 0) == 0) {
    std::stringstream ss(text.substr(5));
    std::vector<double> entries;
    std::string item;
    while (std::getline(ss, item, ',')) entries.push_back(std::stod(item));
    if (static_cast<int>(entries.size()) != dim) {
      throw UsageError("--weight diag list must have " + std::to_string(dim) +
                       " entries");
    }
    Eigen::VectorXd d(dim);
    for (int i = 0; i < dim; ++i) d(i) = entries[i];
    return pm::WeightMatrix::diagonal(d);
  }
  throw UsageError("--weight must be 'identity' or 'diag:a,b,...'");
}

json theta_to_json(const pm::ThetaCommon& theta) {
  json j;
  j["rho_hat"] = theta.r;
  j["sigma2_hat"] = theta.s2;
  j["beta_hat"] = std::vector<double>(theta.b.data(), theta.b.data() + theta.b.size());
  return j;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

std::string estimates_to_csv(const json& out) {
  std::ostringstream csv;
  csv << "estimator,rho_hat,sigma2_hat,lan_exists,interior_root,used_fallback,"
         "at_boundary,second_derivative,beta_hat\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  for (const auto& entry : out.at("estimates")) {
    csv << entry.at("estimator").get<std::string>() << ","
        << fmt(entry.at("rho_hat").get<double>()) << ","
        << fmt(entry.at("sigma2_hat").get<double>()) << ","
        << (entry.at("lan_exists").get<bool>() ? 1 : 0) << ","
        << (entry.at("interior_root").get<bool>() ? 1 : 0) << ","
        << (entry.at("used_fallback").get<bool>() ? 1 : 0) << ","
        << (entry.at("at_boundary").get<bool>() ? 1 : 0) << ","
        << fmt(entry.at("second_derivative").get<double>()) << ",";
    const auto& beta = entry.at("beta_hat");
    for (std::size_t j = 0; j < beta.size(); ++j) {
      if (j > 0) csv << ";";
      csv << fmt(beta[j].get<double>());
    }
    csv << "\n";
  }
  return csv.str();
}

int cmd_estimate(const std::string& data_path, const std::string& estimators_arg,
                 const std::string& out_path, const pm::SolverOptions& opts,
                 const std::string& weight_arg, double delta_sing,
                 const std::string& format) {
  if (format != "json" && format != "csv") {
    throw UsageError("--format must be json or csv");
  }
  const pm::PanelDataset panel = load_panel(data_path);
  const int dim = 2 + panel.n_covariates();
  const pm::WeightMatrix w = parse_weight(weight_arg, dim);

  std::vector<std::string> names;
  {
    std::stringstream ss(estimators_arg);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(item);
  }
  if (names.empty()) names = {"MMLE_C"};

  json out;
  out["data"] = std::filesystem::path(data_path).filename().string();
  out["n_units"] = panel.n_units();
  out["n_periods"] = panel.n_periods();
  out["n_covariates"] = panel.n_covariates();
  out["estimates"] = json::array();
  for (const auto& name : names) {
    const pm::EstimatorKind kind = pm::estimator_from_name(name);
    pm::EstimateResult result;
    switch (kind) {
      case pm::EstimatorKind::kLsdv:
        result = pm::estimate_lsdv(panel);
        break;
      case pm::EstimatorKind::kLsdvBiasCorrected:
        result = pm::estimate_lsdv_bias_corrected(panel);
        break;
      case pm::EstimatorKind::kLancaster:
      case pm::EstimatorKind::kMmleC:
        result = pm::estimate_mmle_c(panel, opts);
        break;
      case pm::EstimatorKind::kMmleW:
        result = pm::estimate_mmle_w(panel, w, opts);
        break;
      case pm::EstimatorKind::kMmleF:
        result = pm::estimate_mmle_f(panel, w, opts);
        break;
    }
    json entry = theta_to_json(result.theta);
    entry["estimator"] = pm::estimator_name(kind);
    entry["lan_exists"] = result.lan_exists;
    entry["interior_root"] = result.interior_root;
    entry["used_fallback"] = result.used_fallback;
    entry["at_boundary"] = result.at_boundary;
    entry["kappa_roots"] = result.kappa_roots;
    entry["second_derivative"] = result.second_derivative;
    const bool is_mmle = kind == pm::EstimatorKind::kLancaster ||
                         kind == pm::EstimatorKind::kMmleC ||
                         kind == pm::EstimatorKind::kMmleW ||
                         kind == pm::EstimatorKind::kMmleF;
    if (!is_mmle) {
      entry["covariance"] = nullptr;
    } else if (std::abs(result.theta.r) < 1.0 - delta_sing) {
      const pm::AsymptoticMoments cov =
          pm::asymptotic_covariance(panel, result.theta, delta_sing);
      entry["covariance"] = matrix_to_json(cov.covariance);
    } else {
      entry["covariance"] = nullptr;
      entry["covariance_note"] =
          "point estimate within the near-unity band: the sandwich covariance "
          "is invalid; use the QLM or Wald unit-root procedures";
    }
    out["estimates"].push_back(entry);
  }

  const std::string text =
      format == "csv" ? estimates_to_csv(out) : out.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    f << text;
  }
  return 0;
}

// --h0 syntax: "rho=0.8" or "rho=1,beta=0" (all covariate coefficients zero).
pm::Hypothesis parse_hypothesis(const std::string& text, int n_covariates) {
  std::optional<double> rho_value;
  bool zero_beta = false;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--h0 items must look like name=value");
    const std::string name = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (name == "rho") {
      rho_value = std::stod(value);
    } else if (name == "beta") {
      if (std::stod(value) != 0.0) {
        throw UsageError("joint beta restrictions support beta=0 only");
      }
      zero_beta = true;
    } else {
      throw UsageError("unknown --h0 component: " + name);
    }
  }
  if (!rho_value) throw UsageError("--h0 must include rho=<value>");
  if (zero_beta) {
    if (n_covariates == 0) throw UsageError("beta=0 requires covariates in the data");
    pm::Hypothesis h = pm::Hypothesis::unit_root_and_zero_beta(n_covariates);
    h.a(0) = *rho_value;
    return h;
  }
  return pm::Hypothesis::rho_equals(*rho_value, n_covariates);
}

int cmd_test(const std::string& data_path, const std::string& h0,
             const std::string& variant, double alpha, const std::string& out_path,
             const pm::SolverOptions& opts) {
  const pm::PanelDataset panel = load_panel(data_path);
  json out;
  out["data"] = data_path;
  out["h0"] = h0;
  out["alpha"] = alpha;
  if (variant == "wald") {
    const pm::WaldUnitRootResult res = pm::wald_unit_root(panel, alpha, opts);
    out["method"] = "wald_unit_root";
    out["statistic"] = res.statistic;
    out["critical_value"] = res.critical_value;
    out["var_z1"] = res.var_z1;
    out["rho_c"] = res.rho_c;
    out["reject"] = res.reject;
  } else {
    const pm::Hypothesis hypothesis = parse_hypothesis(h0, panel.n_covariates());
    pm::QlmResult res;
    if (variant == "auto") {
      res = pm::qlm_auto(panel, hypothesis);
    } else if (variant == "standard") {
      res = pm::qlm_standard(panel, hypothesis);
    } else if (variant == "unity") {
      res = pm::qlm_unity(panel, hypothesis);
    } else {
      throw UsageError("--variant must be auto|standard|unity|wald");
    }
    out["method"] = "qlm";
    out["variant"] =
        res.variant == pm::QlmVariant::kStandard ? "standard" : "unity_reformulated";
    out["statistic"] = res.statistic;
    out["dof"] = res.dof;
    out["pvalue"] = res.pvalue;
    out["reject"] = res.pvalue < alpha;
    out["sigma_v2_hat"] = res.sigma_v2_hat;
  }
  const std::string text = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    f << text;
  }
  return 0;
}

template <typename T>
T config_get(const json& j, const std::string& key, const char* type_name) {
  if (!j.contains(key)) throw UsageError("config error at /" + key + ": missing field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config error at /" + key + ": expected " + type_name);
  }
}

std::vector<double> config_number_list(const json& j, const std::string& key,
                                       double fallback,
                                       bool required = false) {
  if (!j.contains(key)) {
    if (required) throw UsageError("config error at /" + key + ": missing field");
    return {fallback};
  }
  const json& node = j.at(key);
  std::vector<double> values;
  if (node.is_number()) {
    values.push_back(node.get<double>());
  } else if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].is_number()) {
        throw UsageError("config error at /" + key + "/" + std::to_string(i) +
                         ": expected number");
      }
      values.push_back(node[i].get<double>());
    }
  } else {
    throw UsageError("config error at /" + key + ": expected number or array");
  }
  if (values.empty()) throw UsageError("config error at /" + key + ": empty list");
  return values;
}

std::vector<std::string> config_string_list(const json& j, const std::string& key) {
  const json& node = j.at(key);
  std::vector<std::string> values;
  if (node.is_string()) {
    values.push_back(node.get<std::string>());
  } else if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].is_string()) {
        throw UsageError("config error at /" + key + "/" + std::to_string(i) +
                         ": expected string");
      }
      values.push_back(node[i].get<std::string>());
    }
  } else {
    throw UsageError("config error at /" + key + ": expected string or array");
  }
  return values;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir,
                   int threads_override, int reps_override) {
  std::ifstream f(config_path);
  if (!f) throw UsageError("cannot open config: " + config_path);
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }

  pm::DesignSpec base;
  if (!cfg.contains("design")) throw UsageError("config error at /design: missing field");
  if (!cfg.contains("T")) throw UsageError("config error at /T: missing field");
  if (!cfg.contains("N")) throw UsageError("config error at /N: missing field");
  base.n_periods = config_get<int>(cfg, "T", "integer");
  base.sigma2 = cfg.value("sigma2", 1.0);
  base.time_effects = cfg.value("time_effects", false);
  base.n_reps = reps_override > 0 ? reps_override : config_get<int>(cfg, "n_reps", "integer");
  base.seed = cfg.value("seed", 20250826ULL);

  std::vector<pm::Design> designs;
  for (const std::string& name : config_string_list(cfg, "design")) {
    try {
      designs.push_back(pm::design_from_name(name));
    } catch (const std::exception&) {
      throw UsageError("config error at /design: unknown design " + name);
    }
  }
  std::vector<int> n_list;
  for (double n : config_number_list(cfg, "N", 0.0, true)) {
    n_list.push_back(static_cast<int>(n));
  }

  // Parameter blocks: either the flat (sigma_mu2 x rho) cross product or an
  // explicit "blocks" array with per-block rho lists.
  struct Block {
    double sigma_mu2;
    std::vector<double> rho;
  };
  std::vector<Block> blocks;
  if (cfg.contains("blocks")) {
    for (std::size_t i = 0; i < cfg["blocks"].size(); ++i) {
      const json& node = cfg["blocks"][i];
      if (!node.is_object() || !node.contains("rho")) {
        throw UsageError("config error at /blocks/" + std::to_string(i) +
                         ": expected object with rho");
      }
      Block block;
      block.sigma_mu2 = node.value("sigma_mu2", 1.0);
      block.rho = config_number_list(node, "rho", 0.5, true);
      blocks.push_back(block);
    }
  } else {
    const std::vector<double> rho_list = config_number_list(cfg, "rho", 0.5, true);
    for (double mu : config_number_list(cfg, "sigma_mu2", 1.0)) {
      blocks.push_back(Block{mu, rho_list});
    }
  }

  std::vector<pm::EstimatorKind> estimators;
  if (cfg.contains("estimators")) {
    for (std::size_t i = 0; i < cfg["estimators"].size(); ++i) {
      try {
        estimators.push_back(
            pm::estimator_from_name(cfg["estimators"][i].get<std::string>()));
      } catch (const std::exception&) {
        throw UsageError("config error at /estimators/" + std::to_string(i) +
                         ": unknown estimator");
      }
    }
  }
  struct TestRequest {
    bool track_true_rho = false;
    pm::TestSpec spec;
  };
  std::vector<TestRequest> tests;
  if (cfg.contains("tests")) {
    for (std::size_t i = 0; i < cfg["tests"].size(); ++i) {
      const json& node = cfg["tests"][i];
      if (!node.is_object() || !node.contains("h0_rho")) {
        throw UsageError("config error at /tests/" + std::to_string(i) +
                         ": expected object with h0_rho");
      }
      TestRequest request;
      if (node["h0_rho"].is_string()) {
        if (node["h0_rho"].get<std::string>() != "true-rho") {
          throw UsageError("config error at /tests/" + std::to_string(i) +
                           "/h0_rho: number or \"true-rho\"");
        }
        request.track_true_rho = true;
      } else {
        request.spec.h0_rho = node["h0_rho"].get<double>();
      }
      request.spec.alpha = node.value("alpha", 0.05);
      tests.push_back(request);
    }
  }
  if (estimators.empty() && tests.empty()) {
    throw UsageError("config error at /estimators: need estimators or tests");
  }

  pm::SolverOptions opts;
  if (cfg.contains("solver")) {
    const json& s = cfg["solver"];
    opts.r_max = s.value("rmax", opts.r_max);
    opts.grid_step = s.value("grid_step", opts.grid_step);
    opts.tol = s.value("tol", opts.tol);
    opts.multistarts = s.value("multistarts", opts.multistarts);
  }
  const int threads =
      threads_override > 0 ? threads_override : cfg.value("threads", 0);

  pm::McTable table;
  for (pm::Design design : designs) {
    for (int n_units : n_list) {
      for (const Block& block : blocks) {
        for (double rho : block.rho) {
          if (std::abs(rho) > 1.0) {
            throw UsageError("config error at /rho: values must lie in [-1, 1]");
          }
          pm::DesignSpec spec = base;
          spec.design = design;
          spec.n_units = n_units;
          spec.sigma_mu2 = block.sigma_mu2;
          spec.rho = rho;
          std::vector<pm::TestSpec> test_specs;
          for (const TestRequest& request : tests) {
            pm::TestSpec t = request.spec;
            if (request.track_true_rho) t.h0_rho = rho;
            test_specs.push_back(t);
          }
          const pm::McTable part =
              pm::run_experiment(spec, estimators, test_specs, threads, opts);
          table.rows.insert(table.rows.end(), part.rows.begin(), part.rows.end());
          std::cerr << "done: design=" << pm::design_name(spec.design)
                    << " N=" << n_units << " sigma_mu2=" << block.sigma_mu2
                    << " rho=" << rho << "\n";
        }
      }
    }
  }

  std::filesystem::path out_path(out_dir);
  std::filesystem::create_directories(out_path);
  const std::string stem = std::filesystem::path(config_path).stem().string();
  const std::string out_file = (out_path / (stem + "_results.csv")).string();
  std::ofstream out(out_file);
  if (!out) throw std::runtime_error("cannot write " + out_file);
  out << table.to_csv();
  std::cout << out_file << "\n";
  return 0;
}

int cmd_limitdist(int T, std::int64_t draws, std::uint64_t seed, double sigma2,
                  const std::string& out_path, const std::string& compare_arg,
                  int compare_reps) {
  if (!compare_arg.empty()) {
    std::vector<int> n_list;
    std::stringstream ss(compare_arg);
    std::string item;
    while (std::getline(ss, item, ',')) n_list.push_back(std::stoi(item));
    const auto rows = pm::compare_finite_sample_to_limit(T, sigma2, n_list,
                                                         compare_reps, seed);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << "N,ks_rho,ks_sigma,atom_share\n";
    for (const auto& row : rows) {
      out << row.n_units << "," << row.ks_rho << "," << row.ks_sigma << ","
          << row.atom_share << "\n";
    }
    std::cout << out_path << "\n";
    return 0;
  }

  const auto draws_vec = pm::draw_unit_root_limit(T, sigma2, 0, draws, seed);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "z1,z2,v0,v4,v5,rc,rho_component,rho_component_tiebreak,"
         "sigma_component\n";
  char buf[256];
  for (const auto& d : draws_vec) {
    std::snprintf(buf, sizeof(buf),
                  "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  d.z1, d.z2, d.v0, d.v4, d.v5, d.rc, d.rho_component,
                  d.rho_component_tiebreak, d.sigma_component);
    out << buf;
  }
  std::cout << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modified ML estimation and uniform inference for the panel "
               "AR(1) model with fixed effects"};
  app.require_subcommand(1);

  pm::SolverOptions opts;
  std::string weight_arg = "identity";

  auto add_solver_flags = [&](CLI::App* cmd) {
    cmd->add_option("--rmax", opts.r_max, "Upper end of the rho search interval");
    cmd->add_option("--grid-step", opts.grid_step, "Fallback grid resolution");
    cmd->add_option("--tol", opts.tol, "Refinement tolerance");
    cmd->add_option("--multistarts", opts.multistarts, "Weighted-score starts");
    cmd->add_option("--weight", weight_arg, "identity or diag:a,b,...");
  };

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate from a CSV panel");
  std::string data_path, out_path, estimators_arg = "MMLE_C,LSDV";
  std::string est_format = "json";
  double delta_sing = 0.02;
  est->add_option("--data", data_path, "Panel CSV path")->required();
  est->add_option("--out", out_path, "Output path (stdout when empty)");
  est->add_option("--format", est_format, "json or csv");
  est->add_option("--estimators", estimators_arg,
                  "Comma list: LSDV,LSDV_HT,LAN,MMLE_C,MMLE_W,MMLE_F");
  est->add_option("--delta-sing", delta_sing,
                  "Near-unity band refusing the sandwich covariance");
  add_solver_flags(est);

  // test
  auto* tst = app.add_subcommand("test", "Quasi-LM / Wald hypothesis tests");
  std::string h0 = "rho=1", variant = "auto";
  double alpha = 0.05;
  std::string test_data, test_out;
  tst->add_option("--data", test_data, "Panel CSV path")->required();
  tst->add_option("--h0", h0, "Hypothesis, e.g. rho=0.8 or rho=1,beta=0");
  tst->add_option("--variant", variant, "auto|standard|unity|wald");
  tst->add_option("--alpha", alpha, "Nominal level");
  tst->add_option("--out", test_out, "Output JSON path (stdout when empty)");
  add_solver_flags(tst);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a replication study config");
  std::string config_path, out_dir = ".";
  int threads = 0, reps_override = 0;
  exp->add_option("--config", config_path, "JSON config path")->required();
  exp->add_option("--out-dir", out_dir, "Directory for result tables");
  exp->add_option("--threads", threads, "Worker threads (0 = auto)");
  exp->add_option("--reps", reps_override, "Override replication count");

  // limitdist
  auto* lim = app.add_subcommand("limitdist", "Unit-root limit-law simulation");
  int lim_T = 4;
  std::int64_t lim_draws = 100000;
  std::uint64_t lim_seed = 7;
  double lim_sigma2 = 1.0;
  std::string lim_out = "limit.csv", compare_arg;
  int compare_reps = 2000;
  lim->add_option("--T", lim_T, "Panel length")->required();
  lim->add_option("--draws", lim_draws, "Number of limit draws");
  lim->add_option("--seed", lim_seed, "Seed");
  lim->add_option("--sigma2", lim_sigma2, "Error variance");
  lim->add_option("--out", lim_out, "Output CSV path");
  lim->add_option("--compare", compare_arg,
                  "Comma list of N for a finite-sample comparison instead");
  lim->add_option("--compare-reps", compare_reps, "Replications per N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (est->parsed()) {
      return cmd_estimate(data_path, estimators_arg, out_path, opts, weight_arg,
                          delta_sing, est_format);
    }
    if (tst->parsed()) {
      return cmd_test(test_data, h0, variant, alpha, test_out, opts);
    }
    if (exp->parsed()) {
      return cmd_experiment(config_path, out_dir, threads, reps_override);
    }
    if (lim->parsed()) {
      return cmd_limitdist(lim_T, lim_draws, lim_seed, lim_sigma2, lim_out,
                           compare_arg, compare_reps);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
