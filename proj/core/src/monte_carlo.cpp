#include "panelmmle/monte_carlo.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "panelmmle/rng.hpp"
#include "panelmmle/stats_util.hpp"

namespace panelmmle {

std::string design_name(Design design) {
  switch (design) {
    case Design::kS: return "S";
    case Design::kNs: return "NS";
    case Design::kSChisq: return "S_CHISQ";
  }
  return "UNKNOWN";
}

Design design_from_name(const std::string& name) {
  if (name == "S") return Design::kS;
  if (name == "NS") return Design::kNs;
  if (name == "S_CHISQ" || name == "S-CHISQ" || name == "S_ChiSq")
    return Design::kSChisq;
  throw std::invalid_argument("unknown design: " + name);
}

void DesignSpec::validate() const {
  if (n_periods < 2) throw std::invalid_argument("design requires T >= 2");
  if (n_units < 2) throw std::invalid_argument("design requires N >= 2");
  if (std::abs(rho) > 1.0) throw std::invalid_argument("design requires |rho| <= 1");
  if (sigma2 <= 0.0) throw std::invalid_argument("design requires sigma2 > 0");
  if (sigma_mu2 < 0.0) throw std::invalid_argument("design requires sigma_mu2 >= 0");
  if (n_reps < 1) throw std::invalid_argument("design requires n_reps >= 1");
}

PanelDataset generate_panel(const DesignSpec& spec, std::int64_t rep_index) {
  spec.validate();
  Rng rng(spec.seed, static_cast<std::uint64_t>(rep_index));
  const int n = spec.n_units;
  const int t = spec.n_periods;
  const double sigma = std::sqrt(spec.sigma2);
  const double sigma_mu = std::sqrt(spec.sigma_mu2);
  const bool chisq = spec.design == Design::kSChisq;
  const bool stationary_start =
      (spec.design == Design::kS || chisq) && std::abs(spec.rho) < 1.0;

  Eigen::VectorXd y0(n);
  Eigen::MatrixXd y(n, t);
  for (int i = 0; i < n; ++i) {
    const double mu = sigma_mu * rng.normal();
    const double alpha = (1.0 - spec.rho) * mu;
    double start = mu;
    if (stationary_start) {
      const double shock = chisq ? rng.chisq1_standardized() : rng.normal();
      start += sigma * shock / std::sqrt(1.0 - spec.rho * spec.rho);
    }
    y0(i) = start;
    double prev = start;
    for (int s = 0; s < t; ++s) {
      const double shock = chisq ? rng.chisq1_standardized() : rng.normal();
      prev = spec.rho * prev + alpha + sigma * shock;
      y(i, s) = prev;
    }
  }
  PanelDataset panel = PanelDataset::create(std::move(y0), std::move(y));
  if (spec.time_effects) panel = demean_cross_section(panel);
  return panel;
}

namespace {

struct RepOutcome {
  bool panel_ok = false;
  bool lan_exists = false;
  std::vector<double> rho_hat;   // one per estimator, NaN on failure
  std::vector<char> reject;      // one per test: 0/1, -1 on failure
};

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

McTable run_experiment(const DesignSpec& spec,
                       const std::vector<EstimatorKind>& estimators,
                       const std::vector<TestSpec>& tests, int n_threads,
                       const SolverOptions& opts) {
  spec.validate();
  const int n_estimators = static_cast<int>(estimators.size());
  const int n_tests = static_cast<int>(tests.size());
  std::vector<RepOutcome> outcomes(spec.n_reps);

  parallel_for(spec.n_reps, n_threads, [&](std::int64_t rep) {
    RepOutcome& out = outcomes[rep];
    out.rho_hat.assign(n_estimators, nan_value());
    out.reject.assign(n_tests, -1);
    PanelDataset panel = generate_panel(spec, rep);
    WithinMoments moments = WithinMoments::compute(panel);
    try {
      out.lan_exists =
          lan_existence(concentrated_stats(moments), opts.r_max, opts.soc_tol)
              .exists;
      out.panel_ok = true;
    } catch (const std::exception&) {
      out.panel_ok = false;
    }
    for (int e = 0; e < n_estimators; ++e) {
      try {
        EstimateResult result;
        switch (estimators[e]) {
          case EstimatorKind::kLsdv:
            result = estimate_lsdv(moments);
            break;
          case EstimatorKind::kLsdvBiasCorrected:
            result = estimate_lsdv_bias_corrected(moments);
            break;
          case EstimatorKind::kLancaster: {
            result = estimate_mmle_c(moments, opts);
            if (!result.lan_exists) continue;  // recorded as missing
            break;
          }
          case EstimatorKind::kMmleC:
            result = estimate_mmle_c(moments, opts);
            break;
          case EstimatorKind::kMmleW:
            result = estimate_mmle_w(
                moments, WeightMatrix::identity(2 + panel.n_covariates()), opts);
            break;
          case EstimatorKind::kMmleF:
            result = estimate_mmle_f(
                moments, WeightMatrix::identity(2 + panel.n_covariates()), opts);
            break;
        }
        out.rho_hat[e] = result.theta.r;
      } catch (const std::exception&) {
        // failure recorded as NaN and counted
      }
    }
    for (int q = 0; q < n_tests; ++q) {
      try {
        const Hypothesis h =
            Hypothesis::rho_equals(tests[q].h0_rho, panel.n_covariates());
        const QlmResult res = tests[q].use_unity_variant_auto
                                  ? qlm_auto(panel, h)
                                  : qlm_standard(panel, h);
        out.reject[q] = res.pvalue < tests[q].alpha ? 1 : 0;
      } catch (const std::exception&) {
        out.reject[q] = -1;
      }
    }
  });

  McRow row;
  row.spec = spec;
  for (int e = 0; e < n_estimators; ++e) {
    McCell cell;
    cell.estimator = estimator_name(estimators[e]);
    std::vector<double> errors;
    errors.reserve(spec.n_reps);
    for (const auto& out : outcomes) {
      if (std::isnan(out.rho_hat[e])) {
        ++cell.n_failures;
      } else {
        errors.push_back(out.rho_hat[e] - spec.rho);
      }
    }
    cell.n_reps = static_cast<int>(errors.size());
    if (!errors.empty()) {
      double sum = 0.0, sum_sq = 0.0;
      for (double err : errors) {
        sum += err;
        sum_sq += err * err;
      }
      const double n = static_cast<double>(errors.size());
      cell.bias = sum / n;
      cell.rmse = std::sqrt(sum_sq / n);
      double var_err = 0.0, var_sq = 0.0;
      for (double err : errors) {
        var_err += (err - cell.bias) * (err - cell.bias);
        var_sq += (err * err - sum_sq / n) * (err * err - sum_sq / n);
      }
      if (errors.size() > 1) {
        cell.bias_se = std::sqrt(var_err / (n - 1.0) / n);
        cell.rmse_se = cell.rmse > 0.0
                           ? std::sqrt(var_sq / (n - 1.0) / n) / (2.0 * cell.rmse)
                           : 0.0;
      }
    }
    row.cells.push_back(cell);
  }

  {
    // NM frequency over replications with a valid panel.
    double n_ok = 0.0, n_missing = 0.0;
    for (const auto& out : outcomes) {
      if (!out.panel_ok) continue;
      n_ok += 1.0;
      if (!out.lan_exists) n_missing += 1.0;
    }
    const double nm = n_ok > 0.0 ? n_missing / n_ok : 0.0;
    const double nm_se = n_ok > 0.0 ? std::sqrt(nm * (1.0 - nm) / n_ok) : 0.0;
    for (auto& cell : row.cells) {
      cell.nm = nm;
      cell.nm_se = nm_se;
    }
    if (row.cells.empty() && !tests.empty()) {
      // NM still reported through a pseudo-cell when only tests are requested.
      McCell cell;
      cell.estimator = "NONE";
      cell.nm = nm;
      cell.nm_se = nm_se;
      cell.n_reps = static_cast<int>(n_ok);
      row.cells.push_back(cell);
    }
  }

  for (int q = 0; q < n_tests; ++q) {
    McTestCell cell;
    cell.h0_rho = tests[q].h0_rho;
    cell.alpha = tests[q].alpha;
    double n_ok = 0.0, n_reject = 0.0;
    for (const auto& out : outcomes) {
      if (out.reject[q] < 0) {
        ++cell.n_failures;
        continue;
      }
      n_ok += 1.0;
      n_reject += out.reject[q];
    }
    cell.n_reps = static_cast<int>(n_ok);
    if (n_ok > 0.0) {
      cell.rejection_rate = n_reject / n_ok;
      cell.rejection_se =
          std::sqrt(cell.rejection_rate * (1.0 - cell.rejection_rate) / n_ok);
    }
    row.test_cells.push_back(cell);
  }

  McTable table;
  table.rows.push_back(std::move(row));
  return table;
}

McTestCell run_qlm_study(const DesignSpec& spec, double h0_rho, int n_threads,
                         double alpha) {
  TestSpec test;
  test.h0_rho = h0_rho;
  test.alpha = alpha;
  const McTable table = run_experiment(spec, {}, {test}, n_threads);
  return table.rows.front().test_cells.front();
}

std::string McTable::to_csv() const {
  std::ostringstream out;
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  out << "design,sigma_mu2,rho,N,T,n_reps,estimator,bias,bias_mc_se,rmse,"
         "rmse_mc_se,nm,nm_mc_se,n_failures,h0_rho,rejection_rate,"
         "rejection_mc_se\n";
  for (const auto& row : rows) {
    const std::string prefix = design_name(row.spec.design) + "," +
                               fmt(row.spec.sigma_mu2) + "," + fmt(row.spec.rho) +
                               "," + std::to_string(row.spec.n_units) + "," +
                               std::to_string(row.spec.n_periods) + "," +
                               std::to_string(row.spec.n_reps);
    for (const auto& cell : row.cells) {
      out << prefix << "," << cell.estimator << "," << fmt(cell.bias) << ","
          << fmt(cell.bias_se) << "," << fmt(cell.rmse) << "," << fmt(cell.rmse_se)
          << "," << fmt(cell.nm) << "," << fmt(cell.nm_se) << ","
          << cell.n_failures << ",,,\n";
    }
    for (const auto& cell : row.test_cells) {
      out << prefix << ",QLM,,,,,,," << cell.n_failures << "," << fmt(cell.h0_rho)
          << "," << fmt(cell.rejection_rate) << "," << fmt(cell.rejection_se)
          << "\n";
    }
  }
  return out.str();
}

}  // namespace panelmmle
