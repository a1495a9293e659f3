#include "panelmmle/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "panelmmle/roots.hpp"

namespace panelmmle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Below this value of c = sigma2_lsdv/(s_y2(1-r2)), the panel fits the AR(1)
// recursion exactly and the LSDV point is the score root itself.
constexpr double kDegenerateC = 1e-13;

ThetaCommon theta_at(const WithinMoments& m, double r) {
  ThetaCommon theta;
  theta.r = r;
  theta.b = m.beta_profiled(r);
  theta.s2 = profiled_sigma2(m, r, theta.b);
  return theta;
}

double squared_score(const ConcentratedStats& stats, double r) {
  const double g = concentrated_score(stats, stats.n_periods, r, 1);
  return g * g;
}

bool soc_holds(const ConcentratedStats& stats, double r, double soc_tol) {
  return concentrated_score(stats, stats.n_periods, r, 2) <= soc_tol;
}

// Roots of kappa on [max(-1, rho_lsdv), +inf), ascending.
std::vector<double> kappa_roots_in_domain(const ConcentratedStats& stats) {
  if (stats.c_ratio <= kDegenerateC) {
    // kappa factors as (r - rho)(xi'(r)(r - rho) - 1); the LSDV point is an
    // exact root.
    std::vector<double> roots{stats.rho_lsdv};
    const Eigen::VectorXd coeffs = score_numerator_coefficients(stats);
    for (double x : real_polynomial_roots(coeffs)) {
      if (x > stats.rho_lsdv + 1e-10 && x >= -1.0) roots.push_back(x);
    }
    return roots;
  }
  const Eigen::VectorXd coeffs = score_numerator_coefficients(stats);
  const double lo = std::max(-1.0, stats.rho_lsdv);
  std::vector<double> kept;
  for (double x : real_polynomial_roots(coeffs)) {
    if (x >= lo - 1e-12) kept.push_back(x);
  }
  return kept;
}

struct GridMinimum {
  bool feasible = false;
  double r = 0.0;
  double objective = kInf;
  bool at_boundary = false;
  int evaluations = 0;
};

// Minimizes the squared concentrated score over r in [-1, r_max] subject to
// the second-order condition, by grid scan plus golden-section refinement.
GridMinimum constrained_grid_minimum(const ConcentratedStats& stats,
                                     const SolverOptions& opts) {
  GridMinimum best;
  const double lo = -1.0;
  const double hi = opts.r_max;
  const int n_steps = static_cast<int>(std::ceil((hi - lo) / opts.grid_step));
  for (int k = 0; k <= n_steps; ++k) {
    const double r = std::min(lo + k * opts.grid_step, hi);
    if (!soc_holds(stats, r, opts.soc_tol)) continue;
    const double f = squared_score(stats, r);
    ++best.evaluations;
    if (f < best.objective) {
      best.feasible = true;
      best.objective = f;
      best.r = r;
    }
  }
  if (!best.feasible) return best;

  auto penalized = [&](double r) {
    return soc_holds(stats, r, opts.soc_tol) ? squared_score(stats, r) : kInf;
  };
  double a = std::max(lo, best.r - opts.grid_step);
  double b = std::min(hi, best.r + opts.grid_step);
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - golden * (b - a);
  double x2 = a + golden * (b - a);
  double f1 = penalized(x1);
  double f2 = penalized(x2);
  while (b - a > opts.tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - golden * (b - a);
      f1 = penalized(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + golden * (b - a);
      f2 = penalized(x2);
    }
    ++best.evaluations;
  }
  const double mid = 0.5 * (a + b);
  const double fm = penalized(mid);
  if (fm < best.objective) {
    best.r = mid;
    best.objective = fm;
  }
  best.at_boundary = (best.r - lo < 10 * opts.tol) || (hi - best.r < 10 * opts.tol);
  return best;
}

}  // namespace

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kLsdv: return "LSDV";
    case EstimatorKind::kLsdvBiasCorrected: return "LSDV_HT";
    case EstimatorKind::kLancaster: return "LAN";
    case EstimatorKind::kMmleC: return "MMLE_C";
    case EstimatorKind::kMmleW: return "MMLE_W";
    case EstimatorKind::kMmleF: return "MMLE_F";
  }
  return "UNKNOWN";
}

EstimatorKind estimator_from_name(const std::string& name) {
  if (name == "LSDV") return EstimatorKind::kLsdv;
  if (name == "LSDV_HT") return EstimatorKind::kLsdvBiasCorrected;
  if (name == "LAN") return EstimatorKind::kLancaster;
  if (name == "MMLE_C") return EstimatorKind::kMmleC;
  if (name == "MMLE_W") return EstimatorKind::kMmleW;
  if (name == "MMLE_F") return EstimatorKind::kMmleF;
  throw std::invalid_argument("unknown estimator: " + name);
}

WeightMatrix WeightMatrix::identity(int dim) {
  return WeightMatrix{Eigen::MatrixXd::Identity(dim, dim)};
}

WeightMatrix WeightMatrix::diagonal(const Eigen::VectorXd& d) {
  return WeightMatrix{d.asDiagonal().toDenseMatrix()};
}

void WeightMatrix::validate() const {
  if (w.rows() != w.cols()) throw std::invalid_argument("weight matrix must be square");
  if (!w.isApprox(w.transpose(), 1e-12)) {
    throw std::invalid_argument("weight matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument("weight matrix must be positive definite");
  }
}

LanExistence lan_existence(const ConcentratedStats& stats, double r_max,
                           double soc_tol) {
  LanExistence out;
  for (double root : kappa_roots_in_domain(stats)) {
    if (root > r_max + 1e-12) continue;
    out.roots.push_back(root);
    // On exact-fit panels the profiled likelihood rises without bound at the
    // LSDV point, which acts as the interior maximum.
    const bool degenerate_max =
        stats.c_ratio <= kDegenerateC && root == stats.rho_lsdv;
    if (degenerate_max || soc_holds(stats, root, soc_tol)) out.exists = true;
  }
  return out;
}

LanExistence lan_existence(const PanelDataset& data, double r_max, double soc_tol) {
  return lan_existence(concentrated_stats(data), r_max, soc_tol);
}

EstimateResult estimate_lsdv(const WithinMoments& m) {
  const LsdvSolution sol = solve_lsdv(m);
  EstimateResult out;
  out.kind = EstimatorKind::kLsdv;
  out.theta.r = sol.rho;
  out.theta.b = sol.beta;
  out.theta.s2 = sol.sigma2;
  out.interior_root = true;
  out.final_objective = 0.0;
  return out;
}

namespace {

// Replaces the expanded-moment variance by the per-unit accumulation, which
// stays accurate when the residual is tiny relative to the data.
void stabilize_sigma2(const PanelDataset& data, EstimateResult& result) {
  const double direct = profiled_sigma2(data, result.theta.r, result.theta.b);
  if (std::isfinite(direct)) result.theta.s2 = direct;
}

}  // namespace

EstimateResult estimate_lsdv(const PanelDataset& data) {
  EstimateResult result = estimate_lsdv(WithinMoments::compute(data));
  stabilize_sigma2(data, result);
  return result;
}

EstimateResult estimate_lsdv_bias_corrected(const WithinMoments& m) {
  EstimateResult out = estimate_lsdv(m);
  out.kind = EstimatorKind::kLsdvBiasCorrected;
  out.theta.r += 3.0 / (m.n_periods + 1);
  // Other components re-profiled at the corrected rho.
  out.theta.b = m.beta_profiled(out.theta.r);
  out.theta.s2 = profiled_sigma2(m, out.theta.r, out.theta.b);
  out.interior_root = false;
  return out;
}

EstimateResult estimate_lsdv_bias_corrected(const PanelDataset& data) {
  EstimateResult result = estimate_lsdv_bias_corrected(WithinMoments::compute(data));
  stabilize_sigma2(data, result);
  return result;
}

EstimateResult estimate_mmle_c(const WithinMoments& m, const SolverOptions& opts) {
  const ConcentratedStats stats = concentrated_stats(m);
  EstimateResult out;
  out.kind = EstimatorKind::kMmleC;

  const std::vector<double> roots = kappa_roots_in_domain(stats);
  out.kappa_roots = roots;

  // Stage 1: smallest root in range satisfying the second-order condition.
  const LanExistence lan = lan_existence(stats, opts.r_max, opts.soc_tol);
  out.lan_exists = lan.exists;
  if (lan.exists) {
    double chosen = kInf;
    for (double root : lan.roots) {
      const bool degenerate =
          stats.c_ratio <= kDegenerateC && root == stats.rho_lsdv;
      if (degenerate || soc_holds(stats, root, opts.soc_tol)) {
        chosen = std::min(chosen, root);
      }
    }
    if (stats.c_ratio > kDegenerateC) {
      // Newton steps on the score itself tighten the first-order condition
      // beyond the polynomial-root polish.
      const double lo = std::max(-1.0, stats.rho_lsdv);
      for (int it = 0; it < 6; ++it) {
        const double g = concentrated_score(stats, stats.n_periods, chosen, 1);
        const double dg = concentrated_score(stats, stats.n_periods, chosen, 2);
        if (dg == 0.0 || std::abs(g) < 1e-14) break;
        chosen = std::clamp(chosen - g / dg, lo, opts.r_max);
      }
    }
    out.theta = theta_at(m, chosen);
    out.interior_root = true;
    out.final_objective =
        stats.c_ratio <= kDegenerateC ? 0.0 : squared_score(stats, chosen);
    out.second_derivative =
        stats.c_ratio <= kDegenerateC
            ? -kInf
            : concentrated_score(stats, stats.n_periods, chosen, 2);
    return out;
  }

  // Stage 2: constrained minimization of the squared concentrated score.
  const GridMinimum grid = constrained_grid_minimum(stats, opts);
  if (grid.feasible) {
    out.theta = theta_at(m, grid.r);
    out.interior_root = false;
    out.at_boundary = grid.at_boundary;
    out.final_objective = grid.objective;
    out.iterations = grid.evaluations;
    out.second_derivative = concentrated_score(stats, stats.n_periods, grid.r, 2);
    return out;
  }

  // No feasible point at all: documented bias-corrected fallback.
  const double r_fb = stats.rho_lsdv + 3.0 / (stats.n_periods + 1);
  out.theta = theta_at(m, std::clamp(r_fb, -1.0, opts.r_max));
  out.interior_root = false;
  out.used_fallback = true;
  out.final_objective = squared_score(stats, out.theta.r);
  out.second_derivative = concentrated_score(stats, stats.n_periods, out.theta.r, 2);
  return out;
}

EstimateResult estimate_mmle_c(const PanelDataset& data, const SolverOptions& opts) {
  EstimateResult result = estimate_mmle_c(WithinMoments::compute(data), opts);
  stabilize_sigma2(data, result);
  return result;
}

namespace {

// Observed-Hessian negative-semidefiniteness, the feasibility constraint of
// the weighted-score estimators.
bool hessian_nsd(const WithinMoments& m, const ThetaCommon& theta, double soc_tol) {
  const Eigen::MatrixXd h = observed_hessian(m, theta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().maxCoeff() <= soc_tol * scale;
}

struct WeightedProblem {
  const WithinMoments& m;
  const ConcentratedStats& stats;
  const WeightMatrix& w;
  const SolverOptions& opts;
  bool concentrated_first;  // theta_F replaces the first score entry
  double s2_lo, s2_hi;

  // z = (r, log s2, b).
  Eigen::VectorXd pack(const ThetaCommon& theta) const {
    Eigen::VectorXd z(theta.dim());
    z(0) = theta.r;
    z(1) = std::log(theta.s2);
    if (theta.b.size() > 0) z.tail(theta.b.size()) = theta.b;
    return z;
  }

  ThetaCommon unpack(const Eigen::VectorXd& z) const {
    ThetaCommon theta;
    theta.r = z(0);
    theta.s2 = std::exp(z(1));
    theta.b = z.tail(z.size() - 2);
    return theta;
  }

  Eigen::VectorXd project(Eigen::VectorXd z) const {
    z(0) = std::clamp(z(0), -1.0, opts.r_max);
    z(1) = std::clamp(z(1), std::log(s2_lo), std::log(s2_hi));
    for (int j = 2; j < z.size(); ++j) {
      z(j) = std::clamp(z(j), -opts.beta_box, opts.beta_box);
    }
    return z;
  }

  double objective(const Eigen::VectorXd& z) const {
    const ThetaCommon theta = unpack(z);
    Eigen::VectorXd psi = score_vector(m, theta);
    if (concentrated_first) {
      psi(0) = concentrated_score(stats, stats.n_periods, theta.r, 1);
    }
    return psi.dot(w.w * psi);
  }

  bool feasible(const Eigen::VectorXd& z) const {
    return hessian_nsd(m, unpack(z), opts.soc_tol);
  }
};

struct LocalMinimum {
  Eigen::VectorXd z;
  double objective = kInf;
  int iterations = 0;
  bool found = false;
};

// Projected quasi-Newton (BFGS with box projection); steps that leave the
// negative-semidefinite feasible set are rejected by backtracking.
LocalMinimum minimize_weighted(const WeightedProblem& problem, Eigen::VectorXd z0) {
  LocalMinimum result;
  z0 = problem.project(z0);
  if (!problem.feasible(z0)) return result;

  const int dim = static_cast<int>(z0.size());
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd z = z0;
  double f = problem.objective(z);

  auto gradient = [&](const Eigen::VectorXd& at) {
    Eigen::VectorXd g(dim);
    for (int j = 0; j < dim; ++j) {
      const double h = 1e-6 * (1.0 + std::abs(at(j)));
      Eigen::VectorXd zp = at, zm = at;
      zp(j) += h;
      zm(j) -= h;
      g(j) = (problem.objective(zp) - problem.objective(zm)) / (2.0 * h);
    }
    return g;
  };

  Eigen::VectorXd g = gradient(z);
  int it = 0;
  for (; it < problem.opts.max_iterations; ++it) {
    Eigen::VectorXd direction = -h_inv * g;
    if (direction.dot(g) > 0.0) direction = -g;  // reset on loss of descent

    double step = 1.0;
    bool moved = false;
    Eigen::VectorXd z_new;
    double f_new = f;
    for (int ls = 0; ls < 40; ++ls) {
      z_new = problem.project(z + step * direction);
      if (problem.feasible(z_new)) {
        f_new = problem.objective(z_new);
        if (f_new < f - 1e-12 * std::abs(f)) {
          moved = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!moved) break;

    const Eigen::VectorXd g_new = gradient(z_new);
    const Eigen::VectorXd s = z_new - z;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14) {
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
      const Eigen::MatrixXd v = eye - s * y.transpose() / sy;
      h_inv = v * h_inv * v.transpose() + s * s.transpose() / sy;
    }
    const double improvement = f - f_new;
    z = z_new;
    f = f_new;
    g = g_new;
    if (s.norm() < problem.opts.tol && improvement < problem.opts.tol * (1.0 + f)) {
      break;
    }
  }
  result.z = z;
  result.objective = f;
  result.iterations = it;
  result.found = true;
  return result;
}

EstimateResult estimate_weighted(const WithinMoments& m, const WeightMatrix& w,
                                 const SolverOptions& opts, bool concentrated_first) {
  w.validate();
  if (w.w.rows() != 2 + m.n_covariates) {
    throw std::invalid_argument("weight matrix dimension must be 2 + K");
  }
  const ConcentratedStats stats = concentrated_stats(m);

  EstimateResult out;
  out.kind = concentrated_first ? EstimatorKind::kMmleF : EstimatorKind::kMmleW;

  // Interior case: identical to the concentrated MMLE for any weight matrix.
  EstimateResult c = estimate_mmle_c(m, opts);
  out.kappa_roots = c.kappa_roots;
  out.lan_exists = c.lan_exists;
  if (c.interior_root) {
    out.theta = c.theta;
    out.interior_root = true;
    out.final_objective = 0.0;
    out.second_derivative = c.second_derivative;
    return out;
  }

  WeightedProblem problem{m,
                          stats,
                          w,
                          opts,
                          concentrated_first,
                          opts.s2_min_factor * stats.sigma2_lsdv,
                          opts.s2_max_factor * stats.sigma2_lsdv};

  // Multistart seeds along the profiled path, with variance perturbations.
  std::vector<ThetaCommon> seeds;
  const double r_grid_best = c.theta.r;  // stage-2 solution of the C estimator
  for (double r : {stats.rho_lsdv, stats.rho_lsdv + 3.0 / (stats.n_periods + 1), 1.0,
                   r_grid_best}) {
    const double rc = std::clamp(r, -1.0, opts.r_max);
    ThetaCommon seed = theta_at(m, rc);
    seeds.push_back(seed);
    ThetaCommon lo = seed, hi = seed;
    lo.s2 *= 0.5;
    hi.s2 *= 2.0;
    seeds.push_back(lo);
    seeds.push_back(hi);
  }

  LocalMinimum best;
  int starts = 0;
  int total_iterations = 0;
  for (const auto& seed : seeds) {
    if (starts >= opts.multistarts && best.found) break;
    ++starts;
    LocalMinimum candidate = minimize_weighted(problem, problem.pack(seed));
    total_iterations += candidate.iterations;
    if (candidate.found && candidate.objective < best.objective) {
      best = candidate;
    }
  }
  best.iterations = total_iterations;

  if (!best.found) {
    // Constraint violated everywhere we looked: bias-corrected fallback.
    const double r_fb =
        std::clamp(stats.rho_lsdv + 3.0 / (stats.n_periods + 1), -1.0, opts.r_max);
    out.theta = theta_at(m, r_fb);
    out.used_fallback = true;
    return out;
  }

  out.theta = problem.unpack(best.z);
  out.interior_root = false;
  out.iterations = best.iterations;
  out.final_objective = best.objective;
  out.at_boundary = (out.theta.r + 1.0 < 10 * opts.tol) ||
                    (opts.r_max - out.theta.r < 10 * opts.tol);
  {
    const Eigen::MatrixXd h = observed_hessian(m, out.theta);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
    out.second_derivative = es.eigenvalues().maxCoeff();
  }
  return out;
}

}  // namespace

EstimateResult estimate_mmle_w(const WithinMoments& m, const WeightMatrix& w,
                               const SolverOptions& opts) {
  return estimate_weighted(m, w, opts, /*concentrated_first=*/false);
}

EstimateResult estimate_mmle_w(const PanelDataset& data, const WeightMatrix& w,
                               const SolverOptions& opts) {
  EstimateResult result = estimate_mmle_w(WithinMoments::compute(data), w, opts);
  if (result.interior_root) stabilize_sigma2(data, result);
  return result;
}

EstimateResult estimate_mmle_f(const WithinMoments& m, const WeightMatrix& w,
                               const SolverOptions& opts) {
  return estimate_weighted(m, w, opts, /*concentrated_first=*/true);
}

EstimateResult estimate_mmle_f(const PanelDataset& data, const WeightMatrix& w,
                               const SolverOptions& opts) {
  EstimateResult result = estimate_mmle_f(WithinMoments::compute(data), w, opts);
  if (result.interior_root) stabilize_sigma2(data, result);
  return result;
}

}  // namespace panelmmle
