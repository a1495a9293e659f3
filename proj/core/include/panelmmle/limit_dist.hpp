#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace panelmmle {

// Analytic constants of the limiting concentrated log-likelihood at the unit
// root for a panel of length T: derivative limits l3..l5 and the covariance
// structure of the Gaussian functionals (V1, V2, V3).
struct LimitLawParams {
  int n_periods = 0;
  double l3 = 0.0;  // lim d^3/dr^3 at r=1:  T(T-1)(T+1)/12
  double l4 = 0.0;  // lim d^4/dr^4 at r=1
  double l5 = 0.0;  // lim d^5/dr^5 at r=1
  double var_v1 = 0.0, var_v2 = 0.0, var_v3 = 0.0;
  double cov_v1v2 = 0.0, cov_v1v3 = 0.0, cov_v2v3 = 0.0;
  double var_z1 = 0.0;  // 48 T^{-2} ((T-1)(T+1))^{-1}
  double var_v4 = 0.0;  // (T-1)(T+1)/12
  double var_v0 = 0.0;  // (T-1)(T+1)(4T^2-1)/180

  static LimitLawParams from_periods(int n_periods);
  double k_plus(double sigma2) const;  // sigma^2 (T+1)/6
};

// Coefficients of the sign functional decomposition
//   l3 * R^c = k0 V4^3 + k1 V4^2 V0 + k2 V4 V0^2 + k3 V0^3.
struct SignCubicCoefficients {
  double k0 = 0.0, k1 = 0.0, k2 = 0.0, k3 = 0.0;
};
SignCubicCoefficients sign_cubic_coefficients(int n_periods);

// One draw from the limit law at the unit root.  Two sign conventions are
// carried for the rho component: `rho_component` applies the one-sided
// selection realized by the constrained estimator (the smaller score root is
// the unique local maximum, which lies below unity whenever the score at
// unity is negative), while `rho_component_tiebreak` applies the cubic sign
// functional R^c of the remainder expansion.
struct LimitDraw {
  double z1 = 0.0, z2 = 0.0;
  Eigen::VectorXd z3;
  double v0 = 0.0, v4 = 0.0, v5 = 0.0;
  double rc = 0.0;                       // sign functional R^c
  double rho_component = 0.0;           // -sqrt(Z1) 1{Z1>0}
  double rho_component_tiebreak = 0.0;  // (-1)^{B^c} sqrt(Z1) 1{Z1>0}
  double sigma_component = 0.0;  // (Z2 + K+ Z1) 1{Z1>0} + Z2 1{Z1<=0}
};

std::vector<LimitDraw> draw_unit_root_limit(
    int n_periods, double sigma2, int n_covariates, std::int64_t n_draws,
    std::uint64_t seed, const Eigen::MatrixXd& sigma_xqx = Eigen::MatrixXd());

// Weighted-score variant of the limit law restricted to block-diagonal
// weights, where the sigma/beta components are explicit; the sign functional
// for general weights is exposed as experimental (it coincides with the
// concentrated one in the heavily-first-weighted limit).
std::vector<LimitDraw> draw_weighted_limit_blockdiag(
    int n_periods, double sigma2, std::int64_t n_draws, std::uint64_t seed);

struct ConditionalSignResult {
  double conditional_mean = 0.0;  // E((-1)^{B^c} Z1^{1/2} | Z1 > 0)
  double std_error = 0.0;
  std::int64_t n_conditioned = 0;
};
ConditionalSignResult conditional_sign_expectation(int n_periods, std::int64_t n_draws,
                                 std::uint64_t seed);

// Simulates unit-root panels, computes N^{1/4}(rho_C - 1) and
// N^{1/2}(sigma2_{n,C} - sigma2), and reports the Kolmogorov-Smirnov distance
// to the simulated limit law for each N.
struct LimitComparisonRow {
  int n_units = 0;
  double ks_rho = 0.0;
  double ks_sigma = 0.0;
  double atom_share = 0.0;  // fraction of replications without an interior root
};
std::vector<LimitComparisonRow> compare_finite_sample_to_limit(
    int n_periods, double sigma2, const std::vector<int>& n_units_list,
    int n_reps, std::uint64_t seed, std::int64_t n_limit_draws = 200000,
    int n_threads = 0);

// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace panelmmle
