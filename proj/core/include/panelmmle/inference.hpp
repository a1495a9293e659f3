#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "panelmmle/estimators.hpp"
#include "panelmmle/moments.hpp"
#include "panelmmle/panel_data.hpp"
#include "panelmmle/theta.hpp"

namespace panelmmle {

// Lower-triangular shift-power matrix Phi(rho): Phi[t][s] = rho^{t-s-1} for
// t > s, zero otherwise; and the power vector phi(rho) = (1, rho, ..., rho^{T-1}).
Eigen::MatrixXd shift_power_matrix(int n_periods, double rho);
Eigen::VectorXd power_vector(int n_periods, double rho);

// Phi(rho) iota = (0, 1, 1+rho, ..., sum_{s<T-1} rho^s): the loading of the
// unit effect v_i in the lagged series.
Eigen::VectorXd cumulative_power_vector(int n_periods, double rho);

// Cross-sectional limit moments entering the expected Hessian; all plug-in
// estimates.  sigma_zqz/sigma_xqz describe Z_i = phi v_i + Phi Q X_i beta.
struct LimitMomentPlugins {
  double sigma_zqz = 0.0;
  Eigen::VectorXd sigma_xqz;  // K
  Eigen::MatrixXd sigma_xqx;  // K x K, N^{-1} sum X'QX
  double sigma_v2 = 0.0;
};

// Expected Hessian (MH) and modified information matrix (MIM) in the original
// parametrization, at (rho, sigma2) with the given plug-in moments.
Eigen::MatrixXd modified_hessian(int n_periods, double rho, double sigma2,
                                 const LimitMomentPlugins& plugins);
Eigen::MatrixXd modified_information(int n_periods, double rho, double sigma2,
                                     const LimitMomentPlugins& plugins);

struct AsymptoticMoments {
  Eigen::MatrixXd mh;
  Eigen::MatrixXd mim;
  Eigen::MatrixXd sandwich;    // MH^{-1} MIM MH^{-1}
  Eigen::MatrixXd covariance;  // sandwich / N
  LimitMomentPlugins plugins;
};

// First-order sandwich covariance of the MMLEs, valid for |rho| < 1 - delta.
// Throws near-singularity error when |theta.r| >= 1 - delta_sing.
AsymptoticMoments asymptotic_covariance(const PanelDataset& data,
                                        const ThetaCommon& theta,
                                        double delta_sing = 0.02);

// Expected Hessian of the reparametrized likelihood at theta_n, built as
// J' MH J with J = d theta / d theta_n and sigma_v^2 reconstructed from
// sigbar_v2n.  X-dependent moments are supplied when covariates are present.
Eigen::MatrixXd expected_hessian_reparam(int n_periods, const ReparamTheta& theta_n,
                                         const LimitMomentPlugins& plugins);
Eigen::MatrixXd expected_hessian_reparam(int n_periods, const ReparamTheta& theta_n);

// Hypothesis A theta_n = a on the reparametrized parameter.  Rows of A must
// each select a single coordinate (r_n, s2_n, or a component of b_n).
struct Hypothesis {
  Eigen::MatrixXd A;
  Eigen::VectorXd a;

  static Hypothesis rho_equals(double value, int n_covariates);
  // rho = 1 jointly with b = 0 (the covariate-free unit root null).
  static Hypothesis unit_root_and_zero_beta(int n_covariates);

  int n_restrictions() const { return static_cast<int>(A.rows()); }
  bool pins_rho() const;
  double pinned_rho() const;
  bool pins_unity() const;
};

enum class QlmVariant { kStandard, kUnityReformulated };

struct QlmResult {
  double statistic = 0.0;
  int dof = 0;
  double pvalue = 1.0;
  QlmVariant variant = QlmVariant::kStandard;
  ReparamTheta restricted_theta;
  double sigma_v2_hat = 0.0;
};

// Restricted estimate under the hypothesis (r pinned, free elements of
// (s2, b) profiled), plus the moment estimate of sigma_v^2 / sigbar_v2n.
struct RestrictedFit {
  ThetaCommon theta;
  ReparamTheta theta_n;
  double sigma_v2_hat = 0.0;
  LimitMomentPlugins plugins;
};
RestrictedFit restricted_fit(const PanelDataset& data, const Hypothesis& hypothesis);

// Quasi-LM statistic with expected Hessian (chi-square(J) under H0).  Uses the
// adjugate form, which leaves the statistic unchanged and stays well defined
// when the expected Hessian degenerates at the unit root.
QlmResult qlm_standard(const PanelDataset& data, const Hypothesis& hypothesis,
                       bool center_outer_products = false);

// Reformulated statistic for hypotheses that pin rho = 1 jointly with other
// restrictions (J >= 2): the first score entry becomes half the second
// derivative and the expected Hessian uses fourth/third/second derivative
// blocks with 2/4!, 1/2!, 2/2! weights.
QlmResult qlm_unity(const PanelDataset& data, const Hypothesis& hypothesis);

// Dispatches to qlm_unity iff the hypothesis pins rho = 1 with J >= 2.
QlmResult qlm_auto(const PanelDataset& data, const Hypothesis& hypothesis);

struct WaldUnitRootResult {
  double statistic = 0.0;       // sqrt(N) (rho_C - 1)^2
  double critical_value = 0.0;  // sd(Z1) * Phi^{-1}(1 - alpha)
  bool reject = false;
  double var_z1 = 0.0;          // 48 T^{-2} ((T-1)(T+1))^{-1}
  double rho_c = 0.0;
};

WaldUnitRootResult wald_unit_root(const PanelDataset& data, double alpha,
                                  const SolverOptions& opts = {});

// Inverts the QLM test over a grid of rho values; returns the non-rejected
// grid points grouped into closed intervals.
struct ConfidenceSet {
  std::vector<std::pair<double, double>> intervals;
  std::vector<double> accepted;
  bool contains(double rho) const;
};
ConfidenceSet qlm_confidence_set(const PanelDataset& data, double alpha,
                                 const std::vector<double>& grid);

// Expected derivatives of the reparametrized likelihood used by qlm_unity,
// computed from exact trace formulas under the hypothesized parameter.
struct UnityHessianBlocks {
  double h11 = 0.0;            // (2/4!) E d^4 l_n / dr^4
  Eigen::VectorXd h12;         // (1/2!) E d^3 l_n / dr^2 d(d_n)
  Eigen::MatrixXd h22;         // (2/2!) E d^2 l_n / d(d_n) d(d_n)'
  Eigen::MatrixXd assembled;   // full (2+K) x (2+K) matrix
};
UnityHessianBlocks unity_hessian_blocks(int n_periods, const ReparamTheta& theta_n,
                                        const LimitMomentPlugins& plugins);

// Chi-square upper tail probability and quantile (regularized gamma).
double chi_square_upper_tail(double x, int dof);
double chi_square_quantile(double p, int dof);
double normal_quantile(double p);

}  // namespace panelmmle
