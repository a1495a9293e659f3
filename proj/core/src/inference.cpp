#include "panelmmle/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "panelmmle/likelihood.hpp"
#include "panelmmle/penalty.hpp"

namespace panelmmle {

Eigen::MatrixXd shift_power_matrix(int n_periods, double rho) {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n_periods, n_periods);
  for (int t = 1; t < n_periods; ++t) {
    double power = 1.0;
    for (int s = t - 1; s >= 0; --s) {
      phi(t, s) = power;
      power *= rho;
    }
  }
  return phi;
}

Eigen::VectorXd power_vector(int n_periods, double rho) {
  Eigen::VectorXd v(n_periods);
  double power = 1.0;
  for (int t = 0; t < n_periods; ++t) {
    v(t) = power;
    power *= rho;
  }
  return v;
}

Eigen::VectorXd cumulative_power_vector(int n_periods, double rho) {
  // Phi(rho) iota: entry t holds 1 + rho + ... + rho^{t-2}, starting at zero.
  Eigen::VectorXd v(n_periods);
  double acc = 0.0;
  double power = 1.0;
  for (int t = 0; t < n_periods; ++t) {
    v(t) = acc;
    acc += power;
    power *= rho;
  }
  return v;
}

namespace {

Eigen::MatrixXd demean_columns(const Eigen::MatrixXd& m) {
  return m.rowwise() - m.colwise().mean();
}

// adj(M): transpose of the cofactor matrix.  Dimensions here are 2+K, so the
// minor determinants are cheap.
Eigen::MatrixXd adjugate(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd adj(n, n);
  Eigen::MatrixXd minor(n - 1, n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int mr = 0;
      for (int r = 0; r < n; ++r) {
        if (r == i) continue;
        int mc = 0;
        for (int c = 0; c < n; ++c) {
          if (c == j) continue;
          minor(mr, mc) = m(r, c);
          ++mc;
        }
        ++mr;
      }
      const double cofactor = (((i + j) % 2) ? -1.0 : 1.0) * minor.determinant();
      adj(j, i) = cofactor;
    }
  }
  return adj;
}

struct UnitEffectEstimates {
  Eigen::VectorXd vhat;
  double sigma_v2 = 0.0;
};

// Moment estimates of the unit effects v_i = (rho-1) y_{i,0} + alpha_i + ...,
// from the per-unit means of the residual written in initial-deviation form.
UnitEffectEstimates estimate_unit_effects(const PanelDataset& data, double a,
                                          const Eigen::VectorXd& b, double s2) {
  const int n = data.n_units();
  const int t = data.n_periods();
  UnitEffectEstimates out;
  out.vhat.resize(n);
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double u_mean = data.y().row(i).mean() - a * data.lagged(i).mean();
    if (b.size() > 0) u_mean -= data.x(i).colwise().mean().dot(b);
    const double vhat = u_mean - (1.0 - a) * data.y0()(i);
    out.vhat(i) = vhat;
    sum_sq += vhat * vhat;
  }
  out.sigma_v2 = std::max(sum_sq / n - s2 / t, 0.0);
  return out;
}

// The unit effect enters the lagged series through the cumulative-power
// loading: Q y_{i,-1} = Q(Phi iota) v_i + Q Phi Q X_i beta + Q Phi eps_i.
LimitMomentPlugins build_plugins(const PanelDataset& data, double a,
                                 const Eigen::VectorXd& b, double s2) {
  const int n = data.n_units();
  const int t = data.n_periods();
  const int k = data.n_covariates();
  const UnitEffectEstimates effects = estimate_unit_effects(data, a, b, s2);

  LimitMomentPlugins plugins;
  plugins.sigma_v2 = effects.sigma_v2;
  const Eigen::VectorXd qload = within_transform(cumulative_power_vector(t, a));
  plugins.sigma_zqz = effects.sigma_v2 * qload.squaredNorm();
  plugins.sigma_xqz = Eigen::VectorXd::Zero(k);
  plugins.sigma_xqx = Eigen::MatrixXd::Zero(k, k);
  if (k == 0) return plugins;

  const Eigen::MatrixXd phi_mat = shift_power_matrix(t, a);
  Eigen::VectorXd xqload_v = Eigen::VectorXd::Zero(k);     // sum X'Q (Phi iota) vhat
  Eigen::MatrixXd xqphix = Eigen::MatrixXd::Zero(k, k);    // sum X'Q Phi Q X
  Eigen::VectorXd loadqphix_v = Eigen::VectorXd::Zero(k);  // sum vhat (Phi iota)'Q Phi Q X
  Eigen::MatrixXd xphiqphix = Eigen::MatrixXd::Zero(k, k);  // sum (Phi QX)'Q(Phi QX)
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd qx = demean_columns(data.x(i));
    plugins.sigma_xqx += qx.transpose() * qx;
    xqload_v += qx.transpose() * qload * effects.vhat(i);
    xqphix += qx.transpose() * (phi_mat * qx);
    const Eigen::MatrixXd phix = demean_columns(phi_mat * qx);
    loadqphix_v += phix.transpose() * qload * effects.vhat(i);
    xphiqphix += phix.transpose() * phix;
  }
  plugins.sigma_xqx /= n;
  plugins.sigma_xqz = (xqload_v + xqphix * b) / n;
  plugins.sigma_zqz += (2.0 * loadqphix_v.dot(b) + b.dot(xphiqphix * b)) / n;
  return plugins;
}

}  // namespace

Eigen::MatrixXd modified_hessian(int n_periods, double rho, double sigma2,
                                 const LimitMomentPlugins& plugins) {
  const int k = static_cast<int>(plugins.sigma_xqx.rows());
  const double t1 = static_cast<double>(n_periods - 1);
  const PenaltyPolynomial penalty(n_periods);
  const Eigen::MatrixXd qphi_mat = demean_columns(shift_power_matrix(n_periods, rho));
  const double tr_phiqphi = qphi_mat.squaredNorm();

  Eigen::MatrixXd mh = Eigen::MatrixXd::Zero(2 + k, 2 + k);
  mh(0, 0) = t1 * penalty.derivative(rho, 2) - tr_phiqphi - plugins.sigma_zqz / sigma2;
  mh(0, 1) = mh(1, 0) = t1 * penalty.derivative(rho, 1) / sigma2;
  mh(1, 1) = -0.5 * t1 / (sigma2 * sigma2);
  if (k > 0) {
    mh.block(0, 2, 1, k) = -plugins.sigma_xqz.transpose() / sigma2;
    mh.block(2, 0, k, 1) = -plugins.sigma_xqz / sigma2;
    mh.block(2, 2, k, k) = -plugins.sigma_xqx / sigma2;
  }
  return mh;
}

Eigen::MatrixXd modified_information(int n_periods, double rho, double sigma2,
                                     const LimitMomentPlugins& plugins) {
  const int k = static_cast<int>(plugins.sigma_xqx.rows());
  const double t1 = static_cast<double>(n_periods - 1);
  const PenaltyPolynomial penalty(n_periods);
  const Eigen::MatrixXd phi_mat = shift_power_matrix(n_periods, rho);
  const Eigen::MatrixXd qphi_mat = demean_columns(phi_mat);
  const double tr_phiqphi = qphi_mat.squaredNorm();
  const double tr_qphiqphi = (qphi_mat * qphi_mat).trace();

  Eigen::MatrixXd mim = Eigen::MatrixXd::Zero(2 + k, 2 + k);
  mim(0, 0) = tr_qphiqphi + tr_phiqphi + plugins.sigma_zqz / sigma2;
  mim(0, 1) = mim(1, 0) = -t1 * penalty.derivative(rho, 1) / sigma2;
  mim(1, 1) = 0.5 * t1 / (sigma2 * sigma2);
  if (k > 0) {
    mim.block(0, 2, 1, k) = plugins.sigma_xqz.transpose() / sigma2;
    mim.block(2, 0, k, 1) = plugins.sigma_xqz / sigma2;
    mim.block(2, 2, k, k) = plugins.sigma_xqx / sigma2;
  }
  return mim;
}

AsymptoticMoments asymptotic_covariance(const PanelDataset& data,
                                        const ThetaCommon& theta,
                                        double delta_sing) {
  if (std::abs(theta.r) >= 1.0 - delta_sing) {
    throw std::runtime_error(
        "sandwich covariance invalid near the unit circle (det MH -> 0); use "
        "the QLM or Wald unit-root procedures instead");
  }
  AsymptoticMoments out;
  out.plugins = build_plugins(data, theta.r, theta.b, theta.s2);
  out.mh = modified_hessian(data.n_periods(), theta.r, theta.s2, out.plugins);
  out.mim = modified_information(data.n_periods(), theta.r, theta.s2, out.plugins);
  const Eigen::MatrixXd mh_inv = out.mh.inverse();
  out.sandwich = mh_inv * out.mim * mh_inv;
  out.covariance = out.sandwich / data.n_units();
  return out;
}

Eigen::MatrixXd expected_hessian_reparam(int n_periods, const ReparamTheta& theta_n,
                                         const LimitMomentPlugins& plugins) {
  const int k = static_cast<int>(theta_n.b_n.size());
  const double sigma2 = theta_n.s2_n * theta_n.r_n;
  if (sigma2 <= 0.0) throw std::domain_error("expected Hessian requires s2_n r_n > 0");
  const Eigen::MatrixXd mh =
      modified_hessian(n_periods, theta_n.r_n, sigma2, plugins);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(2 + k, 2 + k);
  jac(1, 0) = theta_n.s2_n;
  jac(1, 1) = theta_n.r_n;
  return jac.transpose() * mh * jac;
}

Eigen::MatrixXd expected_hessian_reparam(int n_periods, const ReparamTheta& theta_n) {
  if (theta_n.b_n.size() > 0) {
    throw std::invalid_argument(
        "covariate moments required: use the plugin overload");
  }
  const double sigma2 = theta_n.s2_n * theta_n.r_n;
  LimitMomentPlugins plugins;
  plugins.sigma_v2 =
      std::max(sigma2 * (theta_n.sigbar_v2n + 1.0 - theta_n.r_n), 0.0);
  const Eigen::VectorXd qload =
      within_transform(cumulative_power_vector(n_periods, theta_n.r_n));
  plugins.sigma_zqz = plugins.sigma_v2 * qload.squaredNorm();
  plugins.sigma_xqz = Eigen::VectorXd();
  plugins.sigma_xqx = Eigen::MatrixXd();
  return expected_hessian_reparam(n_periods, theta_n, plugins);
}

Hypothesis Hypothesis::rho_equals(double value, int n_covariates) {
  Hypothesis h;
  h.A = Eigen::MatrixXd::Zero(1, 2 + n_covariates);
  h.A(0, 0) = 1.0;
  h.a = Eigen::VectorXd::Constant(1, value);
  return h;
}

Hypothesis Hypothesis::unit_root_and_zero_beta(int n_covariates) {
  if (n_covariates < 1) {
    throw std::invalid_argument("joint unit-root hypothesis needs covariates");
  }
  Hypothesis h;
  h.A = Eigen::MatrixXd::Zero(1 + n_covariates, 2 + n_covariates);
  h.a = Eigen::VectorXd::Zero(1 + n_covariates);
  h.A(0, 0) = 1.0;
  h.a(0) = 1.0;
  for (int j = 0; j < n_covariates; ++j) h.A(1 + j, 2 + j) = 1.0;
  return h;
}

namespace {

// Coordinate index selected by a hypothesis row; rows must be unit selectors.
int selected_coordinate(const Eigen::MatrixXd& A, int row) {
  int found = -1;
  for (int j = 0; j < A.cols(); ++j) {
    if (A(row, j) == 0.0) continue;
    if (A(row, j) != 1.0 || found >= 0) {
      throw std::invalid_argument(
          "hypothesis rows must each select a single coordinate of theta_n");
    }
    found = j;
  }
  if (found < 0) throw std::invalid_argument("hypothesis row is identically zero");
  return found;
}

}  // namespace

bool Hypothesis::pins_rho() const {
  for (int r = 0; r < A.rows(); ++r) {
    if (selected_coordinate(A, r) == 0) return true;
  }
  return false;
}

double Hypothesis::pinned_rho() const {
  for (int r = 0; r < A.rows(); ++r) {
    if (selected_coordinate(A, r) == 0) return a(r);
  }
  throw std::logic_error("hypothesis does not pin rho");
}

bool Hypothesis::pins_unity() const { return pins_rho() && pinned_rho() == 1.0; }

RestrictedFit restricted_fit(const PanelDataset& data, const Hypothesis& hypothesis) {
  const int k = data.n_covariates();
  if (hypothesis.A.cols() != 2 + k) {
    throw std::invalid_argument("hypothesis dimension must be 2 + K");
  }
  if (!hypothesis.pins_rho()) {
    throw std::invalid_argument("QLM hypotheses must include a restriction on rho");
  }
  const double a_rho = hypothesis.pinned_rho();

  bool s2n_pinned = false;
  double s2n_value = 0.0;
  std::vector<std::pair<int, double>> pinned_b;  // (covariate index, value)
  for (int r = 0; r < hypothesis.A.rows(); ++r) {
    const int coord = selected_coordinate(hypothesis.A, r);
    if (coord == 0) continue;
    if (coord == 1) {
      s2n_pinned = true;
      s2n_value = hypothesis.a(r);
    } else {
      pinned_b.emplace_back(coord - 2, hypothesis.a(r));
    }
  }

  const WithinMoments m = WithinMoments::compute(data);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  if (k > 0) {
    std::vector<bool> is_pinned(k, false);
    for (const auto& [idx, value] : pinned_b) {
      is_pinned[idx] = true;
      b(idx) = value;
    }
    std::vector<int> free_idx;
    for (int j = 0; j < k; ++j) {
      if (!is_pinned[j]) free_idx.push_back(j);
    }
    if (!free_idx.empty()) {
      const int kf = static_cast<int>(free_idx.size());
      Eigen::MatrixXd sxx_ff(kf, kf);
      Eigen::VectorXd rhs(kf);
      const Eigen::VectorXd target = m.sxy - a_rho * m.sxl;
      for (int p = 0; p < kf; ++p) {
        rhs(p) = target(free_idx[p]);
        for (const auto& [idx, value] : pinned_b) {
          rhs(p) -= m.sxx(free_idx[p], idx) * value;
        }
        for (int q = 0; q < kf; ++q) sxx_ff(p, q) = m.sxx(free_idx[p], free_idx[q]);
      }
      const Eigen::VectorXd b_free = sxx_ff.ldlt().solve(rhs);
      for (int p = 0; p < kf; ++p) b(free_idx[p]) = b_free(p);
    }
  }

  RestrictedFit fit;
  fit.theta.r = a_rho;
  fit.theta.b = b;
  fit.theta.s2 = s2n_pinned ? s2n_value * a_rho : profiled_sigma2(m, a_rho, b);
  if (fit.theta.s2 <= 0.0) {
    throw std::runtime_error("restricted error variance is not positive");
  }

  const UnitEffectEstimates effects =
      estimate_unit_effects(data, a_rho, b, fit.theta.s2);
  fit.sigma_v2_hat = effects.sigma_v2;
  const double sigbar = effects.sigma_v2 / fit.theta.s2 - (1.0 - a_rho);
  fit.theta_n = ReparamTheta::from_common(fit.theta, sigbar);
  fit.plugins = build_plugins(data, a_rho, b, fit.theta.s2);
  return fit;
}

QlmResult qlm_standard(const PanelDataset& data, const Hypothesis& hypothesis,
                       bool center_outer_products) {
  const int k = data.n_covariates();
  const int dim = 2 + k;
  const int j_restrictions = hypothesis.n_restrictions();
  if (hypothesis.pins_unity() && j_restrictions >= 2) {
    throw std::invalid_argument(
        "hypotheses pinning rho = 1 jointly with other restrictions require "
        "the unity-reformulated variant");
  }

  const RestrictedFit fit = restricted_fit(data, hypothesis);
  const Eigen::MatrixXd h =
      expected_hessian_reparam(data.n_periods(), fit.theta_n, fit.plugins);
  const Eigen::MatrixXd g = score_contributions(data, fit.theta_n);
  Eigen::VectorXd score_mean = g.colwise().mean();
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(dim, dim);
  if (center_outer_products) {
    const Eigen::MatrixXd gc = g.rowwise() - score_mean.transpose();
    outer = gc.transpose() * gc / data.n_units();
  } else {
    outer = g.transpose() * g / data.n_units();
  }

  const Eigen::MatrixXd adj_h = adjugate(h);
  const Eigen::MatrixXd au = hypothesis.A * adj_h;          // J x dim
  const Eigen::VectorXd projected = au * score_mean;        // J
  const Eigen::MatrixXd mid = au * outer * au.transpose();  // J x J

  Eigen::FullPivLU<Eigen::MatrixXd> lu(mid);
  if (!lu.isInvertible()) {
    throw std::runtime_error(
        "conditioning failure in the QLM quadratic form (singular projected "
        "outer-product matrix)");
  }
  QlmResult result;
  result.statistic = data.n_units() * projected.dot(lu.solve(projected));
  result.dof = j_restrictions;
  result.pvalue = chi_square_upper_tail(result.statistic, result.dof);
  result.variant = QlmVariant::kStandard;
  result.restricted_theta = fit.theta_n;
  result.sigma_v2_hat = fit.sigma_v2_hat;
  return result;
}

UnityHessianBlocks unity_hessian_blocks(int n_periods, const ReparamTheta& theta_n,
                                        const LimitMomentPlugins& plugins) {
  const int k = static_cast<int>(theta_n.b_n.size());
  const double a = theta_n.r_n;
  const double s2n = theta_n.s2_n;
  const double sigma2 = s2n * a;
  const double t1 = static_cast<double>(n_periods - 1);
  const PenaltyPolynomial penalty(n_periods);

  // Trace ingredients at the hypothesized parameter.
  const Eigen::MatrixXd phi_mat = shift_power_matrix(n_periods, a);
  const Eigen::MatrixXd qphi_mat = demean_columns(phi_mat);
  const double tr_q = t1;
  const double tr_qphi = qphi_mat.trace();
  const double tr_phiqphi = qphi_mat.squaredNorm();

  // E (y - Xb)'Q(y - Xb) = sigma2 tr((I+aPhi)'Q(I+aPhi)) + a^2 Sigma_zqz.
  const double e_alpha0 =
      sigma2 * (tr_q + 2.0 * a * tr_qphi + a * a * tr_phiqphi) +
      a * a * plugins.sigma_zqz;

  UnityHessianBlocks blocks;
  const double a3 = a * a * a;
  const double e_d4 = t1 * penalty.derivative(a, 4) +
                      0.5 * t1 * 6.0 / (a3 * a) -
                      12.0 * e_alpha0 / (s2n * a3 * a * a);
  blocks.h11 = e_d4 / 12.0;

  blocks.h12 = Eigen::VectorXd::Zero(1 + k);
  blocks.h12(0) = 0.5 * e_alpha0 / (s2n * s2n * a3);
  if (k > 0) {
    // (1/2!) E d^3 l / dr^2 db = Sigma_xqz / (s2n a^2), using
    // E X'Q(y - Xb) = a Sigma_xqz under the hypothesized parameter.
    blocks.h12.tail(k) = plugins.sigma_xqz / (s2n * a * a);
  }

  // (2/2!) = 1: the d-block is the plain expected Hessian block.
  blocks.h22 = Eigen::MatrixXd::Zero(1 + k, 1 + k);
  blocks.h22(0, 0) = -0.5 * t1 / (s2n * s2n);
  if (k > 0) {
    blocks.h22.block(1, 1, k, k) = -plugins.sigma_xqx / sigma2;
  }

  blocks.assembled = Eigen::MatrixXd::Zero(2 + k, 2 + k);
  blocks.assembled(0, 0) = blocks.h11;
  blocks.assembled.block(0, 1, 1, 1 + k) = blocks.h12.transpose();
  blocks.assembled.block(1, 0, 1 + k, 1) = blocks.h12;
  blocks.assembled.block(1, 1, 1 + k, 1 + k) = blocks.h22;
  return blocks;
}

QlmResult qlm_unity(const PanelDataset& data, const Hypothesis& hypothesis) {
  const int k = data.n_covariates();
  const int dim = 2 + k;
  const int j_restrictions = hypothesis.n_restrictions();
  if (j_restrictions < 2 || selected_coordinate(hypothesis.A, 0) != 0 ||
      hypothesis.a(0) != 1.0) {
    throw std::invalid_argument(
        "unity-reformulated QLM requires A(0,.) selecting rho with a(0) = 1 "
        "and J >= 2");
  }

  const RestrictedFit fit = restricted_fit(data, hypothesis);
  const UnityHessianBlocks blocks =
      unity_hessian_blocks(data.n_periods(), fit.theta_n, fit.plugins);

  // Per-unit pieces: S_{i,1} = half the second r_n-derivative, S_{i,2} the
  // d_n-score.
  const int n = data.n_units();
  const double a = fit.theta_n.r_n;
  const double s2n = fit.theta_n.s2_n;
  const double t1 = static_cast<double>(data.n_periods() - 1);
  const PenaltyPolynomial penalty(data.n_periods());
  const double xi2 = penalty.derivative(a, 2);
  const Eigen::MatrixXd g = score_contributions(data, fit.theta_n);

  Eigen::MatrixXd s_units(n, dim);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd centered = data.y().row(i).transpose();
    if (k > 0) centered -= data.x(i) * fit.theta.b;
    const double alpha0 = within_transform(centered).squaredNorm();
    const double d2 = t1 * xi2 + 0.5 * t1 / (a * a) - alpha0 / (s2n * a * a * a);
    s_units(i, 0) = 0.5 * d2;
    s_units.row(i).tail(1 + k) = g.row(i).tail(1 + k);
  }

  const Eigen::VectorXd s_mean = s_units.colwise().mean();
  const Eigen::MatrixXd outer = s_units.transpose() * s_units / n;

  Eigen::FullPivLU<Eigen::MatrixXd> h_lu(blocks.assembled);
  if (!h_lu.isInvertible()) {
    throw std::runtime_error("modified expected Hessian is singular");
  }
  const Eigen::MatrixXd h_inv = h_lu.inverse();
  const Eigen::MatrixXd au = hypothesis.A * h_inv;
  const Eigen::VectorXd projected = au * s_mean;
  const Eigen::MatrixXd mid = au * outer * au.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(mid);
  if (!lu.isInvertible()) {
    throw std::runtime_error("conditioning failure in the reformulated QLM");
  }

  QlmResult result;
  result.statistic = n * projected.dot(lu.solve(projected));
  result.dof = j_restrictions;
  result.pvalue = chi_square_upper_tail(result.statistic, result.dof);
  result.variant = QlmVariant::kUnityReformulated;
  result.restricted_theta = fit.theta_n;
  result.sigma_v2_hat = fit.sigma_v2_hat;
  return result;
}

QlmResult qlm_auto(const PanelDataset& data, const Hypothesis& hypothesis) {
  if (hypothesis.pins_unity() && hypothesis.n_restrictions() >= 2) {
    return qlm_unity(data, hypothesis);
  }
  return qlm_standard(data, hypothesis);
}

WaldUnitRootResult wald_unit_root(const PanelDataset& data, double alpha,
                                  const SolverOptions& opts) {
  const EstimateResult est = estimate_mmle_c(data, opts);
  const double t = data.n_periods();
  WaldUnitRootResult out;
  out.rho_c = est.theta.r;
  out.statistic = std::sqrt(static_cast<double>(data.n_units())) *
                  (est.theta.r - 1.0) * (est.theta.r - 1.0);
  out.var_z1 = 48.0 / (t * t * (t - 1.0) * (t + 1.0));
  out.critical_value = std::sqrt(out.var_z1) * normal_quantile(1.0 - alpha);
  out.reject = out.statistic > out.critical_value;
  return out;
}

bool ConfidenceSet::contains(double rho) const {
  for (const auto& [lo, hi] : intervals) {
    if (rho >= lo - 1e-12 && rho <= hi + 1e-12) return true;
  }
  return false;
}

ConfidenceSet qlm_confidence_set(const PanelDataset& data, double alpha,
                                 const std::vector<double>& grid) {
  ConfidenceSet out;
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  const int k = data.n_covariates();
  for (double a : sorted) {
    if (a == 0.0) continue;  // the reparametrization is singular at r = 0
    try {
      const QlmResult res = qlm_standard(data, Hypothesis::rho_equals(a, k));
      if (res.pvalue >= alpha) out.accepted.push_back(a);
    } catch (const std::exception&) {
      // a grid point where the statistic is not computable is not accepted
    }
  }
  // Group contiguous accepted grid points into intervals.
  const double step = sorted.size() > 1 ? sorted[1] - sorted[0] : 1.0;
  for (double a : out.accepted) {
    if (!out.intervals.empty() &&
        a - out.intervals.back().second <= 1.5 * step) {
      out.intervals.back().second = a;
    } else {
      out.intervals.emplace_back(a, a);
    }
  }
  return out;
}

namespace {

// Regularized incomplete gamma: series for P(a,x), continued fraction for
// Q(a,x).
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_continued_fraction(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double chi_square_upper_tail(double x, int dof) {
  if (dof <= 0) throw std::invalid_argument("chi-square dof must be positive");
  if (x <= 0.0) return 1.0;
  const double a = 0.5 * dof;
  const double xs = 0.5 * x;
  if (xs < a + 1.0) return 1.0 - gamma_p_series(a, xs);
  return gamma_q_continued_fraction(a, xs);
}

double chi_square_quantile(double p, int dof) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("quantile needs p in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (chi_square_upper_tail(hi, dof) > 1.0 - p) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (1.0 - chi_square_upper_tail(mid, dof) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("quantile needs p in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
    if (cdf < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace panelmmle
