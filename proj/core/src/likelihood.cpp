#include "panelmmle/likelihood.hpp"

#include <cmath>
#include <stdexcept>

namespace panelmmle {

Eigen::VectorXd ThetaCommon::to_vector() const {
  Eigen::VectorXd v(dim());
  v(0) = r;
  v(1) = s2;
  if (b.size() > 0) v.tail(b.size()) = b;
  return v;
}

ThetaCommon ThetaCommon::from_vector(const Eigen::VectorXd& v) {
  ThetaCommon theta;
  theta.r = v(0);
  theta.s2 = v(1);
  theta.b = v.tail(v.size() - 2);
  return theta;
}

ReparamTheta ReparamTheta::from_common(const ThetaCommon& theta, double sigbar_v2n) {
  if (theta.r == 0.0) {
    throw std::invalid_argument("reparametrization is singular at r = 0");
  }
  ReparamTheta out;
  out.r_n = theta.r;
  out.s2_n = theta.s2 / theta.r;
  out.b_n = theta.b;
  out.sigbar_v2n = sigbar_v2n;
  return out;
}

ThetaCommon ReparamTheta::to_common() const {
  if (r_n == 0.0) {
    throw std::invalid_argument("reparametrization is singular at r_n = 0");
  }
  ThetaCommon out;
  out.r = r_n;
  out.s2 = s2_n * r_n;
  out.b = b_n;
  return out;
}

double modified_loglik(const WithinMoments& m, const ThetaCommon& theta) {
  if (theta.s2 <= 0.0) throw std::domain_error("modified_loglik requires s2 > 0");
  const double t1 = static_cast<double>(m.n_periods - 1);
  const PenaltyPolynomial penalty(m.n_periods);
  return t1 * penalty.value(theta.r) - 0.5 * t1 * std::log(theta.s2) -
         m.ssr(theta.r, theta.b) / (2.0 * theta.s2 * m.n_units);
}

namespace {

// Residual cross products accumulated unit by unit.  Unlike the expanded
// moment formula, this keeps full relative precision when the residual is
// orders of magnitude smaller than the data (near-exact-fit panels).
struct ResidualSums {
  double ssr = 0.0;       // sum u'Qu
  double lag_dot = 0.0;   // sum u'Q y_{-1}
  Eigen::VectorXd x_dot;  // sum X'Q u
};

ResidualSums residual_sums(const PanelDataset& data, const ThetaCommon& theta) {
  const int k = data.n_covariates();
  ResidualSums sums;
  sums.x_dot = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < data.n_units(); ++i) {
    const Eigen::VectorXd ql = within_transform(data.lagged(i));
    Eigen::VectorXd qu =
        within_transform(data.y().row(i).transpose()) - theta.r * ql;
    if (k > 0) {
      const Eigen::MatrixXd qx =
          data.x(i).rowwise() - data.x(i).colwise().mean();
      qu -= qx * theta.b;
      sums.x_dot.noalias() += qx.transpose() * qu;
    }
    sums.ssr += qu.squaredNorm();
    sums.lag_dot += qu.dot(ql);
  }
  return sums;
}

}  // namespace

double modified_loglik(const PanelDataset& data, const ThetaCommon& theta) {
  if (theta.s2 <= 0.0) throw std::domain_error("modified_loglik requires s2 > 0");
  const double t1 = static_cast<double>(data.n_periods() - 1);
  const PenaltyPolynomial penalty(data.n_periods());
  const ResidualSums sums = residual_sums(data, theta);
  return t1 * penalty.value(theta.r) - 0.5 * t1 * std::log(theta.s2) -
         sums.ssr / (2.0 * theta.s2 * data.n_units());
}

Eigen::VectorXd score_vector(const WithinMoments& m, const ThetaCommon& theta) {
  if (theta.s2 <= 0.0) throw std::domain_error("score requires s2 > 0");
  const double t1 = static_cast<double>(m.n_periods - 1);
  const double n = static_cast<double>(m.n_units);
  const PenaltyPolynomial penalty(m.n_periods);
  Eigen::VectorXd psi(2 + m.n_covariates);
  psi(0) = t1 * penalty.derivative(theta.r, 1) +
           m.resid_dot_lag(theta.r, theta.b) / (theta.s2 * n);
  psi(1) = -0.5 * t1 / theta.s2 +
           m.ssr(theta.r, theta.b) / (2.0 * theta.s2 * theta.s2 * n);
  if (m.n_covariates > 0) {
    psi.tail(m.n_covariates) = m.resid_dot_x(theta.r, theta.b) / (theta.s2 * n);
  }
  return psi;
}

Eigen::VectorXd score_vector(const PanelDataset& data, const ThetaCommon& theta) {
  if (theta.s2 <= 0.0) throw std::domain_error("score requires s2 > 0");
  const int k = data.n_covariates();
  const double t1 = static_cast<double>(data.n_periods() - 1);
  const double n = static_cast<double>(data.n_units());
  const PenaltyPolynomial penalty(data.n_periods());
  const ResidualSums sums = residual_sums(data, theta);
  Eigen::VectorXd psi(2 + k);
  psi(0) = t1 * penalty.derivative(theta.r, 1) + sums.lag_dot / (theta.s2 * n);
  psi(1) = -0.5 * t1 / theta.s2 + sums.ssr / (2.0 * theta.s2 * theta.s2 * n);
  if (k > 0) psi.tail(k) = sums.x_dot / (theta.s2 * n);
  return psi;
}

Eigen::MatrixXd observed_hessian(const WithinMoments& m, const ThetaCommon& theta) {
  const double t1 = static_cast<double>(m.n_periods - 1);
  const double n = static_cast<double>(m.n_units);
  const double s2 = theta.s2;
  const double s4 = s2 * s2;
  const PenaltyPolynomial penalty(m.n_periods);
  const int k = m.n_covariates;
  Eigen::MatrixXd h(2 + k, 2 + k);
  h(0, 0) = t1 * penalty.derivative(theta.r, 2) - m.sll / (s2 * n);
  h(0, 1) = h(1, 0) = -m.resid_dot_lag(theta.r, theta.b) / (s4 * n);
  h(1, 1) = 0.5 * t1 / s4 - m.ssr(theta.r, theta.b) / (s4 * s2 * n);
  if (k > 0) {
    h.block(0, 2, 1, k) = -m.sxl.transpose() / (s2 * n);
    h.block(2, 0, k, 1) = h.block(0, 2, 1, k).transpose();
    const Eigen::VectorXd rx = m.resid_dot_x(theta.r, theta.b);
    h.block(1, 2, 1, k) = -rx.transpose() / (s4 * n);
    h.block(2, 1, k, 1) = h.block(1, 2, 1, k).transpose();
    h.block(2, 2, k, k) = -m.sxx / (s2 * n);
  }
  return h;
}

Eigen::MatrixXd score_contributions(const PanelDataset& data,
                                    const ReparamTheta& theta_n) {
  if (theta_n.r_n == 0.0) {
    throw std::invalid_argument("per-unit scores are singular at r_n = 0");
  }
  const ThetaCommon theta = theta_n.to_common();
  if (theta.s2 <= 0.0) throw std::domain_error("per-unit scores require s^2 > 0");
  const int n = data.n_units();
  const int k = data.n_covariates();
  const double t1 = static_cast<double>(data.n_periods() - 1);
  const double s2 = theta.s2;
  const PenaltyPolynomial penalty(data.n_periods());
  const double xi1 = penalty.derivative(theta.r, 1);

  Eigen::MatrixXd g(n, 2 + k);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd qy = within_transform(data.y().row(i).transpose());
    const Eigen::VectorXd ql = within_transform(data.lagged(i));
    Eigen::VectorXd qu = qy - theta.r * ql;
    Eigen::MatrixXd qx;
    if (k > 0) {
      qx = data.x(i).rowwise() - data.x(i).colwise().mean();
      qu -= qx * theta.b;
    }
    const double ssr_i = qu.squaredNorm();
    const double psi_rho = t1 * xi1 + qu.dot(ql) / s2;
    const double psi_s2 = -0.5 * t1 / s2 + ssr_i / (2.0 * s2 * s2);
    g(i, 0) = psi_rho + theta_n.s2_n * psi_s2;
    g(i, 1) = theta_n.r_n * psi_s2;
    if (k > 0) g.row(i).tail(k) = (qx.transpose() * qu).transpose() / s2;
  }
  return g;
}

Eigen::VectorXd profiled_beta(const WithinMoments& m, double r) {
  return m.beta_profiled(r);
}

Eigen::VectorXd profiled_beta(const PanelDataset& data, double r) {
  return WithinMoments::compute(data).beta_profiled(r);
}

double profiled_sigma2(const WithinMoments& m, double r, const Eigen::VectorXd& b) {
  return m.ssr(r, b) / (static_cast<double>(m.n_periods - 1) * m.n_units);
}

double profiled_sigma2(const PanelDataset& data, double r, const Eigen::VectorXd& b) {
  ThetaCommon theta;
  theta.r = r;
  theta.s2 = 1.0;
  theta.b = b;
  const ResidualSums sums = residual_sums(data, theta);
  return sums.ssr / (static_cast<double>(data.n_periods() - 1) * data.n_units());
}

double profiled_sigma2_from_stats(const ConcentratedStats& stats, double r) {
  const double w = stats.rho_lsdv - r;
  return stats.sigma2_lsdv + w * w * stats.s_y2 * (1.0 - stats.r2_xy);
}

double concentrated_loglik(const ConcentratedStats& stats, double r) {
  const double t1 = static_cast<double>(stats.n_periods - 1);
  const PenaltyPolynomial penalty(stats.n_periods);
  const double sigma2 = profiled_sigma2_from_stats(stats, r);
  return t1 * penalty.value(r) - 0.5 * t1 * std::log(sigma2) - 0.5 * t1;
}

double concentrated_score(const ConcentratedStats& stats, int n_periods, double r,
                          int order) {
  if (n_periods != stats.n_periods) {
    throw std::invalid_argument("panel length mismatch in concentrated score");
  }
  if (order < 1 || order > 5) {
    throw std::invalid_argument("concentrated score order must be 1..5");
  }
  const double t1 = static_cast<double>(n_periods - 1);
  const PenaltyPolynomial penalty(n_periods);
  const double c = stats.c_ratio;
  const double w = r - stats.rho_lsdv;
  const double d = c + w * w;
  const double w2 = w * w;
  const double c2 = c * c;
  double rational = 0.0;
  switch (order) {
    case 1:
      rational = w / d;
      break;
    case 2:
      rational = (c - w2) / (d * d);
      break;
    case 3:
      rational = -2.0 * w * (3.0 * c - w2) / (d * d * d);
      break;
    case 4:
      rational = -6.0 * (c2 - 6.0 * c * w2 + w2 * w2) / (d * d * d * d);
      break;
    case 5:
      rational = 24.0 * w * (5.0 * c2 - 10.0 * c * w2 + w2 * w2) / (d * d * d * d * d);
      break;
  }
  return t1 * (penalty.derivative(r, order) - rational);
}

double concentrated_score_at_unity(const PanelDataset& data) {
  const WithinMoments m = WithinMoments::compute(data);
  const ConcentratedStats stats = concentrated_stats(m);
  const double route_rational = concentrated_score(stats, stats.n_periods, 1.0, 1);

  // Shift-matrix route: differences d_i = y_i - y_{i,-1} and the cumulative
  // sums Phi(1) d_i recover Q y_{i,-1}.
  const int n = data.n_units();
  const int t = data.n_periods();
  const int k = data.n_covariates();
  const Eigen::VectorXd beta1 = m.beta_profiled(1.0);
  const double sigma2_at_one = profiled_sigma2(m, 1.0, beta1);
  double cross = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd diff =
        data.y().row(i).transpose() - data.lagged(i);
    Eigen::VectorXd cum(t);
    double acc = 0.0;
    for (int s = 0; s < t; ++s) {
      cum(s) = acc;  // sum of diff_1..diff_{s}, zero for the first period
      acc += diff(s);
    }
    Eigen::VectorXd resid = diff;
    if (k > 0) {
      const Eigen::MatrixXd qx = data.x(i).rowwise() - data.x(i).colwise().mean();
      resid -= qx * beta1;
    }
    cross += within_transform(resid).dot(cum);
  }
  const double t1 = static_cast<double>(t - 1);
  const double route_shift = t1 * 0.5 + cross / (sigma2_at_one * n);

  const double scale = std::max({1.0, std::abs(route_rational), std::abs(route_shift)});
  if (std::abs(route_rational - route_shift) > 1e-8 * scale) {
    throw std::runtime_error(
        "internal consistency failure: the two routes to the score at unity "
        "disagree");
  }
  return route_rational;
}

Eigen::VectorXd score_numerator_coefficients(const ConcentratedStats& stats) {
  const int t = stats.n_periods;
  const PenaltyPolynomial penalty(t);
  // xi'(r) coefficients: p_j = (T-1-j)/(T(T-1)) for j = 0..T-2.
  Eigen::VectorXd p(t - 1);
  const double scale = static_cast<double>(t) * (t - 1);
  for (int j = 0; j <= t - 2; ++j) p(j) = static_cast<double>(t - 1 - j) / scale;
  // q(r) = (c + rho^2) - 2 rho r + r^2.
  const double rho = stats.rho_lsdv;
  Eigen::Vector3d q(stats.c_ratio + rho * rho, -2.0 * rho, 1.0);
  Eigen::VectorXd kappa = Eigen::VectorXd::Zero(t + 1);
  for (int j = 0; j < p.size(); ++j) {
    for (int l = 0; l < 3; ++l) kappa(j + l) += p(j) * q(l);
  }
  kappa(0) += rho;
  kappa(1) -= 1.0;
  return kappa;
}

}  // namespace panelmmle
