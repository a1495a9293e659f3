#include "panelmmle/moments.hpp"

#include <cmath>
#include <stdexcept>

namespace panelmmle {

WithinMoments WithinMoments::compute(const PanelDataset& data) {
  const int n = data.n_units();
  const int t = data.n_periods();
  const int k = data.n_covariates();

  WithinMoments m;
  m.n_units = n;
  m.n_periods = t;
  m.n_covariates = k;
  m.sxy = Eigen::VectorXd::Zero(k);
  m.sxl = Eigen::VectorXd::Zero(k);
  m.sxx = Eigen::MatrixXd::Zero(k, k);

  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd qy = within_transform(data.y().row(i).transpose());
    const Eigen::VectorXd ql = within_transform(data.lagged(i));
    m.syy += qy.squaredNorm();
    m.syl += qy.dot(ql);
    m.sll += ql.squaredNorm();
    if (k > 0) {
      const Eigen::MatrixXd& xi = data.x(i);
      Eigen::MatrixXd qx = xi.rowwise() - xi.colwise().mean();
      m.sxy.noalias() += qx.transpose() * qy;
      m.sxl.noalias() += qx.transpose() * ql;
      m.sxx.noalias() += qx.transpose() * qx;
    }
  }
  return m;
}

Eigen::VectorXd WithinMoments::beta_profiled(double r) const {
  if (n_covariates == 0) return Eigen::VectorXd();
  Eigen::LDLT<Eigen::MatrixXd> solver(sxx);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("singular X'QX in profiled coefficients");
  }
  return solver.solve(sxy - r * sxl);
}

double WithinMoments::ssr(double r, const Eigen::VectorXd& b) const {
  double value = syy - 2.0 * r * syl + r * r * sll;
  if (n_covariates > 0) {
    value += -2.0 * b.dot(sxy - r * sxl) + b.dot(sxx * b);
  }
  return value;
}

double WithinMoments::resid_dot_lag(double r, const Eigen::VectorXd& b) const {
  double value = syl - r * sll;
  if (n_covariates > 0) value -= b.dot(sxl);
  return value;
}

Eigen::VectorXd WithinMoments::resid_dot_x(double r, const Eigen::VectorXd& b) const {
  if (n_covariates == 0) return Eigen::VectorXd();
  return sxy - r * sxl - sxx * b;
}

LsdvSolution solve_lsdv(const WithinMoments& m) {
  LsdvSolution out;
  if (m.sll <= 0.0) {
    throw std::runtime_error("degenerate regressor: sum y_{-1}'Q y_{-1} is zero");
  }
  if (m.n_covariates == 0) {
    out.rho = m.syl / m.sll;
    out.beta = Eigen::VectorXd();
  } else {
    Eigen::LDLT<Eigen::MatrixXd> solver(m.sxx);
    if (solver.info() != Eigen::Success) {
      throw std::runtime_error("multicollinear covariates: X'QX singular");
    }
    const Eigen::VectorXd sxx_inv_sxl = solver.solve(m.sxl);
    const Eigen::VectorXd sxx_inv_sxy = solver.solve(m.sxy);
    const double denom = m.sll - m.sxl.dot(sxx_inv_sxl);
    if (denom <= 0.0) {
      throw std::runtime_error(
          "degenerate regressor: lag has no within variation after projecting "
          "out covariates");
    }
    out.rho = (m.syl - m.sxl.dot(sxx_inv_sxy)) / denom;
    out.beta = sxx_inv_sxy - out.rho * sxx_inv_sxl;
  }
  const double denom_obs = static_cast<double>(m.n_periods - 1) * m.n_units;
  out.sigma2 = m.ssr(out.rho, out.beta) / denom_obs;
  if (out.sigma2 < 0.0 && out.sigma2 > -1e-12 * m.syy) out.sigma2 = 0.0;
  if (out.sigma2 < 0.0) {
    throw std::runtime_error("negative residual variance (numerical breakdown)");
  }
  return out;
}

ConcentratedStats concentrated_stats(const WithinMoments& m) {
  const LsdvSolution lsdv = solve_lsdv(m);
  ConcentratedStats stats;
  stats.n_periods = m.n_periods;
  stats.rho_lsdv = lsdv.rho;
  stats.sigma2_lsdv = lsdv.sigma2;
  const double denom_obs = static_cast<double>(m.n_periods - 1) * m.n_units;
  stats.s_y2 = m.sll / denom_obs;
  if (m.n_covariates > 0) {
    Eigen::LDLT<Eigen::MatrixXd> solver(m.sxx);
    stats.r2_xy = m.sxl.dot(solver.solve(m.sxl)) / m.sll;
  }
  stats.c_ratio = stats.sigma2_lsdv / (stats.s_y2 * (1.0 - stats.r2_xy));
  return stats;
}

ConcentratedStats concentrated_stats(const PanelDataset& data) {
  return concentrated_stats(WithinMoments::compute(data));
}

}  // namespace panelmmle
