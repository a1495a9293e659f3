#pragma once

#include <Eigen/Dense>

#include "panelmmle/panel_data.hpp"

namespace panelmmle {

// Within-transformed cross products summed over units.  Every likelihood,
// score and estimator formula is a function of these O((K+2)^2) numbers, so
// they are computed once per panel in O(NTK) and reused.
struct WithinMoments {
  int n_units = 0;
  int n_periods = 0;
  int n_covariates = 0;
  double syy = 0.0;  // sum_i y_i' Q y_i
  double syl = 0.0;  // sum_i y_i' Q y_{i,-1}
  double sll = 0.0;  // sum_i y_{i,-1}' Q y_{i,-1}
  Eigen::VectorXd sxy;  // sum_i X_i' Q y_i
  Eigen::VectorXd sxl;  // sum_i X_i' Q y_{i,-1}
  Eigen::MatrixXd sxx;  // sum_i X_i' Q X_i

  static WithinMoments compute(const PanelDataset& data);

  // Profiled covariate coefficients: beta(r) = sxx^{-1} (sxy - r sxl).
  Eigen::VectorXd beta_profiled(double r) const;

  // Residual sum of squares sum_i u_i' Q u_i at u_i = y_i - r y_{i,-1} - X_i b.
  double ssr(double r, const Eigen::VectorXd& b) const;

  // sum_i u_i' Q y_{i,-1}.
  double resid_dot_lag(double r, const Eigen::VectorXd& b) const;

  // sum_i X_i' Q u_i.
  Eigen::VectorXd resid_dot_x(double r, const Eigen::VectorXd& b) const;
};

// Sufficient statistics of the concentrated likelihood.
struct ConcentratedStats {
  int n_periods = 0;
  double rho_lsdv = 0.0;    // LSDV (within) estimate of rho
  double sigma2_lsdv = 0.0; // LSDV residual variance, divisor (T-1)N
  double s_y2 = 0.0;        // ((T-1)N)^{-1} sum_i y_{i,-1}' Q y_{i,-1}
  double r2_xy = 0.0;       // squared multiple correlation of Qy_{-1} on QX
  double c_ratio = 0.0;     // sigma2_lsdv / (s_y2 (1 - r2_xy))
};

ConcentratedStats concentrated_stats(const WithinMoments& moments);
ConcentratedStats concentrated_stats(const PanelDataset& data);

// LSDV point estimates (rho, beta) solving the within normal equations.
struct LsdvSolution {
  double rho = 0.0;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
};
LsdvSolution solve_lsdv(const WithinMoments& moments);

}  // namespace panelmmle
