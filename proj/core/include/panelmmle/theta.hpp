#pragma once

#include <Eigen/Dense>

namespace panelmmle {

// Common parameters theta = (r, s^2, b) of the AR(1) panel model.
struct ThetaCommon {
  double r = 0.0;
  double s2 = 1.0;
  Eigen::VectorXd b;  // length K (empty when no covariates)

  int dim() const { return 2 + static_cast<int>(b.size()); }
  Eigen::VectorXd to_vector() const;
  static ThetaCommon from_vector(const Eigen::VectorXd& v);
};

// Reparametrization r_n = r, s2_n = s^2/r, b_n = b used by the unit-root
// asymptotics and the expected-Hessian inference.  `sigbar_v2n` is the
// nuisance scalar sigma_v^2/sigma^2 - (1 - rho) carried alongside theta_n.
struct ReparamTheta {
  double r_n = 1.0;
  double s2_n = 1.0;
  Eigen::VectorXd b_n;
  double sigbar_v2n = 0.0;

  int dim() const { return 2 + static_cast<int>(b_n.size()); }
  static ReparamTheta from_common(const ThetaCommon& theta, double sigbar_v2n = 0.0);
  ThetaCommon to_common() const;  // s^2 = s2_n * r_n; requires r_n != 0
};

}  // namespace panelmmle
