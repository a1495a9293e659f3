#pragma once

#include <Eigen/Dense>

#include "panelmmle/moments.hpp"
#include "panelmmle/panel_data.hpp"
#include "panelmmle/penalty.hpp"
#include "panelmmle/theta.hpp"

namespace panelmmle {

// Modified profile log-likelihood, normalized by N:
//   (T-1) xi(r) - ((T-1)/2) log s^2 - (2 s^2 N)^{-1} sum_i u_i' Q u_i.
double modified_loglik(const WithinMoments& moments, const ThetaCommon& theta);
double modified_loglik(const PanelDataset& data, const ThetaCommon& theta);

// Score (Psi_rho, Psi_{s^2}, Psi_b) of the modified profile log-likelihood.
Eigen::VectorXd score_vector(const WithinMoments& moments, const ThetaCommon& theta);
Eigen::VectorXd score_vector(const PanelDataset& data, const ThetaCommon& theta);

// Observed Hessian of the modified profile log-likelihood at theta.
Eigen::MatrixXd observed_hessian(const WithinMoments& moments, const ThetaCommon& theta);

// Per-unit score contributions under the reparametrization theta_n.  Row i is
// the gradient of unit i's contribution to N * l_n; the (non-random) penalty
// and log terms appear identically in every row, so the rows average to the
// reparametrized score.  Requires r_n != 0.
Eigen::MatrixXd score_contributions(const PanelDataset& data, const ReparamTheta& theta_n);

// Profiled coefficients and error variance.
Eigen::VectorXd profiled_beta(const WithinMoments& moments, double r);
Eigen::VectorXd profiled_beta(const PanelDataset& data, double r);
double profiled_sigma2(const WithinMoments& moments, double r, const Eigen::VectorXd& b);

// Per-unit residual accumulation; keeps full relative precision on
// near-exact-fit panels where the expanded moment formula cancels.
double profiled_sigma2(const PanelDataset& data, double r, const Eigen::VectorXd& b);

// sigma^2(r, beta(r)) through the plug-in identity
//   sigma2_lsdv + (rho_lsdv - r)^2 s_y2 (1 - r2_xy).
double profiled_sigma2_from_stats(const ConcentratedStats& stats, double r);

// Concentrated (profile) log-likelihood of r.
double concentrated_loglik(const ConcentratedStats& stats, double r);

// Analytic derivatives of the concentrated log-likelihood.  order = 1 is
//   (T-1) xi'(r) - (T-1)(r - rho_lsdv) / (c + (r - rho_lsdv)^2);
// higher orders are quotient-rule closed forms of the same rational function.
double concentrated_score(const ConcentratedStats& stats, int n_periods, double r, int order);

// Score of the concentrated log-likelihood at r = 1 computed two ways (the
// rational form above and the shift-matrix expansion in terms of first
// differences).  Throws if the two routes disagree beyond 1e-8 relative.
double concentrated_score_at_unity(const PanelDataset& data);

// Coefficients (ascending) of the degree-T polynomial
//   kappa(r) = xi'(r) {c + (r - rho_lsdv)^2} - (r - rho_lsdv)
// whose real roots are the zeros of the concentrated score.
Eigen::VectorXd score_numerator_coefficients(const ConcentratedStats& stats);

}  // namespace panelmmle
