#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "panelmmle/likelihood.hpp"
#include "panelmmle/moments.hpp"
#include "panelmmle/panel_data.hpp"
#include "panelmmle/theta.hpp"

namespace panelmmle {

enum class EstimatorKind {
  kLsdv,
  kLsdvBiasCorrected,
  kLancaster,
  kMmleC,
  kMmleW,
  kMmleF,
};

std::string estimator_name(EstimatorKind kind);
EstimatorKind estimator_from_name(const std::string& name);

struct SolverOptions {
  double r_max = 1.4;        // search interval is [-1, r_max]
  double grid_step = 1e-3;   // fallback grid resolution
  double tol = 1e-8;         // refinement tolerance
  int multistarts = 8;       // starts of the weighted-score minimizer
  double soc_tol = 1e-10;    // slack for the second-order condition
  double s2_min_factor = 1e-6;  // s^2 box, relative to the LSDV variance
  double s2_max_factor = 1e6;
  double beta_box = 1e6;
  int max_iterations = 400;
};

// Positive-definite symmetric weight matrix for the weighted-score MMLE.
struct WeightMatrix {
  Eigen::MatrixXd w;
  static WeightMatrix identity(int dim);
  static WeightMatrix diagonal(const Eigen::VectorXd& d);
  void validate() const;  // throws unless symmetric PD
};

struct EstimateResult {
  ThetaCommon theta;
  EstimatorKind kind = EstimatorKind::kLsdv;
  bool lan_exists = false;    // interior local maximum found on [-1, r_max]
  bool interior_root = false; // theta solves the score exactly
  bool used_fallback = false; // bias-corrected LSDV fallback (no feasible point)
  bool at_boundary = false;   // constrained solution sits at -1 or r_max
  std::vector<double> kappa_roots;  // real roots of kappa in range, ascending
  int iterations = 0;
  double final_objective = 0.0;
  double second_derivative = 0.0;
};

struct LanExistence {
  bool exists = false;
  std::vector<double> roots;  // roots of kappa in [max(-1, rho_lsdv), r_max]
};

// True iff kappa has a real root in [max(-1, rho_lsdv), r_max] at which the
// concentrated second derivative is <= soc_tol; drives the NM frequencies.
LanExistence lan_existence(const ConcentratedStats& stats, double r_max,
                           double soc_tol = 1e-10);
LanExistence lan_existence(const PanelDataset& data, double r_max,
                           double soc_tol = 1e-10);

EstimateResult estimate_lsdv(const PanelDataset& data);
EstimateResult estimate_lsdv(const WithinMoments& moments);

// rho_lsdv + 3/(T+1); valid as a point estimator only under rho = 1.
EstimateResult estimate_lsdv_bias_corrected(const PanelDataset& data);
EstimateResult estimate_lsdv_bias_corrected(const WithinMoments& moments);

// Concentrated-score MMLE.  Stage 1 finds the root of kappa that satisfies
// the second-order condition; stage 2 minimizes the squared concentrated
// score over a constrained grid with golden-section refinement.
EstimateResult estimate_mmle_c(const WithinMoments& moments,
                               const SolverOptions& opts = {});
EstimateResult estimate_mmle_c(const PanelDataset& data,
                               const SolverOptions& opts = {});

// Weighted-score MMLE: minimizes Psi' W Psi subject to the Hessian of the
// modified profile log-likelihood being negative semidefinite.  Coincides
// with the concentrated MMLE whenever an interior local maximum exists.
EstimateResult estimate_mmle_w(const WithinMoments& moments, const WeightMatrix& w,
                               const SolverOptions& opts = {});
EstimateResult estimate_mmle_w(const PanelDataset& data, const WeightMatrix& w,
                               const SolverOptions& opts = {});

// Variant with the first score entry replaced by the concentrated score.
EstimateResult estimate_mmle_f(const WithinMoments& moments, const WeightMatrix& w,
                               const SolverOptions& opts = {});
EstimateResult estimate_mmle_f(const PanelDataset& data, const WeightMatrix& w,
                               const SolverOptions& opts = {});

}  // namespace panelmmle
