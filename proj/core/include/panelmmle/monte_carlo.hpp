#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "panelmmle/estimators.hpp"
#include "panelmmle/inference.hpp"
#include "panelmmle/panel_data.hpp"

namespace panelmmle {

// S: stationary initial observations (degenerate at |rho| = 1);
// NS: non-stationary initial observations y_{i,0} = mu_i;
// S_CHISQ: design S with standardized chi-square(1) innovations.
enum class Design { kS, kNs, kSChisq };

std::string design_name(Design design);
Design design_from_name(const std::string& name);

struct DesignSpec {
  Design design = Design::kS;
  int n_periods = 4;
  int n_units = 100;
  double rho = 0.5;
  double sigma2 = 1.0;
  double sigma_mu2 = 1.0;
  bool time_effects = false;
  int n_reps = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

// Draws one panel; fully determined by (spec.seed, rep_index).
PanelDataset generate_panel(const DesignSpec& spec, std::int64_t rep_index);

// Hypothesis-test request attached to an experiment.
struct TestSpec {
  double h0_rho = 1.0;
  double alpha = 0.05;
  bool use_unity_variant_auto = true;
};

struct McCell {
  std::string estimator;
  double bias = 0.0, bias_se = 0.0;
  double rmse = 0.0, rmse_se = 0.0;
  double nm = 0.0, nm_se = 0.0;  // frequency that no interior maximum exists
  int n_reps = 0;
  int n_failures = 0;
};

struct McTestCell {
  double h0_rho = 1.0;
  double alpha = 0.05;
  double rejection_rate = 0.0, rejection_se = 0.0;
  int n_reps = 0;
  int n_failures = 0;
};

struct McRow {
  DesignSpec spec;
  std::vector<McCell> cells;
  std::vector<McTestCell> test_cells;
};

struct McTable {
  std::vector<McRow> rows;
  std::string to_csv() const;
};

// Runs the replication study: per replication, generates a panel, runs the
// requested estimators and tests, then folds results deterministically
// (independent of the thread count).
McTable run_experiment(const DesignSpec& spec,
                       const std::vector<EstimatorKind>& estimators,
                       const std::vector<TestSpec>& tests = {},
                       int n_threads = 0, const SolverOptions& opts = {});

// Size/power row of the QLM(rho) test with the restricted moment estimator of
// sigma_v^2, at nominal 5%.
McTestCell run_qlm_study(const DesignSpec& spec, double h0_rho,
                         int n_threads = 0, double alpha = 0.05);

}  // namespace panelmmle
