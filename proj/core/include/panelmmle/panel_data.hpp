#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace panelmmle {

// Balanced panel y_{i,0..T} with optional strictly exogenous covariates.
// Row i of `y` holds (y_{i,1}, ..., y_{i,T}); `y0` holds the initial
// observations.  `x[i]` is the T x K covariate matrix of unit i; `x` is empty
// when K == 0.  Validation happens once at construction; estimators assume a
// validated panel.
class PanelDataset {
 public:
  static PanelDataset create(Eigen::VectorXd y0, Eigen::MatrixXd y,
                             std::vector<Eigen::MatrixXd> x = {});

  int n_units() const { return static_cast<int>(y_.rows()); }
  int n_periods() const { return static_cast<int>(y_.cols()); }
  int n_covariates() const {
    return x_.empty() ? 0 : static_cast<int>(x_.front().cols());
  }

  const Eigen::VectorXd& y0() const { return y0_; }
  const Eigen::MatrixXd& y() const { return y_; }
  const std::vector<Eigen::MatrixXd>& x() const { return x_; }
  const Eigen::MatrixXd& x(int unit) const { return x_[unit]; }

  // Lagged series of unit i: (y_{i,0}, ..., y_{i,T-1}).
  Eigen::VectorXd lagged(int unit) const;

 private:
  PanelDataset() = default;
  Eigen::VectorXd y0_;
  Eigen::MatrixXd y_;
  std::vector<Eigen::MatrixXd> x_;
};

// Q-projection Qv = v - mean(v): removes the per-unit time average.
Eigen::VectorXd within_transform(const Eigen::VectorXd& v);

// Subtracts cross-sectional averages from every period (time effects).
// `include_initial` controls whether y_{i,0} is demeaned as well.
PanelDataset demean_cross_section(const PanelDataset& data,
                                  bool include_initial = true);

// Strict CSV panel format: header `unit,period,y[,x1..xK]`; every unit must
// carry periods 0..T; the period-0 row supplies y_{i,0} (x columns ignored).
PanelDataset read_panel_csv(const std::string& path);
void write_panel_csv(const PanelDataset& data, const std::string& path);

}  // namespace panelmmle
