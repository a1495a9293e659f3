#include "panelmmle/panel_data.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace panelmmle {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

PanelDataset PanelDataset::create(Eigen::VectorXd y0, Eigen::MatrixXd y,
                                  std::vector<Eigen::MatrixXd> x) {
  const int n = static_cast<int>(y.rows());
  const int t = static_cast<int>(y.cols());
  require(n >= 1, "panel must contain at least one unit");
  require(t >= 2, "panel length T must be at least 2");
  require(y0.size() == n, "y0 length must equal the number of units");
  require(all_finite(y) && y0.allFinite(), "panel observations must be finite");
  if (!x.empty()) {
    require(static_cast<int>(x.size()) == n,
            "covariate blocks must match the number of units");
    const int k = static_cast<int>(x.front().cols());
    require(k >= 1, "covariate blocks must have at least one column");
    Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(k, k);
    for (const auto& xi : x) {
      require(xi.rows() == t && xi.cols() == k,
              "every covariate block must be T x K");
      require(all_finite(xi), "covariates must be finite");
      Eigen::MatrixXd qx = xi.rowwise() - xi.colwise().mean();
      sxx += qx.transpose() * qx;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sxx);
    require(llt.info() == Eigen::Success,
            "sum of X'QX must be positive definite (no within multicollinearity)");
  }

  PanelDataset data;
  data.y0_ = std::move(y0);
  data.y_ = std::move(y);
  data.x_ = std::move(x);
  return data;
}

Eigen::VectorXd PanelDataset::lagged(int unit) const {
  const int t = n_periods();
  Eigen::VectorXd lag(t);
  lag(0) = y0_(unit);
  lag.tail(t - 1) = y_.row(unit).head(t - 1).transpose();
  return lag;
}

Eigen::VectorXd within_transform(const Eigen::VectorXd& v) {
  return v.array() - v.mean();
}

PanelDataset demean_cross_section(const PanelDataset& data, bool include_initial) {
  if (data.n_units() < 2) {
    throw std::invalid_argument(
        "cross-sectional demeaning needs at least two units");
  }
  Eigen::VectorXd y0 = data.y0();
  if (include_initial) y0.array() -= y0.mean();
  Eigen::MatrixXd y = data.y().rowwise() - data.y().colwise().mean();
  std::vector<Eigen::MatrixXd> x = data.x();
  if (!x.empty()) {
    Eigen::MatrixXd x_mean = Eigen::MatrixXd::Zero(x.front().rows(), x.front().cols());
    for (const auto& xi : x) x_mean += xi;
    x_mean /= static_cast<double>(x.size());
    for (auto& xi : x) xi -= x_mean;
  }
  return PanelDataset::create(std::move(y0), std::move(y), std::move(x));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

PanelDataset read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open panel file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty panel file: " + path);
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "unit" || header[1] != "period" ||
      header[2] != "y") {
    throw std::runtime_error("panel header must start with unit,period,y");
  }
  const int k = static_cast<int>(header.size()) - 3;

  struct Row {
    double y;
    std::vector<double> x;
  };
  std::map<long long, std::map<long long, Row>> units;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 3 + k) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected " + std::to_string(3 + k) + " fields");
    }
    try {
      const long long unit = std::stoll(fields[0]);
      const long long period = std::stoll(fields[1]);
      Row row;
      row.y = std::stod(fields[2]);
      for (int j = 0; j < k; ++j) row.x.push_back(std::stod(fields[3 + j]));
      if (!units[unit].emplace(period, std::move(row)).second) {
        throw std::runtime_error("duplicate (unit, period)");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (units.empty()) throw std::runtime_error("panel file has no data rows");

  // Every unit must carry periods 0..T for a common T.
  long long t_max = -1;
  for (const auto& [unit, rows] : units) {
    long long expected = 0;
    for (const auto& [period, row] : rows) {
      if (period != expected) {
        throw std::runtime_error("unit " + std::to_string(unit) +
                                 " is missing period " + std::to_string(expected));
      }
      ++expected;
    }
    if (t_max < 0) t_max = expected - 1;
    if (expected - 1 != t_max) {
      throw std::runtime_error("unit " + std::to_string(unit) +
                               " has an unbalanced number of periods");
    }
  }
  if (t_max < 2) throw std::runtime_error("panel needs periods 0..T with T >= 2");

  const int n = static_cast<int>(units.size());
  const int t = static_cast<int>(t_max);
  Eigen::VectorXd y0(n);
  Eigen::MatrixXd y(n, t);
  std::vector<Eigen::MatrixXd> x;
  if (k > 0) x.assign(n, Eigen::MatrixXd(t, k));
  int i = 0;
  for (const auto& [unit, rows] : units) {
    for (const auto& [period, row] : rows) {
      if (period == 0) {
        y0(i) = row.y;
      } else {
        y(i, static_cast<int>(period) - 1) = row.y;
        if (k > 0) {
          for (int j = 0; j < k; ++j) x[i](static_cast<int>(period) - 1, j) = row.x[j];
        }
      }
    }
    ++i;
  }
  return PanelDataset::create(std::move(y0), std::move(y), std::move(x));
}

void write_panel_csv(const PanelDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write panel file: " + path);
  const int k = data.n_covariates();
  out << "unit,period,y";
  for (int j = 1; j <= k; ++j) out << ",x" << j;
  out << "\n";
  char buf[64];
  for (int i = 0; i < data.n_units(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.y0()(i));
    out << i + 1 << ",0," << buf;
    for (int j = 0; j < k; ++j) out << ",0";
    out << "\n";
    for (int t = 0; t < data.n_periods(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.y()(i, t));
      out << i + 1 << "," << t + 1 << "," << buf;
      for (int j = 0; j < k; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", data.x(i)(t, j));
        out << "," << buf;
      }
      out << "\n";
    }
  }
}

}  // namespace panelmmle
