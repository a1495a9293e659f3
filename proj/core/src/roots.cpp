#include "panelmmle/roots.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace panelmmle {

namespace {

double evaluate(const Eigen::VectorXd& coeffs, double x) {
  double acc = 0.0;
  for (int j = static_cast<int>(coeffs.size()) - 1; j >= 0; --j) {
    acc = acc * x + coeffs(j);
  }
  return acc;
}

double evaluate_derivative(const Eigen::VectorXd& coeffs, double x) {
  double acc = 0.0;
  for (int j = static_cast<int>(coeffs.size()) - 1; j >= 1; --j) {
    acc = acc * x + coeffs(j) * j;
  }
  return acc;
}

// Parlett-Reinsch style balancing restricted to powers of two.
void balance(Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      double row_norm = m.row(i).lpNorm<1>() - std::abs(m(i, i));
      double col_norm = m.col(i).lpNorm<1>() - std::abs(m(i, i));
      if (row_norm == 0.0 || col_norm == 0.0) continue;
      double factor = 1.0;
      const double s = row_norm + col_norm;
      while (col_norm < row_norm / 2.0) {
        factor *= 2.0;
        col_norm *= 4.0;
      }
      while (col_norm > row_norm * 2.0) {
        factor /= 2.0;
        col_norm /= 4.0;
      }
      if (factor != 1.0 &&
          (row_norm / factor + col_norm * factor) < 0.95 * s) {
        m.row(i) /= factor;
        m.col(i) *= factor;
        changed = true;
      }
    }
  }
}

}  // namespace

std::vector<double> real_polynomial_roots(const Eigen::VectorXd& coeffs,
                                          double imag_tol) {
  int degree = static_cast<int>(coeffs.size()) - 1;
  while (degree > 0 && coeffs(degree) == 0.0) --degree;
  if (degree <= 0) return {};
  if (degree == 1) return {-coeffs(0) / coeffs(1)};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int j = 0; j < degree; ++j) {
    companion(j, degree - 1) = -coeffs(j) / coeffs(degree);
    if (j + 1 < degree) companion(j + 1, j) = 1.0;
  }
  balance(companion);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("companion eigenvalue computation failed");
  }

  std::vector<double> roots;
  for (int j = 0; j < degree; ++j) {
    const std::complex<double> z = solver.eigenvalues()(j);
    if (std::abs(z.imag()) > imag_tol * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    // Newton polish on the exact coefficients.
    for (int it = 0; it < 12; ++it) {
      const double f = evaluate(coeffs, x);
      const double df = evaluate_derivative(coeffs, x);
      if (df == 0.0) break;
      const double step = f / df;
      x -= step;
      if (std::abs(step) < 1e-14 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  std::sort(roots.begin(), roots.end());
  // Collapse duplicates that the polish pushed together.
  std::vector<double> unique;
  for (double x : roots) {
    if (unique.empty() || std::abs(x - unique.back()) > 1e-10 * (1.0 + std::abs(x))) {
      unique.push_back(x);
    }
  }
  return unique;
}

}  // namespace panelmmle
