#pragma once

#include <Eigen/Dense>
#include <vector>

namespace panelmmle {

// Real roots of a polynomial with ascending coefficients, via the balanced
// companion matrix and a Newton polish on the exact coefficients.  Roots with
// |imag| > imag_tol * (1 + |real|) are discarded.
std::vector<double> real_polynomial_roots(const Eigen::VectorXd& coeffs,
                                          double imag_tol = 1e-8);

}  // namespace panelmmle
