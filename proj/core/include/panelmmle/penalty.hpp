#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace panelmmle {

// Exact rational number with reduction; large enough for the penalty
// coefficients of any realistic panel length (T <= 24 for the exact paths).
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n, long long d);
  Rational operator+(const Rational& other) const;
  Rational operator*(const Rational& other) const;
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational& other) const {
    return num == other.num && den == other.den;
  }
};

// The incidental-parameter bias penalty
//   xi(r) = (T(T-1))^{-1} sum_{t=1}^{T-1} ((T-t)/t) r^t,
// held as exact rational coefficients and evaluated by Horner.  The closed
// form (T-1-Tr+r^T)/(T(T-1)(1-r)^2) cancels catastrophically near r = 1 and
// is kept only as a test oracle away from 1.
class PenaltyPolynomial {
 public:
  explicit PenaltyPolynomial(int n_periods);

  int n_periods() const { return T_; }

  // d^order/dr^order xi(r) for order 0..5.
  double derivative(double r, int order) const;

  double value(double r) const { return derivative(r, 0); }

  // Exact rational evaluation at integer r (intended for r in {-1, 0, 1}).
  Rational derivative_exact(long long r, int order) const;

  // Closed-form first derivative, valid for r != 1 (test oracle).
  static double first_derivative_closed_form(int n_periods, double r);

 private:
  int T_;
  std::vector<Rational> coeff_;  // coeff_[t] multiplies r^t, t = 0..T-1
};

}  // namespace panelmmle
