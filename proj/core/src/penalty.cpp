#include "panelmmle/penalty.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace panelmmle {

namespace {

long long gcd_ll(long long a, long long b) {
  a = std::llabs(a);
  b = std::llabs(b);
  while (b != 0) {
    const long long r = a % b;
    a = b;
    b = r;
  }
  return a == 0 ? 1 : a;
}

}  // namespace

Rational::Rational(long long n, long long d) {
  if (d == 0) throw std::invalid_argument("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const long long g = gcd_ll(n, d);
  num = n / g;
  den = d / g;
}

Rational Rational::operator+(const Rational& other) const {
  const __int128 n = static_cast<__int128>(num) * other.den +
                     static_cast<__int128>(other.num) * den;
  const __int128 d = static_cast<__int128>(den) * other.den;
  // Reduce in 128 bits before narrowing.
  __int128 a = n < 0 ? -n : n;
  __int128 b = d;
  while (b != 0) {
    const __int128 r = a % b;
    a = b;
    b = r;
  }
  if (a == 0) a = 1;
  return Rational(static_cast<long long>(n / a), static_cast<long long>(d / a));
}

Rational Rational::operator*(const Rational& other) const {
  const long long g1 = gcd_ll(num, other.den);
  const long long g2 = gcd_ll(other.num, den);
  return Rational((num / g1) * (other.num / g2), (den / g2) * (other.den / g1));
}

PenaltyPolynomial::PenaltyPolynomial(int n_periods) : T_(n_periods) {
  if (T_ < 2) throw std::invalid_argument("penalty requires T >= 2");
  if (T_ > 24) throw std::invalid_argument("penalty coefficients limited to T <= 24");
  coeff_.resize(T_);
  coeff_[0] = Rational(0, 1);
  const long long scale = static_cast<long long>(T_) * (T_ - 1);
  for (int t = 1; t <= T_ - 1; ++t) {
    coeff_[t] = Rational(T_ - t, static_cast<long long>(t) * scale);
  }
}

double PenaltyPolynomial::derivative(double r, int order) const {
  if (order < 0 || order > 5) throw std::invalid_argument("penalty order must be 0..5");
  // Horner on the differentiated coefficients: coeff of r^{t-order} is
  // coeff_[t] * t (t-1) ... (t-order+1).
  double acc = 0.0;
  for (int t = T_ - 1; t >= order; --t) {
    double fall = 1.0;
    for (int j = 0; j < order; ++j) fall *= static_cast<double>(t - j);
    acc = acc * r + coeff_[t].to_double() * fall;
  }
  return acc;
}

Rational PenaltyPolynomial::derivative_exact(long long r, int order) const {
  if (order < 0 || order > 5) throw std::invalid_argument("penalty order must be 0..5");
  if (r != -1 && r != 0 && r != 1) {
    throw std::invalid_argument("exact evaluation supports r in {-1, 0, 1}");
  }
  Rational acc(0, 1);
  for (int t = order; t <= T_ - 1; ++t) {
    long long fall = 1;
    for (int j = 0; j < order; ++j) fall *= (t - j);
    long long power = 1;  // r^{t-order}
    if (r == 0) {
      power = (t == order) ? 1 : 0;
    } else if (r == -1) {
      power = ((t - order) % 2 == 0) ? 1 : -1;
    }
    acc = acc + coeff_[t] * Rational(fall * power, 1);
  }
  return acc;
}

double PenaltyPolynomial::first_derivative_closed_form(int n_periods, double r) {
  const double T = static_cast<double>(n_periods);
  if (r == 1.0) return 0.5;
  return (T - 1.0 - T * r + std::pow(r, T)) / (T * (T - 1.0) * (1.0 - r) * (1.0 - r));
}

}  // namespace panelmmle
