#pragma once

#include <cmath>
#include <cstddef>

#include "monteclora/errors.hpp"

namespace mclora {

inline constexpr double kEulerGamma = 0.5772156649015328606;
inline constexpr double kPi = 3.14159265358979323846;

/// Natural log of the gamma function.
inline double log_gamma(double x) {
  if (x <= 0.0) throw DomainError("log_gamma: argument must be positive, got " + std::to_string(x));
  return std::lgamma(x);
}

/// Digamma psi(x) = d/dx ln Gamma(x).
/// Recurrence shift to x >= 8, then the Bernoulli asymptotic expansion.
inline double digamma(double x) {
  if (x <= 0.0) throw DomainError("digamma: argument must be positive, got " + std::to_string(x));
  double result = 0.0;
  while (x < 8.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^(2n))
  double series = inv2 * (1.0 / 12.0 -
                  inv2 * (1.0 / 120.0 -
                  inv2 * (1.0 / 252.0 -
                  inv2 * (1.0 / 240.0 -
                  inv2 * (1.0 / 132.0 -
                  inv2 * (691.0 / 32760.0))))));
  return result + std::log(x) - 0.5 * inv - series;
}

/// Trigamma psi'(x); same shift-then-expand scheme as digamma.
inline double trigamma(double x) {
  if (x <= 0.0) throw DomainError("trigamma: argument must be positive, got " + std::to_string(x));
  double result = 0.0;
  while (x < 8.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = 1.0 +
                  inv * 0.5 +
                  inv2 * (1.0 / 6.0 -
                  inv2 * (1.0 / 30.0 -
                  inv2 * (1.0 / 42.0 -
                  inv2 * (1.0 / 30.0 -
                  inv2 * (5.0 / 66.0)))));
  return result + inv * series;
}

/// Multivariate log-gamma ln Gamma_p(a).
inline double multivariate_log_gamma(std::size_t p, double a) {
  double result = 0.25 * static_cast<double>(p) * static_cast<double>(p - 1) * std::log(kPi);
  for (std::size_t j = 1; j <= p; ++j) {
    result += log_gamma(a + 0.5 * (1.0 - static_cast<double>(j)));
  }
  return result;
}

/// Multivariate digamma psi_p(a).
inline double multivariate_digamma(std::size_t p, double a) {
  double result = 0.0;
  for (std::size_t j = 1; j <= p; ++j) {
    result += digamma(a + 0.5 * (1.0 - static_cast<double>(j)));
  }
  return result;
}

/// Inverse of softplus: softplus(softplus_inverse(y)) == y for y > 0.
inline double softplus_inverse(double y) {
  if (y <= 0.0) throw DomainError("softplus_inverse: argument must be positive");
  // ln(e^y - 1), stabilized for large y.
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

}  // namespace mclora
