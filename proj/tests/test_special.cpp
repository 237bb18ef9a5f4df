#include "monteclora/special.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mclora;

// Reference values computed with 30-digit arbitrary-precision arithmetic.

TEST(Digamma, MatchesReferenceAtIntegersAndHalfIntegers) {
  EXPECT_NEAR(digamma(1.0), -0.57721566490153286061, 1e-12);
  EXPECT_NEAR(digamma(2.0), 0.42278433509846713939, 1e-12);
  EXPECT_NEAR(digamma(3.0), 0.92278433509846713939, 1e-12);
  EXPECT_NEAR(digamma(5.0), 1.5061176684318004727, 1e-12);
  EXPECT_NEAR(digamma(0.5), -1.9635100260214234794, 1e-12);
  EXPECT_NEAR(digamma(1.5), 0.036489973978576520559, 1e-12);
  EXPECT_NEAR(digamma(4.5), 1.3888709263595289015, 1e-12);
  EXPECT_NEAR(digamma(10.0), 2.2517525890667211076, 1e-12);
  EXPECT_NEAR(digamma(25.5), 3.2189424728839197665, 1e-12);
  EXPECT_NEAR(digamma(50.0), 3.901989673427892197, 1e-12);
}

TEST(Digamma, AtOneEqualsMinusEulerGamma) {
  EXPECT_NEAR(digamma(1.0), -kEulerGamma, 1e-9);
}

TEST(Digamma, RecurrenceHolds) {
  for (double x : {0.3, 1.7, 6.2, 33.0}) {
    EXPECT_NEAR(digamma(x + 1.0), digamma(x) + 1.0 / x, 1e-11) << "x=" << x;
  }
}

TEST(Digamma, NonPositiveArgumentThrows) {
  EXPECT_THROW(digamma(0.0), DomainError);
  EXPECT_THROW(digamma(-1.5), DomainError);
}

TEST(LogGamma, MatchesReference) {
  EXPECT_NEAR(log_gamma(0.5), 0.57236494292470008707, 1e-12);
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(2.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(5.0), 3.1780538303479456196, 1e-12);
  EXPECT_NEAR(log_gamma(7.5), 7.5343642367587329552, 1e-12);
  EXPECT_NEAR(log_gamma(12.0), 17.502307845873885839, 1e-11);
}

TEST(Trigamma, MatchesReference) {
  EXPECT_NEAR(trigamma(0.5), 4.9348022005446793094, 1e-11);
  EXPECT_NEAR(trigamma(1.0), 1.6449340668482264365, 1e-11);
  EXPECT_NEAR(trigamma(2.0), 0.64493406684822643647, 1e-11);
  EXPECT_NEAR(trigamma(3.5), 0.33035775610023486497, 1e-11);
  EXPECT_NEAR(trigamma(9.0), 0.11751201469403142513, 1e-11);
}

TEST(Trigamma, IsDerivativeOfDigamma) {
  const double h = 1e-6;
  for (double x : {0.7, 2.3, 8.8, 20.0}) {
    double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
    EXPECT_NEAR(trigamma(x), fd, 1e-6 * std::abs(fd)) << "x=" << x;
  }
}

TEST(MultivariateGamma, ReducesToScalarAtPEqualsOne) {
  for (double a : {0.8, 2.5, 7.0}) {
    EXPECT_NEAR(multivariate_log_gamma(1, a), log_gamma(a), 1e-13);
    EXPECT_NEAR(multivariate_digamma(1, a), digamma(a), 1e-13);
  }
}

TEST(MultivariateGamma, MatchesDefinitionAtPTwo) {
  // ln Gamma_2(a) = ln(pi)/2 + ln Gamma(a) + ln Gamma(a - 1/2)
  for (double a : {1.5, 3.0, 5.25}) {
    double want = 0.5 * std::log(kPi) + log_gamma(a) + log_gamma(a - 0.5);
    EXPECT_NEAR(multivariate_log_gamma(2, a), want, 1e-12);
    EXPECT_NEAR(multivariate_digamma(2, a), digamma(a) + digamma(a - 0.5), 1e-12);
  }
}

TEST(SoftplusInverse, RoundTrips) {
  for (double y : {1e-3, 0.5, 1.0, 4.0, 35.0}) {
    double x = softplus_inverse(y);
    double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    EXPECT_NEAR(sp, y, 1e-12 * std::max(1.0, y));
  }
  EXPECT_THROW(softplus_inverse(0.0), DomainError);
}
