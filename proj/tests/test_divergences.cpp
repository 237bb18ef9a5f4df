#include "monteclora/divergences.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "monteclora/rng.hpp"
#include "monteclora/samplers.hpp"
#include "test_util.hpp"

using namespace mclora;
using testutil::gradient_gap;

namespace {

// Monte Carlo KL oracle for zero-mean Gaussians: E_P[log P - log Q] with
// P = N(0, sigma) and Q = N(0, I).
double mc_kl_gaussian_vs_identity(const Tensor& sigma, int draws, std::uint64_t seed) {
  NoGradGuard guard;
  const std::size_t p = sigma.rows();
  std::vector<double> l = linalg::cholesky_lower(sigma.values(), p);
  std::vector<double> prec = linalg::spd_inverse_from_cholesky(l, p);
  double logdet = 0.0;
  for (std::size_t i = 0; i < p; ++i) logdet += 2.0 * std::log(l[i * p + i]);
  Engine eng(seed);
  double acc = 0.0;
  std::vector<double> z(p), x(p);
  for (int d = 0; d < draws; ++d) {
    fill_normal(eng, z);
    for (std::size_t i = 0; i < p; ++i) {
      x[i] = 0.0;
      for (std::size_t j = 0; j <= i; ++j) x[i] += l[i * p + j] * z[j];
    }
    double qp = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      qq += x[i] * x[i];
      for (std::size_t j = 0; j < p; ++j) qp += x[i] * prec[i * p + j] * x[j];
    }
    acc += 0.5 * (qq - qp - logdet);
  }
  return acc / draws;
}

// Monte Carlo KL oracle for Dirichlet distributions via exact Gamma draws.
double mc_kl_dirichlet(const std::vector<double>& a1, const std::vector<double>& a2, int draws,
                       std::uint64_t seed) {
  Engine eng(seed);
  const std::size_t n = a1.size();
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += a1[i];
    s2 += a2[i];
  }
  double const_term = log_gamma(s1) - log_gamma(s2);
  for (std::size_t i = 0; i < n; ++i) const_term += log_gamma(a2[i]) - log_gamma(a1[i]);
  double acc = 0.0;
  std::vector<double> y(n);
  for (int d = 0; d < draws; ++d) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::gamma_distribution<double> g(a1[i], 1.0);
      y[i] = std::max(g(eng), 1e-300);
      total += y[i];
    }
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i) lp += (a1[i] - a2[i]) * std::log(y[i] / total);
    acc += lp;
  }
  return const_term + acc / draws;
}

// Quadrature oracle: the p = 1 Wishart W_1(v, n) is Gamma(n/2, 2v), so its
// KL has an independent 1-D integral form. Integrates in log-space with
// Simpson's rule.
double quadrature_kl_gamma(double k1, double t1, double k2, double t2) {
  auto log_pdf = [](double x, double k, double t) {
    return (k - 1.0) * std::log(x) - x / t - log_gamma(k) - k * std::log(t);
  };
  const double lo = std::log(1e-14), hi = std::log(120.0 * std::max(k1 * t1, 1.0));
  const int steps = 200000;  // even
  const double h = (hi - lo) / steps;
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) {
    double t = lo + h * i;
    double x = std::exp(t);
    double lp = log_pdf(x, k1, t1);
    double f = std::exp(lp) * (lp - log_pdf(x, k2, t2)) * x;  // jacobian e^t
    double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * f;
  }
  return acc * h / 3.0;
}

Tensor spd2(double a, double b, double c) { return Tensor::from_data({2, 2}, {a, b, b, c}); }

}  // namespace

TEST(KlGaussianSimplified, IdentityIsZero) {
  for (std::size_t p : {1u, 2u, 5u}) {
    EXPECT_NEAR(kl_gaussian_simplified(Tensor::identity(p)).value(), 0.0, 1e-12);
  }
}

TEST(KlGaussianSimplified, FrozenDiagonalCases) {
  // diag(2,2): (4 - ln 4 - 2) / 2; diag(0.5,2): (2.5 - ln 1 - 2) / 2.
  EXPECT_NEAR(kl_gaussian_simplified(spd2(2, 0, 2)).value(), 0.30685281944005469, 1e-12);
  EXPECT_NEAR(kl_gaussian_simplified(spd2(0.5, 0, 2)).value(), 0.25, 1e-12);
}

TEST(KlGaussianSimplified, MatchesMonteCarloOracle) {
  Tensor sigma = spd2(2.0, 0.4, 1.2);
  double closed = kl_gaussian_simplified(sigma).value();
  double mc = mc_kl_gaussian_vs_identity(sigma, 200000, 12345);
  EXPECT_NEAR(mc, closed, 0.02 * std::abs(closed));
}

TEST(KlGaussianSimplified, NonSpdThrows) {
  EXPECT_THROW(kl_gaussian_simplified(spd2(1.0, 2.0, 1.0)), NotPositiveDefiniteError);
}

TEST(KlGaussianGeneral, CoincidingDistributionsGiveZero) {
  Tensor mu = Tensor::from_data({2}, {0.3, -0.8});
  Tensor sigma = spd2(1.5, 0.2, 0.9);
  EXPECT_NEAR(kl_gaussian_general(mu, sigma, mu, sigma).value(), 0.0, 1e-12);
}

TEST(KlGaussianGeneral, OneDimensionalMeanShift) {
  Tensor one = Tensor::from_data({1, 1}, {1.0});
  EXPECT_NEAR(kl_gaussian_general(Tensor::from_data({1}, {1.0}), one,
                                  Tensor::from_data({1}, {0.0}), one)
                  .value(),
              0.5, 1e-12);
}

TEST(KlGaussianGeneral, ReducesToSimplifiedForm) {
  Tensor mu = Tensor::from_data({2}, {0.7, -0.1});
  Tensor sigma = spd2(2.0, 0.4, 1.2);
  double general = kl_gaussian_general(mu, sigma, mu, Tensor::identity(2)).value();
  double simplified = kl_gaussian_simplified(sigma).value();
  EXPECT_NEAR(general, simplified, 1e-12);
}

TEST(KlWishartSimplified, IdentityScaleIsZero) {
  EXPECT_NEAR(kl_wishart_simplified(Tensor::full({3}, 1.0), 5).value(), 0.0, 1e-12);
}

TEST(KlWishartSimplified, FrozenCase) {
  // (3(-ln 4) + 3*4 - 3*2)/2 = 3 - 1.5 ln 4
  EXPECT_NEAR(kl_wishart_simplified(Tensor::from_data({2}, {2.0, 2.0}), 3).value(),
              0.92055845832016064, 1e-12);
}

TEST(KlWishartSimplified, ScalarCaseMinimizedAtOne) {
  auto value = [](double c) {
    return kl_wishart_simplified(Tensor::from_data({1}, {c}), 4).value();
  };
  EXPECT_NEAR(value(1.0), 0.0, 1e-12);
  for (double c : {0.25, 0.5, 0.9, 1.1, 2.0, 8.0}) EXPECT_GT(value(c), value(1.0));
}

TEST(KlWishartSimplified, NonPositiveEntryThrows) {
  EXPECT_THROW(kl_wishart_simplified(Tensor::from_data({2}, {1.0, 0.0}), 3), DomainError);
}

TEST(KlWishartGeneral, CoincidingDistributionsGiveZero) {
  Tensor v = Tensor::from_data({3}, {0.5, 2.0, 1.3});
  EXPECT_NEAR(kl_wishart_general(v, 6, v, 6, 3).value(), 0.0, 1e-12);
}

TEST(KlWishartGeneral, ReducesToSimplifiedWhenReferenceIsStandard) {
  Tensor v = Tensor::from_data({2}, {2.0, 2.0});
  double general = kl_wishart_general(v, 3, Tensor::full({2}, 1.0), 3, 2).value();
  EXPECT_NEAR(general, 0.92055845832016064, 1e-10);
  Tensor v2 = Tensor::from_data({3}, {0.4, 1.7, 3.0});
  EXPECT_NEAR(kl_wishart_general(v2, 7, Tensor::full({3}, 1.0), 7, 3).value(),
              kl_wishart_simplified(v2, 7).value(), 1e-10);
}

TEST(KlWishartGeneral, ScalarCaseMatchesQuadratureOracle) {
  // W_1(v, n) = Gamma(n/2, 2v).
  struct Case {
    double v1;
    std::size_t n1;
    double v2;
    std::size_t n2;
  };
  for (const Case& c : {Case{2.0, 3, 1.0, 3}, Case{0.7, 5, 1.3, 5}, Case{1.5, 4, 0.9, 6}}) {
    double closed = kl_wishart_general(Tensor::from_data({1}, {c.v1}), c.n1,
                                       Tensor::from_data({1}, {c.v2}), c.n2, 1)
                        .value();
    double quad = quadrature_kl_gamma(0.5 * c.n1, 2.0 * c.v1, 0.5 * c.n2, 2.0 * c.v2);
    EXPECT_NEAR(closed, quad, 1e-6) << "case v1=" << c.v1;
  }
}

TEST(KlWishartGeneral, DofBelowDimensionThrows) {
  Tensor v = Tensor::full({3}, 1.0);
  EXPECT_THROW(kl_wishart_general(v, 2, v, 5, 3), ContractError);
}

TEST(KlDirichlet, EqualConcentrationsGiveZero) {
  Tensor a = Tensor::from_data({3}, {0.4, 2.2, 1.0});
  EXPECT_NEAR(kl_dirichlet(a, a).value(), 0.0, 1e-12);
}

TEST(KlDirichlet, FrozenTwoComponentCase) {
  // ln 2 + psi(2) - psi(3) = ln 2 - 1/2
  Tensor a1 = Tensor::from_data({2}, {2.0, 1.0});
  Tensor a2 = Tensor::full({2}, 1.0);
  EXPECT_NEAR(kl_dirichlet(a1, a2).value(), std::log(2.0) - 0.5, 1e-12);
}

TEST(KlDirichlet, IsAsymmetric) {
  Tensor a1 = Tensor::from_data({2}, {2.0, 1.0});
  Tensor a2 = Tensor::full({2}, 1.0);
  double forward = kl_dirichlet(a1, a2).value();
  double backward = kl_dirichlet(a2, a1).value();
  EXPECT_GT(std::abs(forward - backward), 1e-3);
}

TEST(KlDirichlet, MatchesMonteCarloOracle) {
  std::vector<double> a1{1.8, 0.7, 2.4}, a2{1.0, 1.0, 1.0};
  double closed =
      kl_dirichlet(Tensor::from_data({3}, a1), Tensor::from_data({3}, a2)).value();
  double mc = mc_kl_dirichlet(a1, a2, 200000, 777);
  EXPECT_NEAR(mc, closed, 0.02 * std::abs(closed));
}

TEST(KlDirichlet, NonPositiveEntryThrows) {
  EXPECT_THROW(kl_dirichlet(Tensor::from_data({2}, {1.0, -1.0}), Tensor::full({2}, 1.0)),
               DomainError);
  EXPECT_THROW(kl_dirichlet(Tensor::full({2}, 1.0), Tensor::from_data({2}, {0.0, 1.0})),
               DomainError);
}

TEST(KlProperties, NonNegativeAndZeroOnlyAtCoincidence) {
  Engine eng(91);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor g = testutil::random_tensor(eng, {3, 3});
    Tensor sigma = add(matmul(g, transpose(g)), scale(Tensor::identity(3), 0.3));
    EXPECT_GE(kl_gaussian_simplified(sigma).value(), -1e-12);
    Tensor v = testutil::random_tensor(eng, {3}, 0.2, 3.0);
    EXPECT_GE(kl_wishart_simplified(v, 4).value(), -1e-12);
    Tensor a = testutil::random_tensor(eng, {4}, 0.2, 3.0);
    EXPECT_GE(kl_dirichlet(a, Tensor::full({4}, 1.0)).value(), -1e-12);
    EXPECT_NEAR(kl_dirichlet(a, a).value(), 0.0, 1e-12);
  }
}

TEST(KlGradients, MatchFiniteDifferences) {
  Engine eng(97);
  auto gaussian_builder = [](const Tensor& t) {
    Tensor sigma = add(matmul(t, transpose(t)), scale(Tensor::identity(2), 0.5));
    return kl_gaussian_simplified(sigma);
  };
  auto wishart_builder = [](const Tensor& t) {
    return kl_wishart_simplified(softplus(t), 3);
  };
  auto dirichlet_builder = [](const Tensor& t) {
    return kl_dirichlet(softplus(t), Tensor::full({3}, 1.0));
  };
  auto wishart_general_builder = [](const Tensor& t) {
    return kl_wishart_general(softplus(t), 4, Tensor::from_data({3}, {0.5, 1.5, 1.0}), 5, 3);
  };
  Tensor ref_sigma = spd2(1.4, -0.2, 0.8);
  Tensor ref_mu = Tensor::from_data({2}, {0.4, -0.6});
  auto gaussian_general_mu = [&](const Tensor& m) {
    return kl_gaussian_general(m, spd2(1.1, 0.3, 0.9), ref_mu, ref_sigma);
  };
  auto gaussian_general_sigma = [&](const Tensor& t) {
    Tensor sigma1 = add(matmul(t, transpose(t)), scale(Tensor::identity(2), 0.5));
    return kl_gaussian_general(ref_mu, sigma1, ref_mu, ref_sigma);
  };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    worst = std::max(worst, gradient_gap(gaussian_builder, testutil::random_tensor(eng, {2, 2})));
    worst = std::max(worst, gradient_gap(wishart_builder, testutil::random_tensor(eng, {3}, -1, 2)));
    worst = std::max(worst, gradient_gap(dirichlet_builder, testutil::random_tensor(eng, {3}, -1, 2)));
    worst = std::max(worst,
                     gradient_gap(wishart_general_builder, testutil::random_tensor(eng, {3}, -1, 2)));
    worst = std::max(worst, gradient_gap(gaussian_general_mu, testutil::random_tensor(eng, {2})));
    worst =
        std::max(worst, gradient_gap(gaussian_general_sigma, testutil::random_tensor(eng, {2, 2})));
  }
  EXPECT_LT(worst, 1e-5);
}
