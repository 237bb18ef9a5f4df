#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "monteclora/rng.hpp"
#include "monteclora/tensor.hpp"

namespace mclora::testutil {

inline double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

inline Tensor random_tensor(Engine& eng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> vals(shape_numel(shape));
  for (double& v : vals) v = dist(eng);
  return Tensor::from_data(std::move(shape), std::move(vals));
}

/// Reverse-mode gradient of builder(x) with respect to x.
inline std::vector<double> autodiff_grad(const std::function<Tensor(const Tensor&)>& builder,
                                         const Tensor& x) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  Tensor loss = builder(leaf);
  loss.backward();
  return leaf.grad();
}

/// Central-difference gradient of the same builder.
inline std::vector<double> fd_grad(const std::function<Tensor(const Tensor&)>& builder,
                                   const Tensor& x, double h = 1e-4) {
  return finite_diff_grad([&](const Tensor& t) { return builder(t).value(); }, x, h).values();
}

/// Relative disagreement between reverse-mode and finite differences.
inline double gradient_gap(const std::function<Tensor(const Tensor&)>& builder, const Tensor& x,
                           double h = 1e-4) {
  return rel_err(autodiff_grad(builder, x), fd_grad(builder, x, h));
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Dense
/// oracle for the power-iteration and sampler positivity checks.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
  std::sort(eig.begin(), eig.end());
  return eig;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace mclora::testutil
