#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "monteclora/errors.hpp"

// Small dense row-major kernels shared by the tensor ops and the samplers.
// Sizes here are LoRA-rank scale, so plain loops are the right tool.

namespace mclora::linalg {

/// C (m x n) += A (m x k) * B (k x n)
inline void matmul_acc(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C (m x n) += A (m x k) * B^T, where B is (n x k)
inline void matmul_nt_acc(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

/// C (m x n) += A^T * B, where A is (k x m), B is (k x n)
inline void matmul_tn_acc(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = a + l * m;
    const double* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
/// Only the lower triangle of `a` is read. Throws with the failing pivot
/// index when the matrix is not positive definite.
inline std::vector<double> cholesky_lower(const std::vector<double>& a, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (sum <= 0.0) {
          throw NotPositiveDefiniteError(
              "cholesky: non-positive pivot " + std::to_string(sum) + " at index " +
                  std::to_string(i),
              i);
        }
        l[i * n + i] = std::sqrt(sum);
      } else {
        l[i * n + j] = sum / l[j * n + j];
      }
    }
  }
  return l;
}

/// Solves L * X = B in place for lower-triangular L; B is (n x m) row-major.
inline void solve_lower_inplace(const std::vector<double>& l, std::vector<double>& b,
                                std::size_t n, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      double sum = b[i * m + c];
      for (std::size_t k = 0; k < i; ++k) sum -= l[i * n + k] * b[k * m + c];
      b[i * m + c] = sum / l[i * n + i];
    }
  }
}

/// Solves L^T * X = B in place for lower-triangular L; B is (n x m) row-major.
inline void solve_lower_transposed_inplace(const std::vector<double>& l, std::vector<double>& b,
                                           std::size_t n, std::size_t m) {
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t c = 0; c < m; ++c) {
      double sum = b[ii * m + c];
      for (std::size_t k = ii + 1; k < n; ++k) sum -= l[k * n + ii] * b[k * m + c];
      b[ii * m + c] = sum / l[ii * n + ii];
    }
  }
}

/// Inverse of the SPD matrix A = L L^T given its lower Cholesky factor.
inline std::vector<double> spd_inverse_from_cholesky(const std::vector<double>& l, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  solve_lower_inplace(l, inv, n, n);
  solve_lower_transposed_inplace(l, inv, n, n);
  return inv;
}

inline double frobenius_norm(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace mclora::linalg
