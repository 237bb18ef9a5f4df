#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "monteclora/errors.hpp"
#include "monteclora/rng.hpp"
#include "monteclora/tensor.hpp"

namespace mclora {

/// Wishart prior W(diag(V), dof) over p x p covariance matrices.
struct WishartPrior {
  Tensor scale_diag;  // length-p positive vector, may carry gradient
  std::size_t dof = 0;

  std::size_t dim() const { return scale_diag.numel(); }

  void validate() const {
    for (double v : scale_diag.values()) {
      if (v <= 0.0) throw DomainError("WishartPrior: scale entries must be positive");
    }
    if (dof < dim()) {
      throw ContractError("WishartPrior: dof " + std::to_string(dof) + " < dimension " +
                          std::to_string(dim()));
    }
  }
};

/// Dirichlet prior Dir(alpha) over length-N mixture weights.
struct DirichletPrior {
  Tensor concentration;  // length-N positive vector, may carry gradient

  std::size_t size() const { return concentration.numel(); }

  void validate() const {
    for (double a : concentration.values()) {
      if (a <= 0.0) throw DomainError("DirichletPrior: concentration entries must be positive");
    }
  }
};

/// x = mu + noise * L^T applied row-wise: each of the q rows of the result is
/// an independent p-dimensional draw from N(mu_row, L L^T). The result stays
/// on the graph, so gradients reach mu and whatever produced L.
inline Tensor sample_gaussian_matrix(const Tensor& mu, const Tensor& chol_lower,
                                     const Tensor& noise) {
  if (noise.shape() != mu.shape()) {
    throw DimensionError("sample_gaussian_matrix: noise " + shape_str(noise.shape()) +
                         " vs mean " + shape_str(mu.shape()));
  }
  if (!chol_lower.is_matrix() || chol_lower.rows() != chol_lower.cols() ||
      chol_lower.rows() != mu.cols()) {
    throw DimensionError("sample_gaussian_matrix: factor " + shape_str(chol_lower.shape()) +
                         " vs mean " + shape_str(mu.shape()));
  }
  return add(mu, matmul(noise, transpose(chol_lower)));
}

/// Sigma = L Sigma~ L^T with Sigma~ = G^T G from the dof x p standard-normal
/// base noise G and L = diag(sqrt(V)). Differentiable with respect to V.
/// With normalize_by_dof the draw is divided by dof so it concentrates near
/// diag(V) instead of dof * diag(V).
inline Tensor sample_wishart(const WishartPrior& prior, const Tensor& noise,
                             bool normalize_by_dof = false) {
  prior.validate();
  const std::size_t p = prior.dim();
  if (!noise.is_matrix() || noise.rows() != prior.dof || noise.cols() != p) {
    throw DimensionError("sample_wishart: noise " + shape_str(noise.shape()) + ", expected [" +
                         std::to_string(prior.dof) + "x" + std::to_string(p) + "]");
  }
  Tensor sigma_tilde = matmul(transpose(noise), noise);
  Tensor d = diag_embed(sqrt_t(prior.scale_diag));
  Tensor sigma = matmul(matmul(d, sigma_tilde), d);
  if (normalize_by_dof) sigma = scale(sigma, 1.0 / static_cast<double>(prior.dof));
  return sigma;
}

namespace detail {

inline double clamp_uniform(double u) {
  return std::min(std::max(u, 1e-12), 1.0 - 1e-12);
}

}  // namespace detail

/// Surrogate Dirichlet sample y_i = alpha_i * (-log eps_i), pi = y / sum(y).
/// Exact in distribution at alpha_i = 1; always differentiable in alpha.
/// With `exact` the returned values come from a Gamma-based sampler while the
/// gradient keeps the surrogate path (straight-through).
inline Tensor sample_dirichlet(const DirichletPrior& prior, const std::vector<double>& uniforms,
                               bool exact = false) {
  prior.validate();
  const std::size_t n = prior.size();
  if (uniforms.size() != n) {
    throw DimensionError("sample_dirichlet: " + std::to_string(uniforms.size()) +
                         " uniforms for " + std::to_string(n) + " components");
  }
  std::vector<double> neglog(n);
  for (std::size_t i = 0; i < n; ++i)
    neglog[i] = -std::log(detail::clamp_uniform(uniforms[i]));
  Tensor y = mul(prior.concentration, Tensor::from_data({n}, std::move(neglog)));
  Tensor pi = div(y, sum(y));
  if (!exact) return pi;

  // Deterministic Gamma draws keyed off the base uniforms, so the buffered
  // stream contract is preserved even though rejection sampling consumes a
  // variable number of raw draws.
  std::uint64_t key = 0x9e3779b97f4a7c15ULL;
  for (double u : uniforms) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(u));
    std::memcpy(&bits, &u, sizeof(bits));
    key = splitmix64(key ^ bits);
  }
  Engine eng(key);
  std::vector<double> gamma_draws(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::gamma_distribution<double> g(prior.concentration.values()[i], 1.0);
    gamma_draws[i] = std::max(g(eng), 1e-300);
    total += gamma_draws[i];
  }
  std::vector<double> correction(n);
  for (std::size_t i = 0; i < n; ++i) correction[i] = gamma_draws[i] / total - pi.values()[i];
  return add(pi, Tensor::from_data({n}, std::move(correction)));
}

/// One pre-generated bundle of base noise: everything a single mixture
/// forward consumes.
struct NoiseRecord {
  std::vector<double> wishart;               // dof x cols standard normals
  std::vector<std::vector<double>> gaussian;  // N matrices of rows x cols standard normals
  std::vector<double> uniforms;              // N uniforms in (0,1)
};

struct NoiseShape {
  std::size_t rows = 0;        // q, rows of each Gaussian component draw
  std::size_t cols = 0;        // p
  std::size_t components = 0;  // N
  std::size_t dof = 0;         // Wishart base-noise rows
};

/// Fixed-size queue of pre-generated base-noise records, consumed in O(1)
/// and refilled in bulk from the continuing seed stream when exhausted.
/// Stores base noise rather than transformed samples, so the transformation
/// through the current parameters always sees fresh gradients.
class NoiseBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 15;

  NoiseBuffer(NoiseShape shape, std::uint64_t seed, std::size_t capacity = kDefaultCapacity)
      : shape_(shape), capacity_(capacity), engine_(seed) {
    if (capacity_ == 0) throw ContractError("NoiseBuffer: capacity must be >= 1");
    refill();
  }

  const NoiseShape& noise_shape() const { return shape_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  std::size_t draws() const { return draws_; }
  std::size_t refills() const { return refills_; }

  /// Next unconsumed record; triggers a full refill when the queue is spent.
  const NoiseRecord& next() {
    if (cursor_ == queue_.size()) refill();
    ++draws_;
    return queue_[cursor_++];
  }

 private:
  void refill() {
    queue_.resize(capacity_);
    for (NoiseRecord& rec : queue_) {
      rec.wishart.resize(shape_.dof * shape_.cols);
      for (double& v : rec.wishart) v = normal_(engine_);
      rec.gaussian.resize(shape_.components);
      for (auto& g : rec.gaussian) {
        g.resize(shape_.rows * shape_.cols);
        for (double& v : g) v = normal_(engine_);
      }
      rec.uniforms.resize(shape_.components);
      for (double& v : rec.uniforms) v = uniform_(engine_);
    }
    cursor_ = 0;
    ++refills_;
  }

  NoiseShape shape_;
  std::size_t capacity_;
  std::vector<NoiseRecord> queue_;
  std::size_t cursor_ = 0;
  std::size_t draws_ = 0;
  std::size_t refills_ = 0;
  Engine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mclora
