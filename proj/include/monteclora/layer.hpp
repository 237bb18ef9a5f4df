#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "monteclora/divergences.hpp"
#include "monteclora/errors.hpp"
#include "monteclora/samplers.hpp"
#include "monteclora/special.hpp"
#include "monteclora/tensor.hpp"

namespace mclora {

enum class MixtureMode { standard, sparse, posthoc };

inline const char* to_string(MixtureMode m) {
  switch (m) {
    case MixtureMode::standard: return "standard";
    case MixtureMode::sparse: return "sparse";
    case MixtureMode::posthoc: return "posthoc";
  }
  return "?";
}

inline MixtureMode mixture_mode_from_string(const std::string& s) {
  if (s == "standard") return MixtureMode::standard;
  if (s == "sparse") return MixtureMode::sparse;
  if (s == "posthoc") return MixtureMode::posthoc;
  throw ConfigError("unknown mixture mode '" + s + "'");
}

/// Per-layer mixture parameters. Positivity of the Wishart scale V and the
/// Dirichlet concentration alpha is maintained by storing unconstrained
/// reals mapped through softplus.
struct MixtureSpec {
  Tensor mu;         // q x p trainable mean (the adapter weights)
  Tensor v_raw;      // length p; V = softplus(v_raw)
  Tensor alpha_raw;  // length N; alpha = softplus(alpha_raw)

  std::size_t components = 4;    // N
  double sample_scale = 5e-3;    // epsilon
  double kl_weight = 1e-5;       // eta
  std::size_t dof = 0;           // Wishart degrees of freedom, default p
  std::size_t outer_samples = 1; // M
  MixtureMode mode = MixtureMode::standard;
  bool normalize_by_dof = false;
  bool exact_dirichlet = false;
  bool diagonal_sigma = false;   // diagonal-of-Sigma approximation path
  bool kl_on_expected_sigma = false;

  std::size_t rows() const { return mu.rows(); }  // q
  std::size_t dim() const { return mu.cols(); }   // p

  Tensor wishart_scale() const { return softplus(v_raw); }
  Tensor dirichlet_concentration() const { return softplus(alpha_raw); }

  NoiseShape noise_shape() const { return NoiseShape{rows(), dim(), components, dof}; }
};

/// Builds a spec with V = 1, alpha = `alpha_init` and a zero mean of the
/// requested shape; the mean is usually overwritten by the model builder.
inline MixtureSpec make_mixture_spec(std::size_t q, std::size_t p, std::size_t components,
                                     double sample_scale = 5e-3, double kl_weight = 1e-5,
                                     std::size_t dof = 0) {
  MixtureSpec spec;
  spec.mu = Tensor::zeros({q, p});
  spec.mu.set_requires_grad(true);
  spec.v_raw = Tensor::full({p}, softplus_inverse(1.0));
  spec.v_raw.set_requires_grad(true);
  spec.alpha_raw = Tensor::full({components}, softplus_inverse(1.0));
  spec.alpha_raw.set_requires_grad(true);
  spec.components = components;
  spec.sample_scale = sample_scale;
  spec.kl_weight = kl_weight;
  spec.dof = dof == 0 ? p : dof;
  return spec;
}

/// Frozen base weight plus the trainable low-rank pair. The down projection
/// is the mixture mean held in MixtureSpec; this struct owns the rest.
struct LoraPair {
  Tensor w0;  // n_out x n_in, never receives gradients
  Tensor b;   // n_out x r, zero-initialized
  std::size_t rank = 0;
  double scaling = 2.0;  // alpha_lora / r with alpha_lora = 2r
};

/// One-hot at the arg-max mixture weight; ties broken by lowest index.
/// The result is a constant: selection is not a differentiable operation.
inline Tensor sparsify(const Tensor& pi) {
  if (pi.shape().size() != 1) {
    throw DimensionError("sparsify: expected vector, got " + shape_str(pi.shape()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < pi.numel(); ++i) {
    if (pi.values()[i] > pi.values()[best]) best = i;
  }
  std::vector<double> out(pi.numel(), 0.0);
  out[best] = 1.0;
  return Tensor::from_data(pi.shape(), std::move(out));
}

/// Cooperative loss: sum of squared mixture weights, minimized at uniform.
inline Tensor cooperative_loss(const Tensor& pi) { return sum(mul(pi, pi)); }

/// Result of one mixture forward estimation.
struct StochasticDraw {
  Tensor w_eff;  // q x p effective weight, on the graph
  Tensor pi;     // dense mixture weights (before any sparsification)
  Tensor sigma;  // sampled covariance used for the Gaussian components
};

/// Algorithm-level forward estimate: Sigma from the Wishart prior, pi from
/// the Dirichlet prior, N zero-mean Gaussian component matrices, combined as
/// W_eff = mu + epsilon * sum_k pi_k S^(k). With outer_samples M > 1 the
/// stochastic part is the average of M independent inner estimates. The
/// entire computation is one differentiation graph, so gradients reach mu,
/// v_raw and alpha_raw.
inline StochasticDraw stochastic_estimate(const MixtureSpec& spec, NoiseBuffer& buf) {
  const std::size_t q = spec.rows(), p = spec.dim(), n = spec.components;
  Tensor mix_total;
  Tensor pi_out, sigma_out;
  for (std::size_t j = 0; j < spec.outer_samples; ++j) {
    const NoiseRecord& rec = buf.next();
    WishartPrior wishart{spec.wishart_scale(), spec.dof};
    Tensor sigma = sample_wishart(
        wishart, Tensor::from_data({spec.dof, p}, rec.wishart), spec.normalize_by_dof);
    if (spec.diagonal_sigma) sigma = diag_embed(diag_part(sigma));
    Tensor chol_factor = cholesky(sigma);

    DirichletPrior dirichlet{spec.dirichlet_concentration()};
    Tensor pi = sample_dirichlet(dirichlet, rec.uniforms, spec.exact_dirichlet);
    Tensor weights = spec.mode == MixtureMode::sparse ? sparsify(pi) : pi;

    Tensor mix;
    for (std::size_t k = 0; k < n; ++k) {
      Tensor component = matmul(Tensor::from_data({q, p}, rec.gaussian[k]),
                                transpose(chol_factor));
      Tensor weighted = mul(component, slice1d(weights, k, 1));
      mix = mix.defined() ? add(mix, weighted) : weighted;
    }
    mix_total = mix_total.defined() ? add(mix_total, mix) : mix;
    pi_out = pi;
    sigma_out = sigma;
  }
  if (spec.outer_samples > 1) {
    mix_total = scale(mix_total, 1.0 / static_cast<double>(spec.outer_samples));
  }
  Tensor w_eff = add(spec.mu, scale(mix_total, spec.sample_scale));
  return StochasticDraw{w_eff, pi_out, sigma_out};
}

/// Adapter forward: x W0^T + scaling * (x A_eff) B^T. Training mode samples
/// A_eff through the mixture; evaluation uses the mean directly, consuming
/// no noise, which keeps inference identical to a plain adapter.
inline Tensor adapter_forward(const Tensor& x, const LoraPair& pair, const MixtureSpec& spec,
                              NoiseBuffer& buf, bool training, StochasticDraw* draw_out = nullptr) {
  if (!x.is_matrix() || x.cols() != pair.w0.cols()) {
    throw DimensionError("adapter_forward: input " + shape_str(x.shape()) + " vs base " +
                         shape_str(pair.w0.shape()));
  }
  Tensor base = matmul(x, transpose(pair.w0));
  Tensor a_eff;
  if (training) {
    StochasticDraw draw = stochastic_estimate(spec, buf);
    a_eff = draw.w_eff;
    if (draw_out) *draw_out = draw;
  } else {
    a_eff = spec.mu;
  }
  Tensor h = matmul(x, a_eff);
  return add(base, scale(matmul(h, transpose(pair.b)), pair.scaling));
}

/// Sum of the three prior-matching KL terms for one layer: the Gaussian term
/// on the covariance actually used this step, the Wishart term on V, and the
/// Dirichlet term against the all-ones reference.
inline Tensor layer_kl(const MixtureSpec& spec, const Tensor& sigma_draw) {
  Tensor sigma = sigma_draw;
  if (spec.kl_on_expected_sigma) {
    sigma = diag_embed(scale(spec.wishart_scale(), static_cast<double>(spec.dof)));
  }
  Tensor gaussian_term = kl_gaussian_simplified(sigma);
  Tensor wishart_term = kl_wishart_simplified(spec.wishart_scale(), spec.dof);
  Tensor reference = Tensor::full({spec.components}, 1.0);
  Tensor dirichlet_term = kl_dirichlet(spec.dirichlet_concentration(), reference);
  return add(add(gaussian_term, wishart_term), dirichlet_term);
}

/// Flips trainability flags: standard trains everything, posthoc freezes the
/// mean and keeps the stochastic hyperparameters (and B) trainable, sparse
/// behaves like standard but sparsifies the mixture weights each forward.
inline void set_mode(MixtureSpec& spec, MixtureMode mode) {
  spec.mode = mode;
  const bool mu_trainable = mode != MixtureMode::posthoc;
  spec.mu.set_requires_grad(mu_trainable);
  spec.v_raw.set_requires_grad(true);
  spec.alpha_raw.set_requires_grad(true);
}

/// Trainable parameters added on top of the plain adapter: the diagonal
/// Wishart scale plus the Dirichlet concentration, p + N in total.
inline std::size_t extra_param_count(const MixtureSpec& spec) {
  return spec.v_raw.numel() + spec.alpha_raw.numel();
}

}  // namespace mclora
