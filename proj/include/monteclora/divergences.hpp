#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "monteclora/errors.hpp"
#include "monteclora/linalg.hpp"
#include "monteclora/special.hpp"
#include "monteclora/tensor.hpp"

// Closed-form KL divergences used as reparameterization losses, plus the
// general two-distribution forms kept as cross-check oracles. All return
// scalar tensors on the differentiation graph of their first argument.

namespace mclora {

/// KL( N(mu, Sigma) || N(mu, I) ) = (tr Sigma - ln|Sigma| - p) / 2.
inline Tensor kl_gaussian_simplified(const Tensor& sigma) {
  if (!sigma.is_matrix() || sigma.rows() != sigma.cols()) {
    throw DimensionError("kl_gaussian_simplified: expected square matrix, got " +
                         shape_str(sigma.shape()));
  }
  const double p = static_cast<double>(sigma.rows());
  return scale(add_scalar(sub(trace(sigma), logdet_spd(sigma)), -p), 0.5);
}

/// Full KL( N(mu1, Sigma1) || N(mu2, Sigma2) ). The second distribution is
/// treated as the fixed reference; gradients flow to mu1 and Sigma1.
inline Tensor kl_gaussian_general(const Tensor& mu1, const Tensor& sigma1, const Tensor& mu2,
                                  const Tensor& sigma2) {
  if (mu1.shape() != mu2.shape()) {
    throw DimensionError("kl_gaussian_general: mean shapes " + shape_str(mu1.shape()) + " vs " +
                         shape_str(mu2.shape()));
  }
  if (sigma1.shape() != sigma2.shape()) {
    throw DimensionError("kl_gaussian_general: covariance shapes " + shape_str(sigma1.shape()) +
                         " vs " + shape_str(sigma2.shape()));
  }
  const std::size_t p = sigma1.rows();
  if (mu1.numel() != p) {
    throw DimensionError("kl_gaussian_general: mean length " + std::to_string(mu1.numel()) +
                         " vs dimension " + std::to_string(p));
  }
  // Reference precision matrix, constant with respect to the graph.
  std::vector<double> l2 = linalg::cholesky_lower(detail::symmetrized(sigma2), p);
  double logdet2 = 0.0;
  for (std::size_t i = 0; i < p; ++i) logdet2 += 2.0 * std::log(l2[i * p + i]);
  Tensor prec2 = Tensor::from_data({p, p}, linalg::spd_inverse_from_cholesky(l2, p));

  Tensor diff = reshape(sub(mu2, mu1), {p, 1});
  Tensor quad = trace(matmul(transpose(diff), matmul(prec2, diff)));
  Tensor tr_term = trace(matmul(prec2, sigma1));
  Tensor logdet1 = logdet_spd(sigma1);
  Tensor inner = sub(add(quad, tr_term), add_scalar(logdet1, static_cast<double>(p) - logdet2));
  return scale(inner, 0.5);
}

/// KL( W(diag(V), n) || W(I, n) ) = ( n(-ln|V|) + n tr(V) - n p ) / 2 for a
/// positive diagonal scale given as a vector.
inline Tensor kl_wishart_simplified(const Tensor& scale_diag, std::size_t n_dof) {
  if (scale_diag.shape().size() != 1) {
    throw DimensionError("kl_wishart_simplified: expected diagonal as vector, got " +
                         shape_str(scale_diag.shape()));
  }
  for (double v : scale_diag.values()) {
    if (v <= 0.0) throw DomainError("kl_wishart_simplified: non-positive scale entry");
  }
  const double n = static_cast<double>(n_dof);
  const double p = static_cast<double>(scale_diag.numel());
  Tensor logdet = sum(log_t(scale_diag));
  Tensor tr = sum(scale_diag);
  return scale(add_scalar(sub(scale(tr, n), scale(logdet, n)), -n * p), 0.5);
}

/// Full KL( W_p(diag(V1), n1) || W_p(diag(V2), n2) ).
inline Tensor kl_wishart_general(const Tensor& v1, std::size_t n1, const Tensor& v2,
                                 std::size_t n2, std::size_t p) {
  if (v1.numel() != p || v2.numel() != p) {
    throw DimensionError("kl_wishart_general: diagonal lengths " + std::to_string(v1.numel()) +
                         ", " + std::to_string(v2.numel()) + " vs dimension " + std::to_string(p));
  }
  for (double v : v1.values())
    if (v <= 0.0) throw DomainError("kl_wishart_general: non-positive entry in V1");
  for (double v : v2.values())
    if (v <= 0.0) throw DomainError("kl_wishart_general: non-positive entry in V2");
  if (n1 < p || n2 < p) {
    throw ContractError("kl_wishart_general: dof " + std::to_string(n1) + "/" +
                        std::to_string(n2) + " below dimension " + std::to_string(p));
  }
  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
  const double dp = static_cast<double>(p);

  double logdet2 = 0.0;
  for (double v : v2.values()) logdet2 += std::log(v);
  const double lg = 2.0 * (multivariate_log_gamma(p, 0.5 * dn2) -
                           multivariate_log_gamma(p, 0.5 * dn1)) +
                    (dn1 - dn2) * multivariate_digamma(p, 0.5 * dn1);

  Tensor logdet1 = sum(log_t(v1));
  Tensor tr_term = sum(div(v1, v2.detach()));  // tr(V2^{-1} V1) for diagonal scales
  Tensor inner = add_scalar(sub(scale(tr_term, dn1), scale(logdet1, dn2)),
                            dn2 * logdet2 + lg - dn1 * dp);
  return scale(inner, 0.5);
}

/// KL( Dir(alpha1) || Dir(alpha2) ); gradients flow to alpha1.
inline Tensor kl_dirichlet(const Tensor& alpha1, const Tensor& alpha2) {
  detail::check_same_shape(alpha1, alpha2, "kl_dirichlet");
  for (double a : alpha1.values())
    if (a <= 0.0) throw DomainError("kl_dirichlet: non-positive entry in alpha1");
  for (double a : alpha2.values())
    if (a <= 0.0) throw DomainError("kl_dirichlet: non-positive entry in alpha2");

  Tensor a2 = alpha2.detach();
  Tensor sum1 = sum(alpha1);
  Tensor term1 = sub(lgamma_t(sum1), lgamma_t(sum(a2)));
  Tensor term2 = sum(sub(lgamma_t(a2), lgamma_t(alpha1)));
  // (alpha1_i - alpha2_i) (psi(alpha1_i) - psi(sum alpha1))
  Tensor psi_diff = sub(digamma_t(alpha1), digamma_t(sum1));
  Tensor term3 = sum(mul(sub(alpha1, a2), psi_diff));
  return add(add(term1, term2), term3);
}

}  // namespace mclora
