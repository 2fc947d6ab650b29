#pragma once

// Latent constraints: generic (KL forms, sparsity, energy, quantization)
// and causal (conditional priors, temporal transition prior, invariance,
// mechanism sparsity, decoder-Jacobian sparsity).

#include <utility>
#include <vector>

#include "crl/nets.hpp"
#include "crl/prng.hpp"
#include "crl/tensor.hpp"

namespace crl {

// 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1), mean over the batch.
Tensor kl_standard_gaussian(const Tensor& mu, const Tensor& logvar);

// beta * |kl - C(t)| with C(t) = min(C_max, t / T_stop * C_max).
Tensor capacity_kl(const Tensor& kl_value, long step, double beta, double c_max, long t_stop);

// Mean over the batch of the entrywise L1 norm.
Tensor l1_sparsity(const Tensor& z);

// Bernoulli KL(rho || rho_hat) summed over units; rho_hat is clamped to
// [1e-6, 1 - 1e-6] before use.
Tensor bernoulli_kl(double rho, const Tensor& rho_hat);

// Fixed quadratic energy 0.5 ||z||^2, batch mean.
Tensor energy_quadratic(const Tensor& z);
// Learned PSD quadratic 0.5 ||z L||^2 with Cholesky-parameterized L.
Tensor energy_learned(const Tensor& z, const Tensor& chol);

struct VqResult {
  Tensor quantized;  // straight-through: gradient passes to the encoder
  Tensor loss;       // codebook term + beta * commitment term
  std::vector<int> indices;
};
VqResult vector_quantize(const Tensor& z_e, const Tensor& codebook, double beta_commit);

// TDRL transition prior: standard-Gaussian KL on the first `lag` states
// plus the flow-based future term (single-sample estimate).
struct TemporalPriorTerms {
  Tensor init_kl;
  Tensor future_kl;
};
TemporalPriorTerms temporal_prior_kl(const std::vector<Tensor>& mu_seq,
                                     const std::vector<Tensor>& logvar_seq,
                                     const std::vector<Tensor>& z_seq, const TemporalFlow& flow,
                                     const Bound& p, const std::vector<int>& u);

// Closed-form Gaussian-to-Gaussian KL against a per-environment diagonal
// prior given by learned mean/log-variance tables of shape [envs, dim].
Tensor cond_prior_static_kl(const Tensor& mu, const Tensor& logvar, const std::vector<int>& u,
                            const Tensor& prior_mu, const Tensor& prior_logvar);

// -log N(z; 0, I) averaged over the batch.
Tensor style_gaussian_nll(const Tensor& z_styled);

// Mean over the batch of the entrywise L1 norm of the decoder Jacobian,
// assembled in closed form layer by layer so the penalty stays
// differentiable in the decoder weights. Output dims above `cap` raise;
// the row-sampled variant is the documented fallback for wide decoders.
Tensor decoder_jacobian_l1(const Mlp& decoder, const ParamStore& store, const Bound& p,
                           const Tensor& z, int cap = 128);
Tensor decoder_jacobian_l1_sampled(const Mlp& decoder, const ParamStore& store, const Bound& p,
                                   const Tensor& z, int rows, PrngStream& stream);

// Mean squared distance between the two views on coordinates A.
Tensor invariance_penalty(const Tensor& z_v1, const Tensor& z_v2, const std::vector<int>& subset);
// Alternative statistic: per-coordinate batch mean and variance matching.
Tensor invariance_penalty_moments(const Tensor& z_v1, const Tensor& z_v2,
                                  const std::vector<int>& subset);

// Entrywise L1 of the learned edge-weight matrix.
Tensor mechanism_sparsity(const Tensor& edge_weights);

// L_latent = mean_t ||hhat_t - h_t||^2;
// L_delta  = mean_t ||(hhat_{t+1}-hhat_t) - (h_{t+1}-h_t)||^2.
std::pair<Tensor, Tensor> aux_latent_and_delta(const std::vector<Tensor>& pred_h,
                                               const std::vector<Tensor>& h);

// Column selection helper shared by the invariance penalties.
Tensor select_cols(const Tensor& x, const std::vector<int>& cols);

}  // namespace crl
