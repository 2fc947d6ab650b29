#pragma once

// View generation and task losses. Every loss returns a scalar tensor on
// whatever tape the inputs live on; view generation is a pure function of
// its stream.

#include <utility>
#include <vector>

#include "crl/nets.hpp"
#include "crl/prng.hpp"
#include "crl/tensor.hpp"

namespace crl {

struct ViewSpec {
  enum class Kind { kIdentity, kCorrupt, kMask, kTwoViews, kTransform, kPrefix };
  Kind kind = Kind::kIdentity;
  double sigma = 0.1;        // corruption / jitter scale
  double mask_ratio = 0.5;   // fraction of coordinates hidden
  double dropout = 0.1;      // two-view coordinate dropout rate
  int transform_count = 4;
  int prefix_t = 1;
};

struct ViewBatch {
  Tensor view;
  Tensor view2;                    // second view for two_views
  Tensor visible;                  // binary mask, 1 = visible (mask kind)
  std::vector<int> transform_ids;  // transform kind
};

ViewBatch view_generate(const ViewSpec& spec, const Tensor& batch, PrngStream& stream);

// Fixed family of sign-permutation transforms, pinned by (n, count) and
// independent of any run seed.
std::vector<Tensor> transform_family(int n, int count);

// ---- squared-error family ----

// mean_t mean_b ||pred_t - target_t||^2
Tensor loss_reconstruction(const std::vector<Tensor>& pred, const std::vector<Tensor>& target);
// Per sample: sum_t ||(1-m_t) (hat x_t - x_t)||^2 / (sum_t ||1-m_t||_1 + eps).
Tensor loss_masked(const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                   const std::vector<Tensor>& visible);
// Reconstruction against stop-gradient targets.
Tensor loss_mid_latent(const std::vector<Tensor>& pred_h, const std::vector<Tensor>& h);
// 1/(T-1) sum_t ||pred_t - target_{t+1}||^2
Tensor loss_next_frame(const std::vector<Tensor>& pred, const std::vector<Tensor>& target);
// Symmetric two-term feature prediction.
Tensor loss_cross_view(const Tensor& pred_i, const Tensor& target_j, const Tensor& pred_j,
                       const Tensor& target_i);
// Unit-variance Gaussian NLL without the constant, i.e. 0.5 * squared error.
Tensor loss_autoregressive(const std::vector<Tensor>& pred, const std::vector<Tensor>& target);

// ---- contrastive / clustering / classification ----

// Mean over i of -log softmax(q_i . k_j / tau); the diagonal is the
// positive pair. Queries and keys are unit-normalized internally and keys
// receive stop-gradient.
Tensor loss_infonce(const Tensor& queries, const Tensor& keys, double tau);

// Balanced soft assignments over exp(logits); rows sum to 1 and column
// sums approach N/K. Callers apply any entropy scaling to the logits
// (the swapped-prediction loss divides cosine scores by eps = 0.05).
Tensor sinkhorn_assign(const Tensor& logits, int iters);

// Hard nearest-prototype assignment on stop-gradient representations, then
// cross-entropy on cosine logits.
Tensor loss_prototype_video(const Tensor& reps, const Tensor& prototype_rows, double tau_p);

// Swapped prediction with Sinkhorn targets from the other view.
Tensor loss_prototype_swapped(const Tensor& z_a, const Tensor& z_b, const Tensor& prototype_rows,
                              double tau_p, int sinkhorn_iters);

Tensor loss_classification(const Tensor& logits, const std::vector<int>& labels);

}  // namespace crl
