#pragma once

// Parametric model components. Parameters live in a ParamStore and are
// bound to a tape once per training step; components hold parameter ids
// plus whatever structure they need to run forward.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "crl/container.hpp"
#include "crl/prng.hpp"
#include "crl/tensor.hpp"

namespace crl {

// ---- small tensor conveniences built from primitives ----

Tensor ones_const(const Shape& shape);
Tensor row_sum(const Tensor& x);       // [B,n] -> [B,1]
Tensor sq_norm_rows(const Tensor& x);  // [B,n] -> [B,1]
Tensor sqrt_op(const Tensor& x);       // strictly positive input
Tensor sigmoid(const Tensor& x);
// Unit-normalizes rows; throws std::domain_error on a zero-norm row.
Tensor normalize_rows(const Tensor& x);
Tensor one_hot(const std::vector<int>& idx, int count);
Tensor tile_cols(const Tensor& column, int n);  // [B,1] -> [B,n]

// ---- parameters ----

class ParamStore {
 public:
  int add(const std::string& name, const Shape& shape, std::vector<double> init);
  int count() const { return static_cast<int>(entries_.size()); }
  const std::string& name(int id) const { return entries_.at(static_cast<std::size_t>(id)).name; }
  const Shape& shape(int id) const { return entries_.at(static_cast<std::size_t>(id)).shape; }
  std::vector<double>& values(int id) { return entries_.at(static_cast<std::size_t>(id)).value; }
  const std::vector<double>& values(int id) const {
    return entries_.at(static_cast<std::size_t>(id)).value;
  }

  // Leaf tensors (id-indexed) for one training step, or constants for eval.
  std::vector<Tensor> bind(Tape& tape) const;
  std::vector<Tensor> bind_const() const;

  std::uint64_t values_hash() const;
  Container to_container() const;
  void load(const Container& c);

 private:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> value;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

using Bound = std::vector<Tensor>;

enum class Act { kIdentity, kRelu, kLeakyRelu, kTanh };

Tensor apply_act(const Tensor& x, Act act);

struct MlpSpec {
  std::vector<int> widths;  // in, hidden..., out
  Act hidden_act = Act::kLeakyRelu;
  bool zero_init_last = false;
};

struct Mlp {
  std::vector<int> w_ids, b_ids;
  Act hidden_act = Act::kLeakyRelu;

  static Mlp create(ParamStore& store, const std::string& prefix, const MlpSpec& spec,
                    PrngStream& init);
  Tensor forward(const Bound& p, const Tensor& x) const;
  int in_dim(const ParamStore& store) const;
  int out_dim(const ParamStore& store) const;
};

// ---- encoder ----

struct GaussianEncoder {
  Mlp trunk;
  int mu_w = -1, mu_b = -1, lv_w = -1, lv_b = -1;
  int latent_dim = 0;

  static GaussianEncoder create(ParamStore& store, const std::string& prefix, int in_dim,
                                int hidden, int depth, int latent_dim, PrngStream& init);
  // Returns (mu, log-variance); log-variance is clamped to [-10, 10].
  std::pair<Tensor, Tensor> forward(const Bound& p, const Tensor& x) const;
};

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise);

// Zero-padded history windows: s_t = concat(z_{t-L}, ..., z_t).
std::vector<Tensor> history_window(const std::vector<Tensor>& z_seq, int lag);

// ---- flows ----

// Per-dimension conditional affine transform over a latent sequence:
//   r_{t,i} = (z_{t,i} - m_i(context)) * exp(-a_i(context)),
// context = [z_{t-L..t-1}, embed(u)]. The log-determinant is exactly
// -sum a_i, accumulated over steps t > lag.
struct TemporalFlow {
  int dim = 0;
  int lag = 1;
  int env_count = 0;  // 0 disables conditioning on u
  int u_dim = 0;
  std::vector<Mlp> nets;  // one per latent dimension, output (m_i, a_i)
  int u_embed = -1;
  int gates = -1;  // optional [lag*dim, dim] edge weights over z-history inputs

  static TemporalFlow create(ParamStore& store, const std::string& prefix, int dim, int lag,
                             int hidden, int env_count, bool with_gates, PrngStream& init);

  struct Result {
    std::vector<Tensor> residuals;  // t = lag .. T-1, each [B, dim]
    Tensor logdet;                  // [B, 1], total over steps
  };
  Result forward(const Bound& p, const std::vector<Tensor>& z_seq,
                 const std::vector<int>& u) const;

  // Reconstructs z_{lag..T-1} from residuals and the first `lag` states.
  std::vector<Tensor> inverse(const Bound& p, const std::vector<Tensor>& residuals,
                              const std::vector<Tensor>& z_init, const std::vector<int>& u) const;
};

// Per-style-dimension affine whose scale/shift come from an embedding of
// the view index u; scales stay positive through exp.
struct DomainFlow {
  int style_dim = 0;
  int env_count = 0;
  int u_dim = 0;
  int u_embed = -1;
  Mlp head;  // u_dim -> 2*style_dim, identity-initialized

  static DomainFlow create(ParamStore& store, const std::string& prefix, int style_dim,
                           int env_count, int u_dim, int hidden, PrngStream& init);

  struct Result {
    Tensor z_styled;  // [B, style_dim]
    Tensor logdet;    // [B, 1]
  };
  Result forward(const Bound& p, const Tensor& z_style, const std::vector<int>& u) const;
  Tensor inverse(const Bound& p, const Tensor& z_styled, const std::vector<int>& u) const;
};

// ---- decoders ----

// g(z) = sum_k alpha_k(z) g_k(z_{B_k}); the gate sees stop-gradient(z), so
// branch Jacobians stay local to their blocks.
struct AdditiveDecoder {
  std::vector<std::vector<int>> blocks;
  std::vector<Mlp> branches;
  Mlp gate;
  int dim = 0;
  int out = 0;

  static AdditiveDecoder create(ParamStore& store, const std::string& prefix,
                                const std::vector<std::vector<int>>& blocks, int dim, int out,
                                int hidden, PrngStream& init);
  Tensor forward(const Bound& p, const Tensor& z) const;
  Tensor gate_weights(const Bound& p, const Tensor& z) const;  // [B, K]
  Tensor branch_output(const Bound& p, int k, const Tensor& z) const;
};

// ---- frozen feature extractor ----

// Seed-pinned random MLP standing in for a pretrained backbone. Weights are
// plain constants, never registered with any ParamStore.
struct FrozenExtractor {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Act act = Act::kLeakyRelu;

  static FrozenExtractor create(int in_dim, int out_dim, int hidden, int depth,
                                std::uint64_t seed);
  Tensor forward(const Tensor& x) const;
  std::uint64_t output_hash(const Tensor& x) const;
};

// ---- prototypes ----

struct Prototypes {
  int table = -1;
  int k = 0;
  int dim = 0;
  double tau_p = 0.1;

  static Prototypes create(ParamStore& store, const std::string& prefix, int k, int dim,
                           double tau_p, PrngStream& init);
};

// Cosine-similarity logits (z_bar . c_bar_k) / tau_p.
Tensor prototype_logits(const Tensor& prototype_rows, const Tensor& z, double tau_p);

// Rows are renormalized to unit norm after each optimizer update.
void renormalize_prototype_rows(ParamStore& store, int table_id);

}  // namespace crl
