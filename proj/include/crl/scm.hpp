#pragma once

// Synthetic ground truth: latent structural causal models, their temporal
// variants, the mixing map from latents to observations, interventions with
// shared exogenous noise, and dataset persistence.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crl/prng.hpp"
#include "crl/tensor.hpp"

namespace crl {

struct DagSpec {
  int d = 0;
  std::vector<std::vector<bool>> edges;  // edges[parent][child]
  std::vector<int> order;                // topological permutation

  std::vector<int> parents_of(int j) const;
  bool is_acyclic() const;
  nlohmann::json to_json() const;
};

DagSpec sample_dag(int d, double p_edge, PrngStream& stream);

// De_G(I) = I plus everything reachable from I; A = [D] \ De_G(I).
std::vector<int> descendants(const DagSpec& dag, const std::vector<int>& targets);
std::vector<int> invariant_set(const DagSpec& dag, const std::vector<int>& targets);

enum class NoiseKind { kGaussian, kLaplace };
enum class MechanismKind { kLinear, kMlp };

struct NodeMechanism {
  MechanismKind kind = MechanismKind::kLinear;
  // Linear: one weight per parent, in parent order.
  std::vector<double> linear_w;
  // MLP: one hidden layer, tanh. w1 is [P x hidden], w2 is [hidden].
  std::vector<double> mlp_w1, mlp_b1, mlp_w2;
  int mlp_hidden = 0;
  NoiseKind noise = NoiseKind::kGaussian;
  double noise_param = 1.0;  // sigma for gaussian, b for laplace
};

struct MechanismSpec {
  std::vector<NodeMechanism> nodes;
  nlohmann::json to_json() const;
};

MechanismSpec sample_mechanisms(const DagSpec& dag, MechanismKind kind, NoiseKind noise,
                                double noise_param, PrngStream& stream);

struct MixingSpec {
  int d_in = 0;
  int n_out = 0;
  // Row-major [rows x cols] weight matrices applied as x -> x * W with
  // leaky_relu between layers and none after the last.
  std::vector<std::vector<double>> layers;
  std::vector<Shape> layer_shapes;
  double leaky_alpha = 0.2;

  std::vector<double> apply(const std::vector<double>& z) const;
  nlohmann::json to_json() const;
};

// Square layers use orthonormal weights; the final lift has orthonormal
// rows. Condition numbers are verified <= 1e3 and layers are regenerated
// otherwise.
MixingSpec sample_mixing(int d, int n, int square_layers, PrngStream& stream);
MixingSpec identity_mixing(int d);

struct EnvironmentSpec {
  int env_count = 1;
  std::vector<std::vector<double>> noise_scale;   // [env][node], > 0
  std::vector<std::vector<double>> weight_scale;  // [env][node], > 0
  nlohmann::json to_json() const;
};

EnvironmentSpec single_environment(int d);
// Per-env scales drawn log-uniformly from the given ranges.
EnvironmentSpec sample_environments(int d, int env_count, double noise_lo, double noise_hi,
                                    double weight_lo, double weight_hi, PrngStream& stream);

struct StaticScm {
  DagSpec dag;
  MechanismSpec mechanisms;
  nlohmann::json to_json() const;
};

struct TemporalScmSpec {
  DagSpec base;  // instantaneous edges pa^e
  // delayed[l][parent][child] is the lag-(l+1) adjacency.
  std::vector<std::vector<std::vector<bool>>> delayed;
  // Mechanism inputs per node: delayed parents lag by lag (ascending node
  // index within a lag), then instantaneous parents ascending.
  std::vector<NodeMechanism> nodes;
  bool instantaneous_enabled = false;
  int lag() const { return static_cast<int>(delayed.size()); }
  nlohmann::json to_json() const;
};

TemporalScmSpec sample_temporal_scm(int d, int lag, double p_edge_delayed,
                                    double p_edge_instantaneous, bool instantaneous_enabled,
                                    MechanismKind kind, NoiseKind noise, double noise_param,
                                    PrngStream& stream);

struct InterventionSpec {
  std::vector<int> targets;  // empty means the null intervention
  enum class Kind { kDoValue, kNoiseShift } kind = Kind::kDoValue;
  double value = 0.0;  // do value or noise shift delta
  nlohmann::json to_json() const;
};

struct Dataset {
  int episodes = 0;
  int time_steps = 1;
  int d = 0;  // latent dimension
  int n = 0;  // observed dimension
  std::vector<double> z_true;  // [episodes][time][d]
  std::vector<double> x_obs;   // [episodes][time][n]
  std::vector<int> u;          // per-episode environment index
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;

  double z(int e, int t, int j) const {
    return z_true[(static_cast<std::size_t>(e) * time_steps + t) * d + j];
  }
  double x(int e, int t, int i) const {
    return x_obs[(static_cast<std::size_t>(e) * time_steps + t) * n + i];
  }
  // Rows [episodes*time, dim] as tensors.
  Tensor z_matrix() const;
  Tensor x_matrix() const;
};

Dataset generate_static(const StaticScm& scm, const MixingSpec& mixing,
                        const EnvironmentSpec& envs, int n_per_env, PrngStream& stream);

// Base form observes the latents directly (x == z); the overload pushes
// every frame through the mixing map.
Dataset generate_temporal(const TemporalScmSpec& tscm, int episodes, int time_steps,
                          PrngStream& stream);
Dataset generate_temporal(const TemporalScmSpec& tscm, const MixingSpec& mixing, int episodes,
                          int time_steps, PrngStream& stream);

struct PairedViews {
  Dataset v1;          // observational
  Dataset v2;          // interventional, shared noise outside the targets
  std::vector<int> invariant;  // A = [D] \ De_G(I)
};

PairedViews generate_paired(const StaticScm& scm, const MixingSpec& mixing,
                            const InterventionSpec& intervention, int samples,
                            PrngStream& stream);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

std::uint64_t spec_hash_of(const nlohmann::json& spec_json, std::uint64_t seed);

}  // namespace crl
