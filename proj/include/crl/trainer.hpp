#pragma once

// Objective composition and optimization. An ObjectiveSpec pairs one task
// with weighted latent constraints inside one of three pipelines:
// temporal video (history-conditioned decoder plus transition-prior flow),
// static image (frozen features, content/style split, domain flow), and
// sparsity VAE (frozen features plus decoder-Jacobian penalty).

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crl/eval.hpp"
#include "crl/nets.hpp"
#include "crl/scm.hpp"
#include "crl/tensor.hpp"

namespace crl {

enum class Pipeline { kStaticImage, kTemporalVideo, kSparsityVae };

std::string pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

struct TaskSpec {
  enum class Kind {
    kReconstruction,
    kDenoising,
    kMasked,
    kNextFrame,
    kMidLatent,
    kContrastive,
    kCrossView,
    kPrototype,
    kTargetPred,
    kTransformCorrect,
    kAutoregressive
  };
  Kind kind = Kind::kReconstruction;
  double weight = 1.0;  // lambda_task
  double tau = 0.1;
  int prototype_k = 8;
  double tau_p = 0.1;
  bool sinkhorn = false;  // swapped-prediction variant
  int sinkhorn_iters = 3;
  double mask_ratio = 0.5;
  double corrupt_sigma = 0.1;
  int transform_count = 4;
  bool exclude_same_sequence = false;  // CPC negative-pool flag
};

std::string task_name(TaskSpec::Kind k);
TaskSpec::Kind task_kind_from_name(const std::string& name);

struct ConstraintSpec {
  enum class Kind {
    kNone,
    kVaeKl,
    kCapacityKl,
    kVib,
    kL1Sparsity,
    kTargetSparsity,
    kEnergy,
    kVq,
    kCondPriorStatic,
    kTemporalPrior,
    kStyleGaussian,
    kJacobianSparsity,
    kInvariance,
    kMechanismSparsity,
    kLatentRecon,
    kDeltaMatch
  };
  Kind kind = Kind::kNone;
  double beta = 1.0;   // scale inside KL-style forms
  double c_max = 10.0;
  long t_stop = 1000;
  double rho = 0.1;
  int vq_k = 16;
  double beta_commit = 0.25;
  double beta_init = 1.0;     // temporal prior L_init weight
  double gamma_future = 1.0;  // temporal prior L_future weight
  std::vector<int> subset;    // invariance set A
  bool moments_statistic = false;
  bool learned_energy = false;
};

std::string constraint_name(ConstraintSpec::Kind k);
ConstraintSpec::Kind constraint_kind_from_name(const std::string& name);

struct ObjectiveSpec {
  TaskSpec task;
  std::vector<std::pair<ConstraintSpec, double>> constraints;  // (spec, lambda)
  Pipeline pipeline = Pipeline::kStaticImage;
};

// Throws std::invalid_argument on pipeline-incompatible combinations.
void validate_objective(const ObjectiveSpec& objective);

struct OptimizerSpec {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ModelDims {
  int latent = 3;       // learned latent dimension
  int hidden = 64;
  int depth = 2;
  int feature = 16;     // frozen-extractor / frame-feature width
  int content = 3;      // static-image content split
  int style = 2;        // static-image style split
  int lag = 1;          // temporal history length
  int flow_hidden = 32;
  int proj = 8;         // contrastive projection width
};

struct DataSpec {
  enum class Kind { kStatic, kTemporal };
  Kind kind = Kind::kStatic;
  int d = 3;
  int n = 5;
  double p_edge = 0.0;
  MechanismKind mechanism = MechanismKind::kLinear;
  NoiseKind noise = NoiseKind::kGaussian;
  double noise_param = 1.0;
  int env_count = 1;
  double env_noise_lo = 1.0, env_noise_hi = 1.0;
  double env_weight_lo = 1.0, env_weight_hi = 1.0;
  int samples_per_env = 2000;
  int mixing_layers = 1;
  // temporal generation
  int episodes = 2000;
  int time_steps = 8;
  int lag = 1;
  bool instantaneous = false;
  double p_edge_delayed = 0.3;
  double p_edge_inst = 0.3;
  std::string path;  // when set, load this dataset instead of generating

  nlohmann::json to_json() const;
};

Dataset build_dataset(const DataSpec& spec, std::uint64_t seed);

struct ExperimentConfig {
  DataSpec data;
  ModelDims model;
  ObjectiveSpec objective;
  OptimizerSpec optimizer;
  long steps = 1000;
  int batch = 64;
  std::uint64_t seed = 1;
  long eval_every = 0;  // 0 = final evaluation only
  int eval_samples = 2048;
  CorrMethod eval_method = CorrMethod::kPearson;
  double ridge_alpha = 1e-3;
  std::string out_dir;      // empty = nothing persisted
  std::string resume_from;  // checkpoint to continue from
  std::uint64_t config_hash = 0;
};

struct TermValue {
  std::string name;
  double value = 0.0;     // raw term
  double weighted = 0.0;  // lambda * value, sums to the optimized total
};

struct RunRecord {
  std::vector<std::string> term_names;
  std::vector<std::vector<double>> term_trace;  // [step][term], weighted
  std::vector<double> total_trace;
  std::vector<std::pair<long, EvalReport>> eval_history;
  EvalReport final_eval;
  std::uint64_t config_hash = 0;
  std::uint64_t param_hash = 0;
  std::uint64_t seed = 0;
  std::string task_label;
  std::string constraint_label;
  std::string method;
  std::string checkpoint_path;
  std::string record_path;
};

// Raised when a loss term or gradient goes non-finite; carries the term.
struct NumericAbort : std::runtime_error {
  explicit NumericAbort(const std::string& term)
      : std::runtime_error("non-finite value in loss term '" + term + "'"), term_name(term) {}
  std::string term_name;
};

class AdamState {
 public:
  AdamState(const OptimizerSpec& spec, const ParamStore& store);
  // One update; gradients are read from `grads` via each bound leaf.
  void step(ParamStore& store, const std::vector<Tensor>& bound, const GradientMap& grads);
  long step_count() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v, long t);

 private:
  OptimizerSpec spec_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

RunRecord train_run(const ExperimentConfig& config);

// Cartesian task x constraint-preset x seed execution. Per-cell seeds are
// derived from (base seed, task index, preset index, repetition). Failed
// cells are marked and do not kill the grid.
struct GridSpec {
  std::vector<TaskSpec> tasks;
  std::vector<std::string> task_labels;
  std::vector<std::vector<std::pair<ConstraintSpec, double>>> constraint_presets;
  std::vector<std::string> constraint_labels;
  int seeds = 5;
};

struct GridOutcome {
  std::vector<ReportRow> rows;
  std::vector<RunRecord> records;  // successful cells, in row-major cell order
  int failed_cells = 0;
};

GridOutcome grid_run(const ExperimentConfig& base, const GridSpec& grid, int jobs,
                     const std::string& out_root);

nlohmann::json run_record_to_json(const RunRecord& rec);

}  // namespace crl
