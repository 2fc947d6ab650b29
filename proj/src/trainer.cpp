#include "crl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <thread>

#include "crl/constraints.hpp"
#include "crl/container.hpp"
#include "crl/tasks.hpp"

namespace crl {

std::string pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::kStaticImage: return "static_image";
    case Pipeline::kTemporalVideo: return "temporal_video";
    case Pipeline::kSparsityVae: return "sparsity_vae";
  }
  return "?";
}

Pipeline pipeline_from_name(const std::string& name) {
  if (name == "static_image") return Pipeline::kStaticImage;
  if (name == "temporal_video") return Pipeline::kTemporalVideo;
  if (name == "sparsity_vae") return Pipeline::kSparsityVae;
  throw std::invalid_argument("unknown pipeline: " + name);
}

std::string task_name(TaskSpec::Kind k) {
  switch (k) {
    case TaskSpec::Kind::kReconstruction: return "reconstruction";
    case TaskSpec::Kind::kDenoising: return "denoising";
    case TaskSpec::Kind::kMasked: return "masked";
    case TaskSpec::Kind::kNextFrame: return "next_frame";
    case TaskSpec::Kind::kMidLatent: return "mid_latent";
    case TaskSpec::Kind::kContrastive: return "contrastive";
    case TaskSpec::Kind::kCrossView: return "cross_view";
    case TaskSpec::Kind::kPrototype: return "prototype";
    case TaskSpec::Kind::kTargetPred: return "target_pred";
    case TaskSpec::Kind::kTransformCorrect: return "transform_correct";
    case TaskSpec::Kind::kAutoregressive: return "autoregressive";
  }
  return "?";
}

TaskSpec::Kind task_kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(TaskSpec::Kind::kAutoregressive); ++k)
    if (task_name(static_cast<TaskSpec::Kind>(k)) == name)
      return static_cast<TaskSpec::Kind>(k);
  throw std::invalid_argument("unknown task kind: " + name);
}

std::string constraint_name(ConstraintSpec::Kind k) {
  switch (k) {
    case ConstraintSpec::Kind::kNone: return "none";
    case ConstraintSpec::Kind::kVaeKl: return "vae_kl";
    case ConstraintSpec::Kind::kCapacityKl: return "capacity_kl";
    case ConstraintSpec::Kind::kVib: return "vib";
    case ConstraintSpec::Kind::kL1Sparsity: return "l1_sparsity";
    case ConstraintSpec::Kind::kTargetSparsity: return "target_sparsity";
    case ConstraintSpec::Kind::kEnergy: return "energy";
    case ConstraintSpec::Kind::kVq: return "vq";
    case ConstraintSpec::Kind::kCondPriorStatic: return "cond_prior_static";
    case ConstraintSpec::Kind::kTemporalPrior: return "temporal_prior";
    case ConstraintSpec::Kind::kStyleGaussian: return "style_gaussian";
    case ConstraintSpec::Kind::kJacobianSparsity: return "jacobian_sparsity";
    case ConstraintSpec::Kind::kInvariance: return "invariance";
    case ConstraintSpec::Kind::kMechanismSparsity: return "mechanism_sparsity";
    case ConstraintSpec::Kind::kLatentRecon: return "latent_recon";
    case ConstraintSpec::Kind::kDeltaMatch: return "delta_match";
  }
  return "?";
}

ConstraintSpec::Kind constraint_kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(ConstraintSpec::Kind::kDeltaMatch); ++k)
    if (constraint_name(static_cast<ConstraintSpec::Kind>(k)) == name)
      return static_cast<ConstraintSpec::Kind>(k);
  throw std::invalid_argument("unknown constraint kind: " + name);
}

namespace {

bool task_allowed(Pipeline p, TaskSpec::Kind k) {
  using K = TaskSpec::Kind;
  switch (p) {
    case Pipeline::kStaticImage:
      return k == K::kReconstruction || k == K::kDenoising || k == K::kMasked ||
             k == K::kCrossView || k == K::kContrastive || k == K::kPrototype ||
             k == K::kTargetPred || k == K::kTransformCorrect;
    case Pipeline::kTemporalVideo:
      return k == K::kReconstruction || k == K::kContrastive || k == K::kNextFrame ||
             k == K::kMidLatent || k == K::kPrototype || k == K::kMasked ||
             k == K::kAutoregressive;
    case Pipeline::kSparsityVae:
      return k == K::kReconstruction || k == K::kDenoising || k == K::kMasked ||
             k == K::kCrossView;
  }
  return false;
}

bool constraint_allowed(Pipeline p, ConstraintSpec::Kind k) {
  using K = ConstraintSpec::Kind;
  switch (k) {
    case K::kNone:
    case K::kL1Sparsity:
    case K::kTargetSparsity:
    case K::kEnergy:
    case K::kVq:
      return true;
    case K::kVaeKl:
    case K::kVib:
      return p != Pipeline::kTemporalVideo;
    case K::kCapacityKl:
    case K::kStyleGaussian:
    case K::kInvariance:
      return p == Pipeline::kStaticImage;
    case K::kCondPriorStatic:
      return p != Pipeline::kTemporalVideo;
    case K::kJacobianSparsity:
      return p != Pipeline::kTemporalVideo;
    case K::kTemporalPrior:
    case K::kMechanismSparsity:
    case K::kLatentRecon:
    case K::kDeltaMatch:
      return p == Pipeline::kTemporalVideo;
  }
  return false;
}

}  // namespace

void validate_objective(const ObjectiveSpec& objective) {
  if (!task_allowed(objective.pipeline, objective.task.kind))
    throw std::invalid_argument("task '" + task_name(objective.task.kind) +
                                "' is not available in pipeline '" +
                                pipeline_name(objective.pipeline) + "'");
  bool has_temporal_prior = false;
  for (const auto& [c, lambda] : objective.constraints) {
    if (lambda < 0) throw std::invalid_argument("constraint weights must be >= 0");
    if (!constraint_allowed(objective.pipeline, c.kind))
      throw std::invalid_argument("constraint '" + constraint_name(c.kind) +
                                  "' is not available in pipeline '" +
                                  pipeline_name(objective.pipeline) + "'");
    if (c.kind == ConstraintSpec::Kind::kTemporalPrior) has_temporal_prior = true;
  }
  for (const auto& [c, lambda] : objective.constraints)
    if (c.kind == ConstraintSpec::Kind::kMechanismSparsity && !has_temporal_prior)
      throw std::invalid_argument(
          "mechanism_sparsity gates the transition prior; add temporal_prior as well");
}

nlohmann::json DataSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind == Kind::kStatic ? "static" : "temporal";
  j["d"] = d;
  j["n"] = n;
  j["p_edge"] = p_edge;
  j["mechanism"] = mechanism == MechanismKind::kLinear ? "linear" : "mlp";
  j["noise"] = noise == NoiseKind::kGaussian ? "gaussian" : "laplace";
  j["noise_param"] = noise_param;
  j["env_count"] = env_count;
  j["env_noise"] = {env_noise_lo, env_noise_hi};
  j["env_weight"] = {env_weight_lo, env_weight_hi};
  j["samples_per_env"] = samples_per_env;
  j["mixing_layers"] = mixing_layers;
  j["episodes"] = episodes;
  j["time_steps"] = time_steps;
  j["lag"] = lag;
  j["instantaneous"] = instantaneous;
  j["p_edge_delayed"] = p_edge_delayed;
  j["p_edge_inst"] = p_edge_inst;
  j["path"] = path;
  return j;
}

Dataset build_dataset(const DataSpec& spec, std::uint64_t seed) {
  PrngStream root{seed, 0};
  PrngStream scm_stream = root.substream(0x5C31);
  if (spec.kind == DataSpec::Kind::kStatic) {
    StaticScm scm;
    scm.dag = sample_dag(spec.d, spec.p_edge, scm_stream);
    scm.mechanisms =
        sample_mechanisms(scm.dag, spec.mechanism, spec.noise, spec.noise_param, scm_stream);
    MixingSpec mixing = spec.n == spec.d && spec.mixing_layers == 0
                            ? identity_mixing(spec.d)
                            : sample_mixing(spec.d, spec.n, spec.mixing_layers, scm_stream);
    EnvironmentSpec envs =
        spec.env_count == 1
            ? single_environment(spec.d)
            : sample_environments(spec.d, spec.env_count, spec.env_noise_lo, spec.env_noise_hi,
                                  spec.env_weight_lo, spec.env_weight_hi, scm_stream);
    PrngStream data_stream = root.substream(0xDA7A);
    return generate_static(scm, mixing, envs, spec.samples_per_env, data_stream);
  }
  TemporalScmSpec tscm = sample_temporal_scm(
      spec.d, spec.lag, spec.p_edge_delayed, spec.p_edge_inst, spec.instantaneous,
      spec.mechanism, spec.noise, spec.noise_param, scm_stream);
  PrngStream data_stream = root.substream(0xDA7A);
  if (spec.n == spec.d && spec.mixing_layers == 0)
    return generate_temporal(tscm, spec.episodes, spec.time_steps, data_stream);
  MixingSpec mixing = sample_mixing(spec.d, spec.n, spec.mixing_layers, scm_stream);
  return generate_temporal(tscm, mixing, spec.episodes, spec.time_steps, data_stream);
}

AdamState::AdamState(const OptimizerSpec& spec, const ParamStore& store) : spec_(spec) {
  for (int i = 0; i < store.count(); ++i) {
    m_.emplace_back(store.values(i).size(), 0.0);
    v_.emplace_back(store.values(i).size(), 0.0);
  }
}

void AdamState::restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
                        long t) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("AdamState::restore: moment count mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

void AdamState::step(ParamStore& store, const std::vector<Tensor>& bound,
                     const GradientMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
  for (int i = 0; i < store.count(); ++i) {
    if (!grads.contains(bound[static_cast<std::size_t>(i)].node_id())) continue;
    const auto& g = grads.at(bound[static_cast<std::size_t>(i)]).data();
    auto& value = store.values(i);
    auto& m = m_[static_cast<std::size_t>(i)];
    auto& v = v_[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) throw NumericAbort("gradient of " + store.name(i));
      m[j] = spec_.beta1 * m[j] + (1.0 - spec_.beta1) * g[j];
      v[j] = spec_.beta2 * v[j] + (1.0 - spec_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= spec_.lr * mhat / std::sqrt(vhat + spec_.eps);
    }
  }
}

namespace {

constexpr std::uint64_t kStreamBatch = 0xBA7C;
constexpr std::uint64_t kStreamNoise = 0x4035;
constexpr std::uint64_t kStreamView = 0x71E3;
constexpr std::uint64_t kStreamInit = 0x1417;

struct CompiledModel {
  ParamStore store;
  Pipeline pipeline = Pipeline::kStaticImage;
  ModelDims dims;
  int env_count = 1;
  int obs_dim = 0;
  int true_dim = 0;

  FrozenExtractor phi;   // static + sparsity pipelines
  GaussianEncoder enc;
  Mlp dec;               // feature decoder (static) / frame decoder G (temporal)
  Mlp dec_head;          // temporal D: history window -> feature
  Mlp frame_enc;         // temporal E: observation -> feature
  TemporalFlow tflow;
  DomainFlow dflow;
  bool has_tflow = false, has_dflow = false;
  Prototypes protos;
  bool has_protos = false;
  Mlp proj;
  bool has_proj = false;
  Mlp cls;
  bool has_cls = false;
  int vq_codebook = -1;
  int prior_mu = -1, prior_lv = -1;
  int energy_chol = -1;
};

const ConstraintSpec* find_constraint(const ObjectiveSpec& objective,
                                      ConstraintSpec::Kind kind) {
  for (const auto& [c, lambda] : objective.constraints)
    if (c.kind == kind) return &c;
  return nullptr;
}

CompiledModel build_model(const ExperimentConfig& config, const Dataset& ds, int env_count) {
  CompiledModel m;
  m.pipeline = config.objective.pipeline;
  m.dims = config.model;
  m.env_count = env_count;
  m.obs_dim = ds.n;
  m.true_dim = ds.d;
  PrngStream init = PrngStream{config.seed, 0}.substream(kStreamInit);
  const int latent = m.dims.latent;
  const ModelDims& dims = m.dims;
  const TaskSpec& task = config.objective.task;

  if (m.pipeline == Pipeline::kTemporalVideo) {
    MlpSpec fe;
    fe.widths = {ds.n, dims.hidden, dims.feature};
    m.frame_enc = Mlp::create(m.store, "frame_enc", fe, init);
    m.enc = GaussianEncoder::create(m.store, "encoder", dims.feature, dims.hidden, dims.depth,
                                    latent, init);
    MlpSpec dh;
    dh.widths = {(dims.lag + 1) * latent, dims.hidden, dims.feature};
    m.dec_head = Mlp::create(m.store, "dec_head", dh, init);
    MlpSpec fd;
    fd.widths = {dims.feature, dims.hidden, ds.n};
    m.dec = Mlp::create(m.store, "frame_dec", fd, init);
    if (find_constraint(config.objective, ConstraintSpec::Kind::kTemporalPrior)) {
      const bool gated =
          find_constraint(config.objective, ConstraintSpec::Kind::kMechanismSparsity) != nullptr;
      m.tflow = TemporalFlow::create(m.store, "flow", latent, dims.lag, dims.flow_hidden,
                                     env_count > 1 ? env_count : 0, gated, init);
      m.has_tflow = true;
    }
    if (task.kind == TaskSpec::Kind::kPrototype) {
      m.protos = Prototypes::create(m.store, "protos", task.prototype_k, latent, task.tau_p, init);
      m.has_protos = true;
    }
  } else {
    m.phi = FrozenExtractor::create(ds.n, dims.feature, dims.hidden, 1, 0xFEEDu);
    m.enc = GaussianEncoder::create(m.store, "encoder", dims.feature, dims.hidden, dims.depth,
                                    latent, init);
    MlpSpec fd;
    fd.widths = {latent, dims.hidden, dims.feature};
    m.dec = Mlp::create(m.store, "decoder", fd, init);
    if (m.pipeline == Pipeline::kStaticImage) {
      if (dims.content + dims.style != latent)
        throw std::invalid_argument("static_image pipeline needs content + style == latent");
      m.dflow = DomainFlow::create(m.store, "domain_flow", dims.style, env_count, 8,
                                   dims.flow_hidden, init);
      m.has_dflow = true;
    }
    if (task.kind == TaskSpec::Kind::kContrastive) {
      MlpSpec pj;
      pj.widths = {m.pipeline == Pipeline::kStaticImage ? dims.content : latent, dims.hidden,
                   dims.proj};
      m.proj = Mlp::create(m.store, "proj", pj, init);
      m.has_proj = true;
    }
    if (task.kind == TaskSpec::Kind::kPrototype) {
      const int proto_dim = m.pipeline == Pipeline::kStaticImage ? dims.content : latent;
      m.protos =
          Prototypes::create(m.store, "protos", task.prototype_k, proto_dim, task.tau_p, init);
      m.has_protos = true;
    }
    if (task.kind == TaskSpec::Kind::kTargetPred ||
        task.kind == TaskSpec::Kind::kTransformCorrect) {
      const int classes =
          task.kind == TaskSpec::Kind::kTargetPred ? env_count : task.transform_count;
      MlpSpec cs;
      cs.widths = {latent, dims.hidden, classes};
      m.cls = Mlp::create(m.store, "cls", cs, init);
      m.has_cls = true;
    }
  }

  if (const auto* vq = find_constraint(config.objective, ConstraintSpec::Kind::kVq)) {
    PrngStream cb = init.substream(0x0c0de);
    std::vector<double> book(static_cast<std::size_t>(vq->vq_k) * latent);
    for (auto& v : book) v = draw_standard_normal(cb);
    m.vq_codebook = m.store.add("vq.codebook", {vq->vq_k, latent}, std::move(book));
  }
  if (find_constraint(config.objective, ConstraintSpec::Kind::kCondPriorStatic)) {
    m.prior_mu = m.store.add("cond_prior.mu", {env_count, latent},
                             std::vector<double>(static_cast<std::size_t>(env_count) * latent, 0.0));
    // Slightly asymmetric starting variances; identical rows specialize slowly.
    PrngStream pr = init.substream(0x9107);
    std::vector<double> lv(static_cast<std::size_t>(env_count) * latent);
    for (auto& v : lv) v = 0.2 * draw_standard_normal(pr);
    m.prior_lv = m.store.add("cond_prior.lv", {env_count, latent}, std::move(lv));
  }
  if (const auto* en = find_constraint(config.objective, ConstraintSpec::Kind::kEnergy)) {
    if (en->learned_energy) {
      std::vector<double> chol(static_cast<std::size_t>(latent) * latent, 0.0);
      for (int i = 0; i < latent; ++i) chol[static_cast<std::size_t>(i) * latent + i] = 1.0;
      m.energy_chol = m.store.add("energy.chol", {latent, latent}, std::move(chol));
    }
  }
  return m;
}

struct ComposeResult {
  Tensor total;
  std::vector<TermValue> terms;
};

void push_term(ComposeResult& res, const std::string& name, const Tensor& value, double lambda) {
  Tensor weighted = scale(value, lambda);
  res.terms.push_back(TermValue{name, value.value(), weighted.value()});
  res.total = res.total.size() == 0 ? weighted : add(res.total, weighted);
}

// Mean over a sequence of [B,dim] tensors.
Tensor sequence_mean(const std::vector<Tensor>& seq) {
  Tensor acc = seq[0];
  for (std::size_t t = 1; t < seq.size(); ++t) acc = add(acc, seq[t]);
  return scale(acc, 1.0 / static_cast<double>(seq.size()));
}

// ---- static-image and sparsity-vae pipelines ----

struct StaticEncoded {
  Tensor feat_in;  // encoder input features
  Tensor mu, logvar, z;
};

struct StaticForward {
  StaticEncoded primary;
  bool has_second = false;
  StaticEncoded second;
  Tensor feat_clean;   // target features of the raw observation
  Tensor feat_view2;   // clean-feature target of the second view
  std::vector<int> labels;
};

ComposeResult compose_static(const CompiledModel& model, const ObjectiveSpec& objective,
                             const Bound& p, const Tensor& x_raw, const std::vector<int>& u,
                             long step, PrngStream& view_stream, PrngStream& noise_stream) {
  const TaskSpec& task = objective.task;
  const bool image = model.pipeline == Pipeline::kStaticImage;

  auto encode = [&](const Tensor& raw) {
    StaticEncoded e;
    e.feat_in = model.phi.forward(raw);
    auto [mu, lv] = model.enc.forward(p, e.feat_in);
    e.mu = mu;
    e.logvar = lv;
    Tensor noise = prng_draw(noise_stream, DrawKind::kStandardNormal, mu.shape());
    e.z = reparameterize(mu, lv, noise);
    return e;
  };

  StaticForward fwd;
  fwd.feat_clean = model.phi.forward(x_raw);

  ViewSpec vs;
  switch (task.kind) {
    case TaskSpec::Kind::kReconstruction:
    case TaskSpec::Kind::kTargetPred: {
      fwd.primary = encode(x_raw);
      break;
    }
    case TaskSpec::Kind::kDenoising: {
      vs.kind = ViewSpec::Kind::kCorrupt;
      vs.sigma = task.corrupt_sigma;
      fwd.primary = encode(view_generate(vs, x_raw, view_stream).view);
      break;
    }
    case TaskSpec::Kind::kMasked: {
      vs.kind = ViewSpec::Kind::kMask;
      vs.mask_ratio = task.mask_ratio;
      fwd.primary = encode(view_generate(vs, x_raw, view_stream).view);
      break;
    }
    case TaskSpec::Kind::kTransformCorrect: {
      vs.kind = ViewSpec::Kind::kTransform;
      vs.transform_count = task.transform_count;
      ViewBatch vb = view_generate(vs, x_raw, view_stream);
      fwd.primary = encode(vb.view);
      fwd.labels = vb.transform_ids;
      break;
    }
    case TaskSpec::Kind::kCrossView:
    case TaskSpec::Kind::kContrastive:
    case TaskSpec::Kind::kPrototype: {
      vs.kind = ViewSpec::Kind::kTwoViews;
      vs.sigma = task.corrupt_sigma;
      ViewBatch vb = view_generate(vs, x_raw, view_stream);
      fwd.primary = encode(vb.view);
      fwd.second = encode(vb.view2);
      fwd.has_second = true;
      fwd.feat_view2 = model.phi.forward(vb.view2);
      break;
    }
    default:
      throw std::invalid_argument("task not available in a static pipeline");
  }

  // Optional quantization rewires the decoding path via straight-through.
  ComposeResult res;
  const ConstraintSpec* vq_spec = find_constraint(objective, ConstraintSpec::Kind::kVq);
  Tensor z_dec = fwd.primary.z;
  Tensor vq_loss;
  if (vq_spec) {
    VqResult vq = vector_quantize(fwd.primary.z, p[static_cast<std::size_t>(model.vq_codebook)],
                                  vq_spec->beta_commit);
    z_dec = vq.quantized;
    vq_loss = vq.loss;
  }

  // Content/style split and the domain flow (static-image only).
  Tensor z_content, z_styled, flow_logdet, z_tilde;
  if (image) {
    z_content = slice(z_dec, 1, 0, model.dims.content);
    Tensor z_style = slice(z_dec, 1, model.dims.content, model.dims.style);
    DomainFlow::Result fl = model.dflow.forward(p, z_style, u);
    z_styled = fl.z_styled;
    flow_logdet = fl.logdet;
    z_tilde = concat({z_content, z_styled}, 1);
  }

  Tensor xhat = model.dec.forward(p, z_dec);

  // Task term.
  Tensor task_loss;
  switch (task.kind) {
    case TaskSpec::Kind::kReconstruction:
    case TaskSpec::Kind::kDenoising:
    case TaskSpec::Kind::kMasked:
      task_loss = mean(sq_norm_rows(sub(xhat, fwd.feat_clean)));
      break;
    case TaskSpec::Kind::kCrossView: {
      Tensor xhat2 = model.dec.forward(p, fwd.second.z);
      if (image) {
        task_loss = loss_cross_view(xhat, fwd.feat_view2, xhat2, fwd.primary.feat_in);
      } else {
        // Multi-view prediction: both views target the average view feature.
        Tensor target = scale(add(fwd.primary.feat_in, fwd.feat_view2), 0.5);
        task_loss = scale(add(mean(sq_norm_rows(sub(xhat, target))),
                              mean(sq_norm_rows(sub(xhat2, target)))),
                          0.5);
      }
      break;
    }
    case TaskSpec::Kind::kContrastive: {
      Tensor c1 = image ? slice(fwd.primary.z, 1, 0, model.dims.content) : fwd.primary.z;
      Tensor c2 = image ? slice(fwd.second.z, 1, 0, model.dims.content) : fwd.second.z;
      Tensor h1 = model.proj.forward(p, c1);
      Tensor h2 = model.proj.forward(p, c2);
      task_loss = scale(add(loss_infonce(h1, h2, task.tau), loss_infonce(h2, h1, task.tau)), 0.5);
      break;
    }
    case TaskSpec::Kind::kPrototype: {
      Tensor c1 = image ? slice(fwd.primary.z, 1, 0, model.dims.content) : fwd.primary.z;
      Tensor c2 = image ? slice(fwd.second.z, 1, 0, model.dims.content) : fwd.second.z;
      const Tensor& rows = p[static_cast<std::size_t>(model.protos.table)];
      task_loss = task.sinkhorn
                      ? loss_prototype_swapped(c1, c2, rows, task.tau_p, task.sinkhorn_iters)
                      : loss_prototype_video(c1, rows, task.tau_p);
      break;
    }
    case TaskSpec::Kind::kTargetPred:
      task_loss = loss_classification(model.cls.forward(p, fwd.primary.z), u);
      break;
    case TaskSpec::Kind::kTransformCorrect:
      task_loss = loss_classification(model.cls.forward(p, fwd.primary.z), fwd.labels);
      break;
    default:
      throw std::invalid_argument("unhandled static task");
  }
  push_term(res, "task:" + task_name(task.kind), task_loss, task.weight);

  // Constraint terms; the primary view's posterior feeds every statistic.
  for (const auto& [c, lambda] : objective.constraints) {
    switch (c.kind) {
      case ConstraintSpec::Kind::kNone:
        break;
      case ConstraintSpec::Kind::kVaeKl:
      case ConstraintSpec::Kind::kVib:
        push_term(res, constraint_name(c.kind),
                  scale(kl_standard_gaussian(fwd.primary.mu, fwd.primary.logvar), c.beta),
                  lambda);
        break;
      case ConstraintSpec::Kind::kCapacityKl: {
        // Single-sample KL with the domain flow's change of variables:
        // E_q[log q(z|x) - log p(z_tilde) - log|det J|].
        Tensor log_q = mean(row_sum(
            scale(add(add_scalar(fwd.primary.logvar, std::log(2.0 * M_PI)),
                      div(square(sub(fwd.primary.z, fwd.primary.mu)),
                          exp_op(fwd.primary.logvar))),
                  -0.5)));
        Tensor log_p =
            mean(row_sum(scale(add_scalar(square(z_tilde), std::log(2.0 * M_PI)), -0.5)));
        Tensor kl_est = sub(sub(log_q, log_p), mean(flow_logdet));
        push_term(res, "capacity_kl", capacity_kl(kl_est, step, c.beta, c.c_max, c.t_stop),
                  lambda);
        break;
      }
      case ConstraintSpec::Kind::kStyleGaussian:
        push_term(res, "style_gaussian", style_gaussian_nll(z_styled), lambda);
        break;
      case ConstraintSpec::Kind::kL1Sparsity:
        push_term(res, "l1_sparsity", l1_sparsity(fwd.primary.z), lambda);
        break;
      case ConstraintSpec::Kind::kTargetSparsity: {
        const int b = fwd.primary.z.shape()[0];
        Tensor rho_hat = matmul(Tensor::full({1, b}, 1.0 / b), sigmoid(fwd.primary.z));
        push_term(res, "target_sparsity", bernoulli_kl(c.rho, rho_hat), lambda);
        break;
      }
      case ConstraintSpec::Kind::kEnergy:
        push_term(res, "energy",
                  model.energy_chol >= 0
                      ? energy_learned(fwd.primary.z,
                                       p[static_cast<std::size_t>(model.energy_chol)])
                      : energy_quadratic(fwd.primary.z),
                  lambda);
        break;
      case ConstraintSpec::Kind::kVq:
        push_term(res, "vq", vq_loss, lambda);
        break;
      case ConstraintSpec::Kind::kCondPriorStatic:
        push_term(res, "cond_prior_static",
                  cond_prior_static_kl(fwd.primary.mu, fwd.primary.logvar, u,
                                       p[static_cast<std::size_t>(model.prior_mu)],
                                       p[static_cast<std::size_t>(model.prior_lv)]),
                  lambda);
        break;
      case ConstraintSpec::Kind::kJacobianSparsity:
        push_term(res, "jacobian_sparsity",
                  decoder_jacobian_l1(model.dec, model.store, p, fwd.primary.z), lambda);
        break;
      case ConstraintSpec::Kind::kInvariance: {
        Tensor z2 = fwd.has_second ? fwd.second.z : fwd.primary.z;
        Tensor pen = c.moments_statistic
                         ? invariance_penalty_moments(fwd.primary.z, z2, c.subset)
                         : invariance_penalty(fwd.primary.z, z2, c.subset);
        push_term(res, "invariance", pen, lambda);
        break;
      }
      default:
        throw std::invalid_argument("constraint '" + constraint_name(c.kind) +
                                    "' not available in a static pipeline");
    }
  }
  return res;
}

// ---- temporal-video pipeline ----

ComposeResult compose_temporal(const CompiledModel& model, const ObjectiveSpec& objective,
                               const Bound& p, const std::vector<Tensor>& x_seq,
                               const std::vector<int>& u, long /*step*/,
                               PrngStream& view_stream, PrngStream& noise_stream) {
  const TaskSpec& task = objective.task;
  const int total_t = static_cast<int>(x_seq.size());
  const int batch = x_seq[0].shape()[0];

  // Optional masked views feed the encoder; targets stay clean.
  std::vector<Tensor> enc_in = x_seq;
  std::vector<Tensor> visible;
  if (task.kind == TaskSpec::Kind::kMasked) {
    ViewSpec vs;
    vs.kind = ViewSpec::Kind::kMask;
    vs.mask_ratio = task.mask_ratio;
    for (int t = 0; t < total_t; ++t) {
      ViewBatch vb = view_generate(vs, x_seq[static_cast<std::size_t>(t)], view_stream);
      enc_in[static_cast<std::size_t>(t)] = vb.view;
      visible.push_back(vb.visible);
    }
  }

  std::vector<Tensor> h_seq, mu_seq, lv_seq, z_seq;
  for (int t = 0; t < total_t; ++t) {
    Tensor h = apply_act(model.frame_enc.forward(p, enc_in[static_cast<std::size_t>(t)]),
                         model.frame_enc.hidden_act);
    auto [mu, lv] = model.enc.forward(p, h);
    Tensor noise = prng_draw(noise_stream, DrawKind::kStandardNormal, mu.shape());
    h_seq.push_back(h);
    mu_seq.push_back(mu);
    lv_seq.push_back(lv);
    z_seq.push_back(reparameterize(mu, lv, noise));
  }

  std::vector<Tensor> s_seq = history_window(z_seq, model.dims.lag);
  std::vector<Tensor> hhat_seq, xhat_seq;
  for (int t = 0; t < total_t; ++t) {
    Tensor hh = model.dec_head.forward(p, s_seq[static_cast<std::size_t>(t)]);
    hhat_seq.push_back(hh);
    xhat_seq.push_back(model.dec.forward(p, hh));
  }

  ComposeResult res;
  Tensor task_loss;
  switch (task.kind) {
    case TaskSpec::Kind::kReconstruction:
      task_loss = loss_reconstruction(xhat_seq, x_seq);
      break;
    case TaskSpec::Kind::kMasked:
      task_loss = loss_masked(xhat_seq, x_seq, visible);
      break;
    case TaskSpec::Kind::kNextFrame:
      task_loss = loss_next_frame(xhat_seq, x_seq);
      break;
    case TaskSpec::Kind::kAutoregressive:
      task_loss = scale(loss_next_frame(xhat_seq, x_seq), 0.5);  // unit-variance NLL
      break;
    case TaskSpec::Kind::kMidLatent:
      task_loss = loss_mid_latent(hhat_seq, h_seq);
      break;
    case TaskSpec::Kind::kContrastive: {
      std::vector<Tensor> queries, keys;
      for (int t = 0; t + 1 < total_t; ++t) {
        queries.push_back(hhat_seq[static_cast<std::size_t>(t)]);
        keys.push_back(h_seq[static_cast<std::size_t>(t + 1)]);
      }
      Tensor q = concat(queries, 0);
      Tensor k = concat(keys, 0);
      if (task.exclude_same_sequence) {
        // Same-sequence keys at other times drop out of the negative pool.
        const int n = q.shape()[0];
        std::vector<double> mask(static_cast<std::size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (i != j && i % batch == j % batch)
              mask[static_cast<std::size_t>(i) * n + j] = -1e9;
        Tensor sim = scale(matmul(normalize_rows(q), transpose(normalize_rows(stop_gradient(k)))),
                           1.0 / task.tau);
        sim = add(sim, Tensor({n, n}, std::move(mask)));
        Tensor lse = logsumexp(sim, 1);
        std::vector<double> eye(static_cast<std::size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) eye[static_cast<std::size_t>(i) * n + i] = 1.0;
        Tensor diag = row_sum(mul(sim, Tensor({n, n}, std::move(eye))));
        task_loss = mean(sub(lse, diag));
      } else {
        task_loss = loss_infonce(q, k, task.tau);
      }
      break;
    }
    case TaskSpec::Kind::kPrototype: {
      Tensor reps = sequence_mean(z_seq);
      task_loss = loss_prototype_video(reps, p[static_cast<std::size_t>(model.protos.table)],
                                       task.tau_p);
      break;
    }
    default:
      throw std::invalid_argument("task not available in the temporal pipeline");
  }
  push_term(res, "task:" + task_name(task.kind), task_loss, task.weight);

  for (const auto& [c, lambda] : objective.constraints) {
    switch (c.kind) {
      case ConstraintSpec::Kind::kNone:
        break;
      case ConstraintSpec::Kind::kTemporalPrior: {
        TemporalPriorTerms terms = temporal_prior_kl(mu_seq, lv_seq, z_seq, model.tflow, p,
                                                     model.env_count > 1 ? u : std::vector<int>{});
        push_term(res, "init_kl", terms.init_kl, lambda * c.beta_init);
        push_term(res, "future_kl", terms.future_kl, lambda * c.gamma_future);
        break;
      }
      case ConstraintSpec::Kind::kLatentRecon: {
        push_term(res, "latent_recon", aux_latent_and_delta(hhat_seq, h_seq).first, lambda);
        break;
      }
      case ConstraintSpec::Kind::kDeltaMatch: {
        push_term(res, "delta_match", aux_latent_and_delta(hhat_seq, h_seq).second, lambda);
        break;
      }
      case ConstraintSpec::Kind::kMechanismSparsity:
        push_term(res, "mechanism_sparsity",
                  mechanism_sparsity(p[static_cast<std::size_t>(model.tflow.gates)]), lambda);
        break;
      case ConstraintSpec::Kind::kL1Sparsity:
        push_term(res, "l1_sparsity", l1_sparsity(concat(z_seq, 0)), lambda);
        break;
      case ConstraintSpec::Kind::kTargetSparsity: {
        Tensor all_z = concat(z_seq, 0);
        const int rows = all_z.shape()[0];
        Tensor rho_hat = matmul(Tensor::full({1, rows}, 1.0 / rows), sigmoid(all_z));
        push_term(res, "target_sparsity", bernoulli_kl(c.rho, rho_hat), lambda);
        break;
      }
      case ConstraintSpec::Kind::kEnergy:
        push_term(res, "energy", energy_quadratic(concat(z_seq, 0)), lambda);
        break;
      case ConstraintSpec::Kind::kVq:
        throw std::invalid_argument("vq is not wired into the temporal pipeline");
      default:
        throw std::invalid_argument("constraint '" + constraint_name(c.kind) +
                                    "' not available in the temporal pipeline");
    }
  }
  return res;
}

// ---- batching and evaluation ----

Tensor gather_rows(const Dataset& ds, const std::vector<int>& rows, bool observed) {
  const int dim = observed ? ds.n : ds.d;
  std::vector<double> out(rows.size() * static_cast<std::size_t>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < dim; ++c)
      out[r * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] =
          observed ? ds.x(rows[r], 0, c) : ds.z(rows[r], 0, c);
  return Tensor({static_cast<int>(rows.size()), dim}, std::move(out));
}

std::vector<Tensor> gather_episodes(const Dataset& ds, const std::vector<int>& eps) {
  std::vector<Tensor> seq;
  for (int t = 0; t < ds.time_steps; ++t) {
    std::vector<double> out(eps.size() * static_cast<std::size_t>(ds.n));
    for (std::size_t r = 0; r < eps.size(); ++r)
      for (int c = 0; c < ds.n; ++c)
        out[r * static_cast<std::size_t>(ds.n) + static_cast<std::size_t>(c)] =
            ds.x(eps[r], t, c);
    seq.emplace_back(Shape{static_cast<int>(eps.size()), ds.n}, std::move(out));
  }
  return seq;
}

// Deterministic posterior means for the evaluation slice.
EvalReport evaluate_model(const CompiledModel& model, const ExperimentConfig& config,
                          const Dataset& ds) {
  const Bound p = model.store.bind_const();
  if (model.pipeline == Pipeline::kTemporalVideo) {
    const int want_eps = std::max(
        1, std::min(ds.episodes, (config.eval_samples + ds.time_steps - 1) / ds.time_steps));
    std::vector<int> eps;
    for (int e = ds.episodes - want_eps; e < ds.episodes; ++e) eps.push_back(e);
    std::vector<Tensor> x_seq = gather_episodes(ds, eps);
    const int b = static_cast<int>(eps.size());
    std::vector<double> zh(static_cast<std::size_t>(b) * ds.time_steps * model.dims.latent);
    std::vector<double> zt(static_cast<std::size_t>(b) * ds.time_steps * ds.d);
    for (int t = 0; t < ds.time_steps; ++t) {
      Tensor h = apply_act(model.frame_enc.forward(p, x_seq[static_cast<std::size_t>(t)]),
                           model.frame_enc.hidden_act);
      Tensor mu = model.enc.forward(p, h).first;
      for (int r = 0; r < b; ++r) {
        for (int c = 0; c < model.dims.latent; ++c)
          zh[(static_cast<std::size_t>(r) * ds.time_steps + t) * model.dims.latent + c] =
              mu[static_cast<std::int64_t>(r) * model.dims.latent + c];
        for (int c = 0; c < ds.d; ++c)
          zt[(static_cast<std::size_t>(r) * ds.time_steps + t) * ds.d + c] =
              ds.z(eps[static_cast<std::size_t>(r)], t, c);
      }
    }
    Tensor z_hat({b * ds.time_steps, model.dims.latent}, std::move(zh));
    Tensor z_true({b * ds.time_steps, ds.d}, std::move(zt));
    return evaluate(z_hat, z_true, config.eval_method, config.ridge_alpha);
  }

  const int want = std::max(20, std::min(config.eval_samples, ds.episodes));
  std::vector<int> rows;
  for (int r = ds.episodes - want; r < ds.episodes; ++r) rows.push_back(r);
  Tensor x = gather_rows(ds, rows, true);
  Tensor feat = model.phi.forward(x);
  Tensor mu = model.enc.forward(p, feat).first;
  Tensor z_hat = model.pipeline == Pipeline::kStaticImage
                     ? slice(mu, 1, 0, model.dims.content)
                     : mu;
  Tensor z_true = gather_rows(ds, rows, false);
  return evaluate(z_hat, z_true, config.eval_method, config.ridge_alpha);
}

void check_terms_finite(const ComposeResult& res) {
  for (const auto& term : res.terms)
    if (!std::isfinite(term.weighted)) throw NumericAbort(term.name);
  if (!std::isfinite(res.total.value())) throw NumericAbort("total");
}

// Full training state: parameters, optimizer moments, stream counters.
void save_checkpoint(const std::string& path, const ParamStore& store, const AdamState& adam,
                     long step, const PrngStream& batch_s, const PrngStream& noise_s,
                     const PrngStream& view_s, std::uint64_t config_hash, std::uint64_t seed) {
  Container c = store.to_container();
  for (int i = 0; i < store.count(); ++i) {
    c.arrays.push_back({"adam.m." + store.name(i), store.shape(i),
                        adam.first_moments()[static_cast<std::size_t>(i)]});
    c.arrays.push_back({"adam.v." + store.name(i), store.shape(i),
                        adam.second_moments()[static_cast<std::size_t>(i)]});
  }
  c.meta["step"] = step;
  c.meta["adam_t"] = adam.step_count();
  c.meta["config_hash"] = config_hash;
  c.meta["seed"] = seed;
  c.meta["counters"] = {batch_s.counter, noise_s.counter, view_s.counter};
  save_container(path, c);
}

long restore_checkpoint(const std::string& path, ParamStore& store, AdamState& adam,
                        PrngStream& batch_s, PrngStream& noise_s, PrngStream& view_s) {
  const Container c = load_container(path);
  if (c.kind != "checkpoint")
    throw ContainerFormatError(path + ": not a checkpoint container");
  std::vector<std::vector<double>> m(static_cast<std::size_t>(store.count()));
  std::vector<std::vector<double>> v(static_cast<std::size_t>(store.count()));
  for (int i = 0; i < store.count(); ++i) {
    bool found_p = false, found_m = false, found_v = false;
    for (const auto& a : c.arrays) {
      if (a.name == store.name(i)) {
        store.values(i) = a.data;
        found_p = true;
      } else if (a.name == "adam.m." + store.name(i)) {
        m[static_cast<std::size_t>(i)] = a.data;
        found_m = true;
      } else if (a.name == "adam.v." + store.name(i)) {
        v[static_cast<std::size_t>(i)] = a.data;
        found_v = true;
      }
    }
    if (!found_p || !found_m || !found_v)
      throw std::invalid_argument(path + ": checkpoint is missing state for parameter '" +
                                  store.name(i) + "'");
  }
  adam.restore(std::move(m), std::move(v), c.meta.at("adam_t").get<long>());
  const auto counters = c.meta.at("counters");
  batch_s.counter = counters.at(0).get<std::uint64_t>();
  noise_s.counter = counters.at(1).get<std::uint64_t>();
  view_s.counter = counters.at(2).get<std::uint64_t>();
  return c.meta.at("step").get<long>();
}

}  // namespace

RunRecord train_run(const ExperimentConfig& config) {
  validate_objective(config.objective);

  Dataset ds = config.data.path.empty() ? build_dataset(config.data, config.seed)
                                        : load_dataset(config.data.path);
  const bool temporal = config.objective.pipeline == Pipeline::kTemporalVideo;
  if (temporal && ds.time_steps < config.model.lag + 2)
    throw std::invalid_argument("temporal pipeline needs time_steps >= lag + 2");
  if (!temporal && ds.time_steps != 1)
    throw std::invalid_argument("static pipelines need a static dataset");

  int env_count = 1;
  for (int uu : ds.u) env_count = std::max(env_count, uu + 1);

  CompiledModel model = build_model(config, ds, env_count);
  AdamState adam(config.optimizer, model.store);

  PrngStream root{config.seed, 0};
  PrngStream batch_s = root.substream(kStreamBatch);
  PrngStream noise_s = root.substream(kStreamNoise);
  PrngStream view_s = root.substream(kStreamView);

  RunRecord rec;
  rec.seed = config.seed;
  rec.config_hash = config.config_hash;
  rec.task_label = task_name(config.objective.task.kind);
  for (const auto& [c, lambda] : config.objective.constraints) {
    if (!rec.constraint_label.empty()) rec.constraint_label += "+";
    rec.constraint_label += constraint_name(c.kind);
  }
  if (rec.constraint_label.empty()) rec.constraint_label = "none";
  rec.method = config.eval_method == CorrMethod::kPearson ? "pearson" : "spearman";

  long start_step = 0;
  if (!config.resume_from.empty())
    start_step = restore_checkpoint(config.resume_from, model.store, adam, batch_s, noise_s,
                                    view_s);

  for (long step = start_step; step < config.steps; ++step) {
    Tape tape;
    Bound bound = model.store.bind(tape);
    ComposeResult res;
    if (temporal) {
      std::vector<int> eps(static_cast<std::size_t>(config.batch));
      for (auto& e : eps)
        e = static_cast<int>(draw_index(batch_s, static_cast<std::uint64_t>(ds.episodes)));
      std::vector<int> u(static_cast<std::size_t>(config.batch));
      for (std::size_t i = 0; i < eps.size(); ++i) u[i] = ds.u[static_cast<std::size_t>(eps[i])];
      res = compose_temporal(model, config.objective, bound, gather_episodes(ds, eps), u, step,
                             view_s, noise_s);
    } else {
      std::vector<int> rows(static_cast<std::size_t>(config.batch));
      for (auto& r : rows)
        r = static_cast<int>(draw_index(batch_s, static_cast<std::uint64_t>(ds.episodes)));
      std::vector<int> u(static_cast<std::size_t>(config.batch));
      for (std::size_t i = 0; i < rows.size(); ++i) u[i] = ds.u[static_cast<std::size_t>(rows[i])];
      res = compose_static(model, config.objective, bound, gather_rows(ds, rows, true), u, step,
                           view_s, noise_s);
    }
    check_terms_finite(res);

    GradientMap grads = tape.backward(res.total);
    adam.step(model.store, bound, grads);
    if (model.has_protos) renormalize_prototype_rows(model.store, model.protos.table);

    if (rec.term_names.empty())
      for (const auto& t : res.terms) rec.term_names.push_back(t.name);
    std::vector<double> weighted;
    for (const auto& t : res.terms) weighted.push_back(t.weighted);
    rec.term_trace.push_back(std::move(weighted));
    rec.total_trace.push_back(res.total.value());

    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps)
      rec.eval_history.emplace_back(step + 1, evaluate_model(model, config, ds));
  }

  rec.final_eval = evaluate_model(model, config, ds);
  rec.eval_history.emplace_back(config.steps, rec.final_eval);
  rec.param_hash = model.store.values_hash();

  if (!config.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    rec.checkpoint_path = (fs::path(config.out_dir) / "checkpoint.bin").string();
    save_checkpoint(rec.checkpoint_path, model.store, adam, config.steps, batch_s, noise_s,
                    view_s, config.config_hash, config.seed);
    rec.record_path = (fs::path(config.out_dir) / "record.json").string();
    atomic_write_text(rec.record_path, run_record_to_json(rec).dump(2));
  }
  return rec;
}

GridOutcome grid_run(const ExperimentConfig& base, const GridSpec& grid, int jobs,
                     const std::string& out_root) {
  if (grid.tasks.empty() || grid.constraint_presets.empty())
    throw std::invalid_argument("grid_run: tasks and constraint presets must be nonempty");
  const int nt = static_cast<int>(grid.tasks.size());
  const int nc = static_cast<int>(grid.constraint_presets.size());
  const int reps = std::max(1, grid.seeds);

  struct Cell {
    int ti, ci, rep;
    bool failed = false;
    std::string error;
    RunRecord record;
  };
  std::vector<Cell> cells;
  for (int ti = 0; ti < nt; ++ti)
    for (int ci = 0; ci < nc; ++ci)
      for (int rep = 0; rep < reps; ++rep) cells.push_back(Cell{ti, ci, rep});

  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&]() {
    while (true) {
      std::size_t mine;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= cells.size()) return;
        mine = next++;
      }
      Cell& cell = cells[mine];
      ExperimentConfig cfg = base;
      cfg.objective.task = grid.tasks[static_cast<std::size_t>(cell.ti)];
      cfg.objective.constraints = grid.constraint_presets[static_cast<std::size_t>(cell.ci)];
      cfg.seed = mix64(mix64(mix64(mix64(base.seed) + static_cast<std::uint64_t>(cell.ti)) +
                             static_cast<std::uint64_t>(cell.ci)) +
                       static_cast<std::uint64_t>(cell.rep));
      if (!out_root.empty())
        cfg.out_dir = out_root + "/cell_t" + std::to_string(cell.ti) + "_c" +
                      std::to_string(cell.ci) + "_s" + std::to_string(cell.rep);
      try {
        cell.record = train_run(cfg);
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };

  const int thread_count = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  GridOutcome out;
  for (int ti = 0; ti < nt; ++ti)
    for (int ci = 0; ci < nc; ++ci) {
      std::vector<double> mccs, r2s;
      int ok = 0;
      for (const Cell& cell : cells) {
        if (cell.ti != ti || cell.ci != ci) continue;
        if (cell.failed) {
          ++out.failed_cells;
          continue;
        }
        mccs.push_back(cell.record.final_eval.mcc);
        r2s.push_back(cell.record.final_eval.r2);
        out.records.push_back(cell.record);
        ++ok;
      }
      ReportRow row;
      row.task = ti < static_cast<int>(grid.task_labels.size())
                     ? grid.task_labels[static_cast<std::size_t>(ti)]
                     : task_name(grid.tasks[static_cast<std::size_t>(ti)].kind);
      row.constraint = ci < static_cast<int>(grid.constraint_labels.size())
                           ? grid.constraint_labels[static_cast<std::size_t>(ci)]
                           : "preset" + std::to_string(ci);
      row.seeds = ok;
      row.method = base.eval_method == CorrMethod::kPearson ? "pearson" : "spearman";
      if (ok == 0) {
        row.failed = true;
      } else {
        auto mean_std = [](const std::vector<double>& v) {
          double m = 0;
          for (double x : v) m += x;
          m /= static_cast<double>(v.size());
          double s2 = 0;
          for (double x : v) s2 += (x - m) * (x - m);
          const double sd = v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0;
          return std::make_pair(m, sd);
        };
        std::tie(row.mcc_mean, row.mcc_std) = mean_std(mccs);
        std::tie(row.r2_mean, row.r2_std) = mean_std(r2s);
      }
      out.rows.push_back(std::move(row));
    }
  return out;
}

nlohmann::json run_record_to_json(const RunRecord& rec) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = rec.seed;
  j["task"] = rec.task_label;
  j["constraint"] = rec.constraint_label;
  j["method"] = rec.method;
  j["config_hash"] = rec.config_hash;
  j["param_hash"] = rec.param_hash;
  j["term_names"] = rec.term_names;
  j["total_trace"] = rec.total_trace;
  j["term_trace"] = rec.term_trace;
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& [step, rep] : rec.eval_history) {
    evals.push_back({{"step", step},
                     {"mcc", rep.mcc},
                     {"r2", rep.r2},
                     {"r2_raw", rep.r2_raw},
                     {"n_eval", rep.n_eval},
                     {"method", rep.method == CorrMethod::kPearson ? "pearson" : "spearman"}});
  }
  j["evals"] = evals;
  j["final"] = {{"mcc", rec.final_eval.mcc}, {"r2", rec.final_eval.r2}};
  j["checkpoint"] = rec.checkpoint_path;
  return j;
}

}  // namespace crl
