#include "crl/config.hpp"

#include <fstream>
#include <set>

namespace crl {

namespace {

void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in config section '" + where + "'");
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for key '" + key + "'");
  }
}

}  // namespace

TaskSpec parse_task_spec(const nlohmann::json& j) {
  reject_unknown_keys(j, {"kind", "weight", "tau", "prototype_k", "tau_p", "sinkhorn",
                          "sinkhorn_iters", "mask_ratio", "corrupt_sigma", "transform_count",
                          "exclude_same_sequence"},
                      "task");
  TaskSpec t;
  if (!j.contains("kind")) throw ConfigError("task needs a 'kind'");
  try {
    t.kind = task_kind_from_name(j.at("kind").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  t.weight = get_or(j, "weight", t.weight);
  t.tau = get_or(j, "tau", t.tau);
  t.prototype_k = get_or(j, "prototype_k", t.prototype_k);
  t.tau_p = get_or(j, "tau_p", t.tau_p);
  t.sinkhorn = get_or(j, "sinkhorn", t.sinkhorn);
  t.sinkhorn_iters = get_or(j, "sinkhorn_iters", t.sinkhorn_iters);
  t.mask_ratio = get_or(j, "mask_ratio", t.mask_ratio);
  t.corrupt_sigma = get_or(j, "corrupt_sigma", t.corrupt_sigma);
  t.transform_count = get_or(j, "transform_count", t.transform_count);
  t.exclude_same_sequence = get_or(j, "exclude_same_sequence", t.exclude_same_sequence);
  return t;
}

std::pair<ConstraintSpec, double> parse_constraint_spec(const nlohmann::json& j) {
  reject_unknown_keys(j, {"kind", "weight", "beta", "c_max", "t_stop", "rho", "vq_k",
                          "beta_commit", "beta_init", "gamma_future", "subset",
                          "moments_statistic", "learned_energy"},
                      "constraint");
  ConstraintSpec c;
  if (!j.contains("kind")) throw ConfigError("constraint needs a 'kind'");
  try {
    c.kind = constraint_kind_from_name(j.at("kind").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.beta = get_or(j, "beta", c.beta);
  c.c_max = get_or(j, "c_max", c.c_max);
  c.t_stop = get_or(j, "t_stop", c.t_stop);
  c.rho = get_or(j, "rho", c.rho);
  c.vq_k = get_or(j, "vq_k", c.vq_k);
  c.beta_commit = get_or(j, "beta_commit", c.beta_commit);
  c.beta_init = get_or(j, "beta_init", c.beta_init);
  c.gamma_future = get_or(j, "gamma_future", c.gamma_future);
  c.subset = get_or(j, "subset", c.subset);
  c.moments_statistic = get_or(j, "moments_statistic", c.moments_statistic);
  c.learned_energy = get_or(j, "learned_energy", c.learned_energy);
  const double weight = get_or(j, "weight", 1.0);
  return {c, weight};
}

namespace {

DataSpec parse_data(const nlohmann::json& j) {
  reject_unknown_keys(j, {"kind", "d", "n", "p_edge", "mechanism", "noise", "noise_param",
                          "env_count", "env_noise", "env_weight", "samples_per_env",
                          "mixing_layers", "episodes", "time_steps", "lag", "instantaneous",
                          "p_edge_delayed", "p_edge_inst", "path"},
                      "data");
  DataSpec d;
  const std::string kind = get_or<std::string>(j, "kind", "static");
  if (kind == "static") d.kind = DataSpec::Kind::kStatic;
  else if (kind == "temporal") d.kind = DataSpec::Kind::kTemporal;
  else throw ConfigError("data.kind must be 'static' or 'temporal'");
  d.d = get_or(j, "d", d.d);
  d.n = get_or(j, "n", d.n);
  d.p_edge = get_or(j, "p_edge", d.p_edge);
  const std::string mech = get_or<std::string>(j, "mechanism", "linear");
  if (mech == "linear") d.mechanism = MechanismKind::kLinear;
  else if (mech == "mlp") d.mechanism = MechanismKind::kMlp;
  else throw ConfigError("data.mechanism must be 'linear' or 'mlp'");
  const std::string noise = get_or<std::string>(j, "noise", "gaussian");
  if (noise == "gaussian") d.noise = NoiseKind::kGaussian;
  else if (noise == "laplace") d.noise = NoiseKind::kLaplace;
  else throw ConfigError("data.noise must be 'gaussian' or 'laplace'");
  d.noise_param = get_or(j, "noise_param", d.noise_param);
  d.env_count = get_or(j, "env_count", d.env_count);
  if (j.contains("env_noise")) {
    const auto arr = j.at("env_noise");
    if (!arr.is_array() || arr.size() != 2) throw ConfigError("data.env_noise must be [lo, hi]");
    d.env_noise_lo = arr.at(0).get<double>();
    d.env_noise_hi = arr.at(1).get<double>();
  }
  if (j.contains("env_weight")) {
    const auto arr = j.at("env_weight");
    if (!arr.is_array() || arr.size() != 2) throw ConfigError("data.env_weight must be [lo, hi]");
    d.env_weight_lo = arr.at(0).get<double>();
    d.env_weight_hi = arr.at(1).get<double>();
  }
  d.samples_per_env = get_or(j, "samples_per_env", d.samples_per_env);
  d.mixing_layers = get_or(j, "mixing_layers", d.mixing_layers);
  d.episodes = get_or(j, "episodes", d.episodes);
  d.time_steps = get_or(j, "time_steps", d.time_steps);
  d.lag = get_or(j, "lag", d.lag);
  d.instantaneous = get_or(j, "instantaneous", d.instantaneous);
  d.p_edge_delayed = get_or(j, "p_edge_delayed", d.p_edge_delayed);
  d.p_edge_inst = get_or(j, "p_edge_inst", d.p_edge_inst);
  d.path = get_or<std::string>(j, "path", "");
  return d;
}

ModelDims parse_model(const nlohmann::json& j) {
  reject_unknown_keys(j, {"latent", "hidden", "depth", "feature", "content", "style", "lag",
                          "flow_hidden", "proj"},
                      "model");
  ModelDims m;
  m.latent = get_or(j, "latent", m.latent);
  m.hidden = get_or(j, "hidden", m.hidden);
  m.depth = get_or(j, "depth", m.depth);
  m.feature = get_or(j, "feature", m.feature);
  m.content = get_or(j, "content", m.content);
  m.style = get_or(j, "style", m.style);
  m.lag = get_or(j, "lag", m.lag);
  m.flow_hidden = get_or(j, "flow_hidden", m.flow_hidden);
  m.proj = get_or(j, "proj", m.proj);
  return m;
}

}  // namespace

CliConfig parse_config(const nlohmann::json& doc) {
  reject_unknown_keys(doc, {"schema_version", "data", "model", "objective", "optimizer", "run",
                            "eval", "grid"},
                      "<root>");
  const int version = get_or(doc, "schema_version", 0);
  if (version != 1)
    throw ConfigError("unsupported schema_version " + std::to_string(version) +
                      " (expected 1)");

  CliConfig out;
  ExperimentConfig& cfg = out.experiment;
  if (doc.contains("data")) cfg.data = parse_data(doc.at("data"));
  if (doc.contains("model")) cfg.model = parse_model(doc.at("model"));

  if (doc.contains("objective")) {
    const auto& obj = doc.at("objective");
    reject_unknown_keys(obj, {"pipeline", "task", "constraints"}, "objective");
    try {
      cfg.objective.pipeline =
          pipeline_from_name(get_or<std::string>(obj, "pipeline", "static_image"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (obj.contains("task")) cfg.objective.task = parse_task_spec(obj.at("task"));
    if (obj.contains("constraints")) {
      for (const auto& cj : obj.at("constraints"))
        cfg.objective.constraints.push_back(parse_constraint_spec(cj));
    }
  }

  if (doc.contains("optimizer")) {
    const auto& opt = doc.at("optimizer");
    reject_unknown_keys(opt, {"lr", "beta1", "beta2", "eps"}, "optimizer");
    cfg.optimizer.lr = get_or(opt, "lr", cfg.optimizer.lr);
    cfg.optimizer.beta1 = get_or(opt, "beta1", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = get_or(opt, "beta2", cfg.optimizer.beta2);
    cfg.optimizer.eps = get_or(opt, "eps", cfg.optimizer.eps);
  }

  if (doc.contains("run")) {
    const auto& run = doc.at("run");
    reject_unknown_keys(run, {"steps", "batch", "seed", "eval_every", "out_dir"}, "run");
    cfg.steps = get_or(run, "steps", cfg.steps);
    cfg.batch = get_or(run, "batch", cfg.batch);
    cfg.seed = get_or(run, "seed", cfg.seed);
    cfg.eval_every = get_or(run, "eval_every", cfg.eval_every);
    cfg.out_dir = get_or<std::string>(run, "out_dir", cfg.out_dir);
    if (cfg.steps < 0 || cfg.batch < 1)
      throw ConfigError("run.steps must be >= 0 and run.batch >= 1");
  }

  if (doc.contains("eval")) {
    const auto& ev = doc.at("eval");
    reject_unknown_keys(ev, {"method", "ridge_alpha", "samples"}, "eval");
    const std::string method = get_or<std::string>(ev, "method", "pearson");
    if (method == "pearson") cfg.eval_method = CorrMethod::kPearson;
    else if (method == "spearman") cfg.eval_method = CorrMethod::kSpearman;
    else throw ConfigError("eval.method must be 'pearson' or 'spearman'");
    cfg.ridge_alpha = get_or(ev, "ridge_alpha", cfg.ridge_alpha);
    cfg.eval_samples = get_or(ev, "samples", cfg.eval_samples);
  }

  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    reject_unknown_keys(g, {"tasks", "task_labels", "constraints", "constraint_labels", "seeds"},
                        "grid");
    GridSpec grid;
    if (!g.contains("tasks") || !g.at("tasks").is_array() || g.at("tasks").empty())
      throw ConfigError("grid.tasks must be a nonempty array");
    for (const auto& tj : g.at("tasks")) grid.tasks.push_back(parse_task_spec(tj));
    if (!g.contains("constraints") || !g.at("constraints").is_array() ||
        g.at("constraints").empty())
      throw ConfigError("grid.constraints must be a nonempty array of constraint lists");
    for (const auto& preset : g.at("constraints")) {
      std::vector<std::pair<ConstraintSpec, double>> list;
      for (const auto& cj : preset) list.push_back(parse_constraint_spec(cj));
      grid.constraint_presets.push_back(std::move(list));
    }
    grid.task_labels = get_or(g, "task_labels", std::vector<std::string>{});
    grid.constraint_labels = get_or(g, "constraint_labels", std::vector<std::string>{});
    grid.seeds = get_or(g, "seeds", grid.seeds);
    if (grid.seeds < 1) throw ConfigError("grid.seeds must be >= 1");
    out.grid = std::move(grid);
  }

  // Objective sanity surfaces as a config error at parse time.
  try {
    validate_objective(cfg.objective);
    if (out.grid) {
      for (const auto& t : out.grid->tasks)
        for (const auto& preset : out.grid->constraint_presets) {
          ObjectiveSpec probe{t, preset, cfg.objective.pipeline};
          validate_objective(probe);
        }
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  // The hash identifies the experiment; where outputs land is not part of
  // that identity.
  nlohmann::json hashed = doc;
  if (hashed.contains("run") && hashed["run"].contains("out_dir"))
    hashed["run"].erase("out_dir");
  const std::string dump = hashed.dump();
  out.hash = fnv1a(dump.data(), dump.size());
  out.experiment.config_hash = out.hash;
  return out;
}

CliConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(doc);
}

}  // namespace crl
