#include "crl/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crl/container.hpp"
#include "crl/linalg.hpp"

namespace crl {

namespace {

double draw_laplace(PrngStream& s, double b) {
  const double u = draw_uniform01(s) - 0.5;
  const double a = std::abs(u);
  return -b * (u < 0 ? -1.0 : 1.0) * std::log(std::max(1.0 - 2.0 * a, 1e-300));
}

double draw_noise(PrngStream& s, const NodeMechanism& m, double scale) {
  if (m.noise == NoiseKind::kGaussian) return m.noise_param * scale * draw_standard_normal(s);
  return draw_laplace(s, m.noise_param * scale);
}

// Mechanism output given parent values (noise excluded).
double mechanism_value(const NodeMechanism& m, const std::vector<double>& parents) {
  if (parents.empty()) return 0.0;
  if (m.kind == MechanismKind::kLinear) {
    double acc = 0.0;
    for (std::size_t i = 0; i < parents.size(); ++i) acc += m.linear_w[i] * parents[i];
    return acc;
  }
  const int h = m.mlp_hidden;
  double out = 0.0;
  for (int k = 0; k < h; ++k) {
    double pre = m.mlp_b1[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < parents.size(); ++i)
      pre += m.mlp_w1[i * static_cast<std::size_t>(h) + static_cast<std::size_t>(k)] * parents[i];
    out += m.mlp_w2[static_cast<std::size_t>(k)] * std::tanh(pre);
  }
  return out;
}

void fill_linear_weights(NodeMechanism& m, std::size_t count, PrngStream& s) {
  m.linear_w.resize(count);
  for (auto& w : m.linear_w) {
    const double mag = 0.5 + draw_uniform01(s);  // |w| in [0.5, 1.5]
    w = draw_uniform01(s) < 0.5 ? -mag : mag;
  }
}

void fill_mlp_weights(NodeMechanism& m, std::size_t count, PrngStream& s) {
  m.mlp_hidden = 16;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(count, 1)));
  m.mlp_w1.resize(count * 16);
  for (auto& w : m.mlp_w1) w = s1 * draw_standard_normal(s);
  m.mlp_b1.assign(16, 0.0);
  m.mlp_w2.resize(16);
  for (auto& w : m.mlp_w2) w = 0.25 * draw_standard_normal(s);
}

// Orthonormalizes the rows of a [rows x cols] Gaussian draw.
std::vector<double> orthonormal_rows(int rows, int cols, PrngStream& s) {
  while (true) {
    std::vector<double> w = draw_normal_vec(s, static_cast<std::size_t>(rows) * cols);
    bool ok = true;
    for (int i = 0; i < rows && ok; ++i) {
      double* ri = &w[static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < i; ++j) {
        const double* rj = &w[static_cast<std::size_t>(j) * cols];
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += ri[c] * rj[c];
        for (int c = 0; c < cols; ++c) ri[c] -= dot * rj[c];
      }
      double norm = 0.0;
      for (int c = 0; c < cols; ++c) norm += ri[c] * ri[c];
      norm = std::sqrt(norm);
      if (norm < 1e-8) {
        ok = false;
        break;
      }
      for (int c = 0; c < cols; ++c) ri[c] /= norm;
    }
    if (ok) return w;
  }
}

double matrix_condition(const std::vector<double>& w, int rows, int cols) {
  // Singular values via the smaller Gram matrix.
  const int k = std::min(rows, cols);
  std::vector<double> gram(static_cast<std::size_t>(k) * k, 0.0);
  if (rows <= cols) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j) {
        double acc = 0.0;
        for (int c = 0; c < cols; ++c)
          acc += w[static_cast<std::size_t>(i) * cols + c] * w[static_cast<std::size_t>(j) * cols + c];
        gram[static_cast<std::size_t>(i) * k + j] = acc;
      }
  } else {
    for (int i = 0; i < cols; ++i)
      for (int j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (int r = 0; r < rows; ++r)
          acc += w[static_cast<std::size_t>(r) * cols + i] * w[static_cast<std::size_t>(r) * cols + j];
        gram[static_cast<std::size_t>(i) * k + j] = acc;
      }
  }
  std::vector<double> eig = symmetric_eigenvalues(gram, k);
  double lo = eig[0], hi = eig[0];
  for (double e : eig) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  if (lo <= 0.0) return 1e18;
  return std::sqrt(hi / lo);
}

}  // namespace

std::vector<int> DagSpec::parents_of(int j) const {
  std::vector<int> out;
  for (int p = 0; p < d; ++p)
    if (edges[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)]) out.push_back(p);
  return out;
}

bool DagSpec::is_acyclic() const {
  // DFS with colors over the raw adjacency; independent of `order`.
  std::vector<int> color(static_cast<std::size_t>(d), 0);
  std::vector<int> stack;
  for (int root = 0; root < d; ++root) {
    if (color[static_cast<std::size_t>(root)]) continue;
    stack.push_back(root);
    while (!stack.empty()) {
      const int v = stack.back();
      if (color[static_cast<std::size_t>(v)] == 0) {
        color[static_cast<std::size_t>(v)] = 1;
        for (int c = 0; c < d; ++c)
          if (edges[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)]) {
            if (color[static_cast<std::size_t>(c)] == 1) return false;
            if (color[static_cast<std::size_t>(c)] == 0) stack.push_back(c);
          }
      } else {
        color[static_cast<std::size_t>(v)] = 2;
        stack.pop_back();
      }
    }
  }
  return true;
}

nlohmann::json DagSpec::to_json() const {
  nlohmann::json j;
  j["d"] = d;
  j["order"] = order;
  std::vector<std::vector<int>> e;
  for (const auto& row : edges) e.emplace_back(row.begin(), row.end());
  j["edges"] = e;
  return j;
}

DagSpec sample_dag(int d, double p_edge, PrngStream& stream) {
  if (d < 1) throw std::invalid_argument("sample_dag: d must be >= 1");
  if (p_edge < 0.0 || p_edge > 1.0)
    throw std::invalid_argument("sample_dag: p_edge must be in [0, 1]");
  DagSpec dag;
  dag.d = d;
  dag.order.resize(static_cast<std::size_t>(d));
  std::iota(dag.order.begin(), dag.order.end(), 0);
  shuffle(stream, dag.order);
  dag.edges.assign(static_cast<std::size_t>(d), std::vector<bool>(static_cast<std::size_t>(d), false));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (draw_uniform01(stream) < p_edge)
        dag.edges[static_cast<std::size_t>(dag.order[static_cast<std::size_t>(i)])]
                 [static_cast<std::size_t>(dag.order[static_cast<std::size_t>(j)])] = true;
  return dag;
}

std::vector<int> descendants(const DagSpec& dag, const std::vector<int>& targets) {
  std::vector<bool> seen(static_cast<std::size_t>(dag.d), false);
  std::vector<int> stack;
  for (int t : targets) {
    if (t < 0 || t >= dag.d)
      throw std::out_of_range("descendants: node " + std::to_string(t) + " out of range");
    if (!seen[static_cast<std::size_t>(t)]) {
      seen[static_cast<std::size_t>(t)] = true;
      stack.push_back(t);
    }
  }
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int c = 0; c < dag.d; ++c)
      if (dag.edges[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)] &&
          !seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = true;
        stack.push_back(c);
      }
  }
  std::vector<int> out;
  for (int v = 0; v < dag.d; ++v)
    if (seen[static_cast<std::size_t>(v)]) out.push_back(v);
  return out;
}

std::vector<int> invariant_set(const DagSpec& dag, const std::vector<int>& targets) {
  const std::vector<int> de = descendants(dag, targets);
  std::vector<bool> in_de(static_cast<std::size_t>(dag.d), false);
  for (int v : de) in_de[static_cast<std::size_t>(v)] = true;
  std::vector<int> out;
  for (int v = 0; v < dag.d; ++v)
    if (!in_de[static_cast<std::size_t>(v)]) out.push_back(v);
  return out;
}

nlohmann::json MechanismSpec::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : nodes) {
    nlohmann::json j;
    j["kind"] = m.kind == MechanismKind::kLinear ? "linear" : "mlp";
    j["noise"] = m.noise == NoiseKind::kGaussian ? "gaussian" : "laplace";
    j["noise_param"] = m.noise_param;
    j["linear_w"] = m.linear_w;
    j["mlp_hidden"] = m.mlp_hidden;
    arr.push_back(j);
  }
  return arr;
}

MechanismSpec sample_mechanisms(const DagSpec& dag, MechanismKind kind, NoiseKind noise,
                                double noise_param, PrngStream& stream) {
  MechanismSpec spec;
  spec.nodes.resize(static_cast<std::size_t>(dag.d));
  for (int j = 0; j < dag.d; ++j) {
    NodeMechanism& m = spec.nodes[static_cast<std::size_t>(j)];
    m.kind = kind;
    m.noise = noise;
    m.noise_param = noise_param;
    const std::size_t p = dag.parents_of(j).size();
    if (p == 0) continue;
    if (kind == MechanismKind::kLinear)
      fill_linear_weights(m, p, stream);
    else
      fill_mlp_weights(m, p, stream);
  }
  return spec;
}

std::vector<double> MixingSpec::apply(const std::vector<double>& z) const {
  std::vector<double> cur = z;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const int rows = layer_shapes[l][0], cols = layer_shapes[l][1];
    if (static_cast<int>(cur.size()) != rows)
      throw std::invalid_argument("mixing: input dim " + std::to_string(cur.size()) +
                                  " does not match layer " + shape_str(layer_shapes[l]));
    if (l > 0)  // leaky_relu between layers only
      for (auto& v : cur) v = v > 0 ? v : leaky_alpha * v;
    std::vector<double> next(static_cast<std::size_t>(cols), 0.0);
    for (int r = 0; r < rows; ++r) {
      const double zr = cur[static_cast<std::size_t>(r)];
      if (zr == 0.0) continue;
      for (int c = 0; c < cols; ++c)
        next[static_cast<std::size_t>(c)] += zr * layers[l][static_cast<std::size_t>(r) * cols + c];
    }
    cur = std::move(next);
  }
  return cur;
}

nlohmann::json MixingSpec::to_json() const {
  nlohmann::json j;
  j["d_in"] = d_in;
  j["n_out"] = n_out;
  j["leaky_alpha"] = leaky_alpha;
  j["layers"] = layers;
  return j;
}

MixingSpec sample_mixing(int d, int n, int square_layers, PrngStream& stream) {
  if (n < d) throw std::invalid_argument("sample_mixing: observed dim must be >= latent dim");
  MixingSpec mix;
  mix.d_in = d;
  mix.n_out = n;
  for (int l = 0; l < square_layers; ++l) {
    std::vector<double> w;
    do {
      w = orthonormal_rows(d, d, stream);
    } while (matrix_condition(w, d, d) > 1e3);
    mix.layers.push_back(std::move(w));
    mix.layer_shapes.push_back({d, d});
  }
  if (n != d || square_layers == 0) {
    std::vector<double> w;
    do {
      w = orthonormal_rows(d, n, stream);
    } while (matrix_condition(w, d, n) > 1e3);
    mix.layers.push_back(std::move(w));
    mix.layer_shapes.push_back({d, n});
  }
  return mix;
}

MixingSpec identity_mixing(int d) {
  MixingSpec mix;
  mix.d_in = d;
  mix.n_out = d;
  std::vector<double> eye(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) eye[static_cast<std::size_t>(i) * d + i] = 1.0;
  mix.layers.push_back(std::move(eye));
  mix.layer_shapes.push_back({d, d});
  return mix;
}

nlohmann::json EnvironmentSpec::to_json() const {
  return nlohmann::json{{"env_count", env_count},
                        {"noise_scale", noise_scale},
                        {"weight_scale", weight_scale}};
}

EnvironmentSpec single_environment(int d) {
  EnvironmentSpec e;
  e.env_count = 1;
  e.noise_scale.assign(1, std::vector<double>(static_cast<std::size_t>(d), 1.0));
  e.weight_scale.assign(1, std::vector<double>(static_cast<std::size_t>(d), 1.0));
  return e;
}

namespace {

// Largest pairwise |correlation| between per-node log noise-scale profiles
// across environments. Near-collinear profiles leave rotations of the two
// nodes unidentifiable, so the sampler rejects them.
double max_profile_correlation(const std::vector<std::vector<double>>& noise_scale, int d) {
  const int envs = static_cast<int>(noise_scale.size());
  double worst = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) {
      double ma = 0, mb = 0;
      for (int e = 0; e < envs; ++e) {
        ma += std::log(noise_scale[static_cast<std::size_t>(e)][static_cast<std::size_t>(a)]);
        mb += std::log(noise_scale[static_cast<std::size_t>(e)][static_cast<std::size_t>(b)]);
      }
      ma /= envs;
      mb /= envs;
      double sab = 0, saa = 0, sbb = 0;
      for (int e = 0; e < envs; ++e) {
        const double da =
            std::log(noise_scale[static_cast<std::size_t>(e)][static_cast<std::size_t>(a)]) - ma;
        const double db =
            std::log(noise_scale[static_cast<std::size_t>(e)][static_cast<std::size_t>(b)]) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
      }
      if (saa <= 0 || sbb <= 0) return 1.0;
      worst = std::max(worst, std::abs(sab / std::sqrt(saa * sbb)));
    }
  return worst;
}

}  // namespace

EnvironmentSpec sample_environments(int d, int env_count, double noise_lo, double noise_hi,
                                    double weight_lo, double weight_hi, PrngStream& stream) {
  if (env_count < 1) throw std::invalid_argument("sample_environments: env_count must be >= 1");
  if (!(noise_lo > 0) || !(weight_lo > 0))
    throw std::invalid_argument("sample_environments: modulations must be strictly positive");
  auto draw_scale = [&stream](double lo, double hi) {
    if (hi <= lo) return lo;
    return lo * std::exp(draw_uniform01(stream) * std::log(hi / lo));
  };

  const bool check_variability = env_count >= 3 && d >= 2 && noise_hi > noise_lo;
  EnvironmentSpec best;
  double best_corr = 2.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    EnvironmentSpec e;
    e.env_count = env_count;
    for (int k = 0; k < env_count; ++k) {
      std::vector<double> ns(static_cast<std::size_t>(d)), ws(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) {
        ns[static_cast<std::size_t>(j)] = draw_scale(noise_lo, noise_hi);
        ws[static_cast<std::size_t>(j)] = draw_scale(weight_lo, weight_hi);
      }
      e.noise_scale.push_back(std::move(ns));
      e.weight_scale.push_back(std::move(ws));
    }
    if (!check_variability) return e;
    const double corr = max_profile_correlation(e.noise_scale, d);
    if (corr <= 0.5) return e;
    if (corr < best_corr) {
      best_corr = corr;
      best = std::move(e);
    }
  }
  return best;  // most spread draw seen; variability was repeatedly marginal
}

nlohmann::json StaticScm::to_json() const {
  return nlohmann::json{{"dag", dag.to_json()}, {"mechanisms", mechanisms.to_json()}};
}

nlohmann::json TemporalScmSpec::to_json() const {
  nlohmann::json j;
  j["base"] = base.to_json();
  j["instantaneous_enabled"] = instantaneous_enabled;
  nlohmann::json lags = nlohmann::json::array();
  for (const auto& adj : delayed) {
    std::vector<std::vector<int>> e;
    for (const auto& row : adj) e.emplace_back(row.begin(), row.end());
    lags.push_back(e);
  }
  j["delayed"] = lags;
  nlohmann::json ns = nlohmann::json::array();
  for (const auto& m : nodes)
    ns.push_back({{"kind", m.kind == MechanismKind::kLinear ? "linear" : "mlp"},
                  {"noise", m.noise == NoiseKind::kGaussian ? "gaussian" : "laplace"},
                  {"noise_param", m.noise_param},
                  {"linear_w", m.linear_w}});
  j["nodes"] = ns;
  return j;
}

nlohmann::json InterventionSpec::to_json() const {
  return nlohmann::json{{"targets", targets},
                        {"kind", kind == Kind::kDoValue ? "do_value" : "noise_shift"},
                        {"value", value}};
}

TemporalScmSpec sample_temporal_scm(int d, int lag, double p_edge_delayed,
                                    double p_edge_instantaneous, bool instantaneous_enabled,
                                    MechanismKind kind, NoiseKind noise, double noise_param,
                                    PrngStream& stream) {
  if (lag < 1) throw std::invalid_argument("sample_temporal_scm: lag must be >= 1");
  TemporalScmSpec t;
  t.instantaneous_enabled = instantaneous_enabled;
  t.base = instantaneous_enabled ? sample_dag(d, p_edge_instantaneous, stream)
                                 : sample_dag(d, 0.0, stream);
  for (int l = 0; l < lag; ++l) {
    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(d),
                                       std::vector<bool>(static_cast<std::size_t>(d), false));
    for (int p = 0; p < d; ++p)
      for (int c = 0; c < d; ++c)
        if (draw_uniform01(stream) < p_edge_delayed) adj[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] = true;
    t.delayed.push_back(std::move(adj));
  }
  t.nodes.resize(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    NodeMechanism& m = t.nodes[static_cast<std::size_t>(j)];
    m.kind = kind;
    m.noise = noise;
    m.noise_param = noise_param;
    std::size_t inputs = 0;
    for (int l = 0; l < lag; ++l)
      for (int p = 0; p < d; ++p)
        if (t.delayed[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)][static_cast<std::size_t>(j)]) ++inputs;
    inputs += t.base.parents_of(j).size();
    if (inputs == 0) continue;
    if (kind == MechanismKind::kLinear) {
      fill_linear_weights(m, inputs, stream);
      // Keep |sum of weights| modest so linear dynamics stay stable.
      double total = 0.0;
      for (double w : m.linear_w) total += std::abs(w);
      if (total > 0.9)
        for (double& w : m.linear_w) w *= 0.9 / total;
    } else {
      fill_mlp_weights(m, inputs, stream);
    }
  }
  return t;
}

namespace {

std::vector<int> topo_sequence(const DagSpec& dag) {
  // `order` is the generating permutation; verify it is consistent.
  std::vector<int> pos(static_cast<std::size_t>(dag.d));
  for (int i = 0; i < dag.d; ++i) pos[static_cast<std::size_t>(dag.order[static_cast<std::size_t>(i)])] = i;
  for (int p = 0; p < dag.d; ++p)
    for (int c = 0; c < dag.d; ++c)
      if (dag.edges[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] &&
          pos[static_cast<std::size_t>(p)] >= pos[static_cast<std::size_t>(c)])
        throw std::invalid_argument("dag order is not topological for its edges");
  return dag.order;
}

}  // namespace

Dataset generate_static(const StaticScm& scm, const MixingSpec& mixing,
                        const EnvironmentSpec& envs, int n_per_env, PrngStream& stream) {
  const int d = scm.dag.d;
  if (mixing.d_in != d)
    throw std::invalid_argument("generate_static: mixing input dim " +
                                std::to_string(mixing.d_in) + " != latent dim " +
                                std::to_string(d));
  if (static_cast<int>(scm.mechanisms.nodes.size()) != d)
    throw std::invalid_argument("generate_static: mechanism count mismatch");
  const std::vector<int> order = topo_sequence(scm.dag);

  Dataset ds;
  ds.d = d;
  ds.n = mixing.n_out;
  ds.time_steps = 1;
  ds.episodes = envs.env_count * n_per_env;
  ds.z_true.resize(static_cast<std::size_t>(ds.episodes) * d);
  ds.x_obs.resize(static_cast<std::size_t>(ds.episodes) * ds.n);
  ds.u.resize(static_cast<std::size_t>(ds.episodes));
  ds.seed = stream.seed;

  std::vector<double> z(static_cast<std::size_t>(d));
  std::size_t row = 0;
  for (int e = 0; e < envs.env_count; ++e) {
    for (int s = 0; s < n_per_env; ++s, ++row) {
      for (int j : order) {
        const NodeMechanism& m = scm.mechanisms.nodes[static_cast<std::size_t>(j)];
        std::vector<double> pv;
        for (int p : scm.dag.parents_of(j)) pv.push_back(z[static_cast<std::size_t>(p)]);
        const double wscale = envs.weight_scale[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)];
        const double nscale = envs.noise_scale[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)];
        z[static_cast<std::size_t>(j)] = wscale * mechanism_value(m, pv) + draw_noise(stream, m, nscale);
      }
      std::copy(z.begin(), z.end(), ds.z_true.begin() + static_cast<std::ptrdiff_t>(row * d));
      const std::vector<double> x = mixing.apply(z);
      std::copy(x.begin(), x.end(), ds.x_obs.begin() + static_cast<std::ptrdiff_t>(row * ds.n));
      ds.u[row] = e;
    }
  }
  ds.spec_hash = spec_hash_of(
      nlohmann::json{{"scm", scm.to_json()}, {"mixing", mixing.to_json()}, {"envs", envs.to_json()}},
      stream.seed);
  return ds;
}

Dataset generate_temporal(const TemporalScmSpec& tscm, int episodes, int time_steps,
                          PrngStream& stream) {
  const int d = tscm.base.d;
  const int lag = tscm.lag();
  if (time_steps <= lag)
    throw std::invalid_argument("generate_temporal: need time_steps > lag");
  if (!tscm.instantaneous_enabled)
    for (int p = 0; p < d; ++p)
      for (int c = 0; c < d; ++c)
        if (tscm.base.edges[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)])
          throw std::invalid_argument(
              "generate_temporal: instantaneous edges present but instantaneous_enabled is false");
  const std::vector<int> order = topo_sequence(tscm.base);

  Dataset ds;
  ds.d = d;
  ds.n = d;
  ds.episodes = episodes;
  ds.time_steps = time_steps;
  ds.z_true.resize(static_cast<std::size_t>(episodes) * time_steps * d);
  ds.u.assign(static_cast<std::size_t>(episodes), 0);
  ds.seed = stream.seed;

  auto zat = [&ds, d](int e, int t, int j) -> double& {
    return ds.z_true[(static_cast<std::size_t>(e) * ds.time_steps + t) * d + j];
  };

  for (int e = 0; e < episodes; ++e) {
    for (int t = 0; t < time_steps; ++t) {
      if (t < lag) {
        for (int j = 0; j < d; ++j) zat(e, t, j) = draw_standard_normal(stream);
        continue;
      }
      for (int j : order) {
        const NodeMechanism& m = tscm.nodes[static_cast<std::size_t>(j)];
        std::vector<double> inputs;
        for (int l = 0; l < lag; ++l)
          for (int p = 0; p < d; ++p)
            if (tscm.delayed[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)][static_cast<std::size_t>(j)])
              inputs.push_back(zat(e, t - 1 - l, p));
        for (int p : tscm.base.parents_of(j)) inputs.push_back(zat(e, t, p));
        zat(e, t, j) = mechanism_value(m, inputs) + draw_noise(stream, m, 1.0);
      }
    }
  }
  ds.x_obs = ds.z_true;
  ds.spec_hash = spec_hash_of(tscm.to_json(), stream.seed);
  return ds;
}

Dataset generate_temporal(const TemporalScmSpec& tscm, const MixingSpec& mixing, int episodes,
                          int time_steps, PrngStream& stream) {
  if (mixing.d_in != tscm.base.d)
    throw std::invalid_argument("generate_temporal: mixing input dim does not match latent dim");
  Dataset ds = generate_temporal(tscm, episodes, time_steps, stream);
  ds.n = mixing.n_out;
  ds.x_obs.resize(static_cast<std::size_t>(episodes) * time_steps * ds.n);
  std::vector<double> z(static_cast<std::size_t>(ds.d));
  for (int e = 0; e < episodes; ++e)
    for (int t = 0; t < time_steps; ++t) {
      for (int j = 0; j < ds.d; ++j) z[static_cast<std::size_t>(j)] = ds.z(e, t, j);
      const std::vector<double> x = mixing.apply(z);
      std::copy(x.begin(), x.end(),
                ds.x_obs.begin() +
                    static_cast<std::ptrdiff_t>(
                        (static_cast<std::size_t>(e) * time_steps + t) * ds.n));
    }
  ds.spec_hash = spec_hash_of(
      nlohmann::json{{"tscm", tscm.to_json()}, {"mixing", mixing.to_json()}}, stream.seed);
  return ds;
}

PairedViews generate_paired(const StaticScm& scm, const MixingSpec& mixing,
                            const InterventionSpec& intervention, int samples,
                            PrngStream& stream) {
  const int d = scm.dag.d;
  for (int t : intervention.targets)
    if (t < 0 || t >= d)
      throw std::out_of_range("generate_paired: intervention target out of range");
  const std::vector<int> order = topo_sequence(scm.dag);
  std::vector<bool> is_target(static_cast<std::size_t>(d), false);
  for (int t : intervention.targets) is_target[static_cast<std::size_t>(t)] = true;

  PairedViews out;
  for (Dataset* ds : {&out.v1, &out.v2}) {
    ds->d = d;
    ds->n = mixing.n_out;
    ds->episodes = samples;
    ds->time_steps = 1;
    ds->z_true.resize(static_cast<std::size_t>(samples) * d);
    ds->x_obs.resize(static_cast<std::size_t>(samples) * mixing.n_out);
    ds->u.assign(static_cast<std::size_t>(samples), 0);
    ds->seed = stream.seed;
  }

  std::vector<double> eps(static_cast<std::size_t>(d));
  std::vector<double> z1(static_cast<std::size_t>(d)), z2(static_cast<std::size_t>(d));
  for (int s = 0; s < samples; ++s) {
    for (int j = 0; j < d; ++j)
      eps[static_cast<std::size_t>(j)] =
          draw_noise(stream, scm.mechanisms.nodes[static_cast<std::size_t>(j)], 1.0);
    for (int j : order) {
      const NodeMechanism& m = scm.mechanisms.nodes[static_cast<std::size_t>(j)];
      std::vector<double> pv1, pv2;
      for (int p : scm.dag.parents_of(j)) {
        pv1.push_back(z1[static_cast<std::size_t>(p)]);
        pv2.push_back(z2[static_cast<std::size_t>(p)]);
      }
      z1[static_cast<std::size_t>(j)] = mechanism_value(m, pv1) + eps[static_cast<std::size_t>(j)];
      if (is_target[static_cast<std::size_t>(j)]) {
        if (intervention.kind == InterventionSpec::Kind::kDoValue)
          z2[static_cast<std::size_t>(j)] = intervention.value;
        else
          z2[static_cast<std::size_t>(j)] =
              mechanism_value(m, pv2) + eps[static_cast<std::size_t>(j)] + intervention.value;
      } else {
        z2[static_cast<std::size_t>(j)] = mechanism_value(m, pv2) + eps[static_cast<std::size_t>(j)];
      }
    }
    std::copy(z1.begin(), z1.end(), out.v1.z_true.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * d));
    std::copy(z2.begin(), z2.end(), out.v2.z_true.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * d));
    const std::vector<double> x1 = mixing.apply(z1);
    const std::vector<double> x2 = mixing.apply(z2);
    std::copy(x1.begin(), x1.end(),
              out.v1.x_obs.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * mixing.n_out));
    std::copy(x2.begin(), x2.end(),
              out.v2.x_obs.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * mixing.n_out));
  }

  out.invariant = invariant_set(scm.dag, intervention.targets);
  const std::uint64_t h = spec_hash_of(
      nlohmann::json{{"scm", scm.to_json()},
                     {"mixing", mixing.to_json()},
                     {"intervention", intervention.to_json()}},
      stream.seed);
  out.v1.spec_hash = h;
  out.v2.spec_hash = h;
  return out;
}

Tensor Dataset::z_matrix() const {
  return Tensor({episodes * time_steps, d}, z_true);
}

Tensor Dataset::x_matrix() const {
  return Tensor({episodes * time_steps, n}, x_obs);
}

void save_dataset(const std::string& path, const Dataset& ds) {
  Container c;
  c.kind = "dataset";
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(ds.spec_hash));
  c.meta = nlohmann::json{{"spec_hash", hash_hex},
                          {"seed", ds.seed},
                          {"dims", {{"d", ds.d}, {"n", ds.n}}},
                          {"counts", {{"episodes", ds.episodes}, {"time", ds.time_steps}}}};
  c.arrays.push_back({"z_true", {ds.episodes, ds.time_steps, ds.d}, ds.z_true});
  c.arrays.push_back({"x_obs", {ds.episodes, ds.time_steps, ds.n}, ds.x_obs});
  std::vector<double> u(ds.u.begin(), ds.u.end());
  c.arrays.push_back({"u", {ds.episodes}, std::move(u)});
  save_container(path, c);
}

Dataset load_dataset(const std::string& path) {
  const Container c = load_container(path);
  if (c.kind != "dataset")
    throw ContainerFormatError(path + ": container kind '" + c.kind + "' is not a dataset");
  Dataset ds;
  ds.d = c.meta.at("dims").at("d").get<int>();
  ds.n = c.meta.at("dims").at("n").get<int>();
  ds.episodes = c.meta.at("counts").at("episodes").get<int>();
  ds.time_steps = c.meta.at("counts").at("time").get<int>();
  ds.seed = c.meta.at("seed").get<std::uint64_t>();
  ds.spec_hash = std::stoull(c.meta.at("spec_hash").get<std::string>(), nullptr, 16);
  for (const auto& a : c.arrays) {
    if (a.name == "z_true") ds.z_true = a.data;
    else if (a.name == "x_obs") ds.x_obs = a.data;
    else if (a.name == "u") ds.u.assign(a.data.begin(), a.data.end());
  }
  if (ds.z_true.size() != static_cast<std::size_t>(ds.episodes) * ds.time_steps * ds.d ||
      ds.x_obs.size() != static_cast<std::size_t>(ds.episodes) * ds.time_steps * ds.n ||
      ds.u.size() != static_cast<std::size_t>(ds.episodes))
    throw ContainerCorruptError(path + ": dataset arrays disagree with declared counts");
  return ds;
}

std::uint64_t spec_hash_of(const nlohmann::json& spec_json, std::uint64_t seed) {
  const std::string dump = spec_json.dump();
  std::uint64_t h = fnv1a(dump.data(), dump.size());
  return fnv1a(&seed, sizeof(seed), h);
}

}  // namespace crl
