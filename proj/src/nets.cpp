#include "crl/nets.hpp"

#include <cmath>

namespace crl {

Tensor ones_const(const Shape& shape) { return Tensor::full(shape, 1.0); }

Tensor row_sum(const Tensor& x) {
  if (x.shape().size() != 2) throw std::invalid_argument("row_sum needs a 2-D tensor");
  return matmul(x, ones_const({x.shape()[1], 1}));
}

Tensor sq_norm_rows(const Tensor& x) { return row_sum(square(x)); }

Tensor sqrt_op(const Tensor& x) { return exp_op(scale(log_op(x), 0.5)); }

Tensor sigmoid(const Tensor& x) {
  return div(Tensor::full(x.shape(), 1.0), add_scalar(exp_op(neg(x)), 1.0));
}

Tensor normalize_rows(const Tensor& x) {
  Tensor sq = sq_norm_rows(x);
  for (std::int64_t i = 0; i < sq.size(); ++i)
    if (sq[i] < 1e-24)
      throw std::domain_error("normalize_rows: zero-norm row " + std::to_string(i));
  Tensor norms = sqrt_op(sq);                     // [B,1]
  return div(x, tile_cols(norms, x.shape()[1]));  // elementwise
}

Tensor one_hot(const std::vector<int>& idx, int count) {
  std::vector<double> v(idx.size() * static_cast<std::size_t>(count), 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= count)
      throw std::out_of_range("one_hot: index " + std::to_string(idx[r]) + " out of range " +
                              std::to_string(count));
    v[r * static_cast<std::size_t>(count) + static_cast<std::size_t>(idx[r])] = 1.0;
  }
  return Tensor({static_cast<int>(idx.size()), count}, std::move(v));
}

Tensor tile_cols(const Tensor& column, int n) {
  if (column.shape().size() != 2 || column.shape()[1] != 1)
    throw std::invalid_argument("tile_cols needs a [B,1] tensor, got " +
                                shape_str(column.shape()));
  return matmul(column, ones_const({1, n}));
}

int ParamStore::add(const std::string& name, const Shape& shape, std::vector<double> init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (numel(shape) != static_cast<std::int64_t>(init.size()))
    throw std::invalid_argument("parameter " + name + " init length mismatch");
  const int id = static_cast<int>(entries_.size());
  entries_.push_back(Entry{name, shape, std::move(init)});
  index_.emplace(name, id);
  return id;
}

std::vector<Tensor> ParamStore::bind(Tape& tape) const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(tape.var(Tensor(e.shape, e.value)));
  return out;
}

std::vector<Tensor> ParamStore::bind_const() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(Tensor(e.shape, e.value));
  return out;
}

std::uint64_t ParamStore::values_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : entries_) {
    h = fnv1a(e.name.data(), e.name.size(), h);
    h = fnv1a(e.value.data(), e.value.size() * sizeof(double), h);
  }
  return h;
}

Container ParamStore::to_container() const {
  Container c;
  c.kind = "checkpoint";
  for (const auto& e : entries_) c.arrays.push_back({e.name, e.shape, e.value});
  return c;
}

void ParamStore::load(const Container& c) {
  if (c.kind != "checkpoint")
    throw ContainerFormatError("container kind '" + c.kind + "' is not a checkpoint");
  if (c.arrays.size() != entries_.size())
    throw std::invalid_argument("checkpoint has " + std::to_string(c.arrays.size()) +
                                " parameters, model has " + std::to_string(entries_.size()));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = c.arrays[i];
    auto& e = entries_[i];
    if (a.name != e.name || a.shape != e.shape)
      throw std::invalid_argument("checkpoint parameter '" + a.name +
                                  "' does not match model parameter '" + e.name + "'");
    e.value = a.data;
  }
}

Tensor apply_act(const Tensor& x, Act act) {
  switch (act) {
    case Act::kIdentity: return x;
    case Act::kRelu: return relu(x);
    case Act::kLeakyRelu: return leaky_relu(x);
    case Act::kTanh: return tanh_op(x);
  }
  throw std::invalid_argument("unknown activation");
}

Mlp Mlp::create(ParamStore& store, const std::string& prefix, const MlpSpec& spec,
                PrngStream& init) {
  if (spec.widths.size() < 2) throw std::invalid_argument("Mlp needs at least one layer");
  for (int w : spec.widths)
    if (w < 1) throw std::invalid_argument("Mlp widths must be positive");
  Mlp mlp;
  mlp.hidden_act = spec.hidden_act;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const int fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
    const bool last = l + 2 == spec.widths.size();
    std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out, 0.0);
    if (!(last && spec.zero_init_last)) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : w) v = sd * draw_standard_normal(init);
    }
    mlp.w_ids.push_back(
        store.add(prefix + ".w" + std::to_string(l), {fan_in, fan_out}, std::move(w)));
    mlp.b_ids.push_back(store.add(prefix + ".b" + std::to_string(l), {fan_out},
                                  std::vector<double>(static_cast<std::size_t>(fan_out), 0.0)));
  }
  return mlp;
}

Tensor Mlp::forward(const Bound& p, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < w_ids.size(); ++l) {
    h = add(matmul(h, p[static_cast<std::size_t>(w_ids[l])]),
            p[static_cast<std::size_t>(b_ids[l])]);
    if (l + 1 < w_ids.size()) h = apply_act(h, hidden_act);
  }
  return h;
}

int Mlp::in_dim(const ParamStore& store) const { return store.shape(w_ids.front())[0]; }
int Mlp::out_dim(const ParamStore& store) const { return store.shape(w_ids.back())[1]; }

GaussianEncoder GaussianEncoder::create(ParamStore& store, const std::string& prefix, int in_dim,
                                        int hidden, int depth, int latent_dim, PrngStream& init) {
  GaussianEncoder enc;
  enc.latent_dim = latent_dim;
  MlpSpec trunk_spec;
  trunk_spec.widths.push_back(in_dim);
  for (int i = 0; i < depth; ++i) trunk_spec.widths.push_back(hidden);
  enc.trunk = Mlp::create(store, prefix + ".trunk", trunk_spec, init);

  const double sd = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto head_w = [&](const std::string& nm) {
    std::vector<double> w(static_cast<std::size_t>(hidden) * latent_dim);
    for (auto& v : w) v = sd * draw_standard_normal(init);
    return store.add(prefix + "." + nm + ".w", {hidden, latent_dim}, std::move(w));
  };
  enc.mu_w = head_w("mu");
  enc.mu_b = store.add(prefix + ".mu.b", {latent_dim},
                       std::vector<double>(static_cast<std::size_t>(latent_dim), 0.0));
  enc.lv_w = head_w("lv");
  enc.lv_b = store.add(prefix + ".lv.b", {latent_dim},
                       std::vector<double>(static_cast<std::size_t>(latent_dim), 0.0));
  return enc;
}

std::pair<Tensor, Tensor> GaussianEncoder::forward(const Bound& p, const Tensor& x) const {
  Tensor h = apply_act(trunk.forward(p, x), trunk.hidden_act);
  Tensor mu = add(matmul(h, p[static_cast<std::size_t>(mu_w)]), p[static_cast<std::size_t>(mu_b)]);
  Tensor lv = add(matmul(h, p[static_cast<std::size_t>(lv_w)]), p[static_cast<std::size_t>(lv_b)]);
  return {mu, clamp(lv, -10.0, 10.0)};
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  if (mu.shape() != logvar.shape() || mu.shape() != noise.shape())
    throw std::invalid_argument("reparameterize: shape mismatch " + shape_str(mu.shape()) +
                                " / " + shape_str(logvar.shape()) + " / " +
                                shape_str(noise.shape()));
  return add(mu, mul(noise, exp_op(scale(logvar, 0.5))));
}

std::vector<Tensor> history_window(const std::vector<Tensor>& z_seq, int lag) {
  if (lag < 1) throw std::invalid_argument("history_window: lag must be >= 1");
  if (z_seq.empty()) return {};
  const int batch = z_seq[0].shape()[0];
  const int dim = z_seq[0].shape()[1];
  std::vector<Tensor> out;
  out.reserve(z_seq.size());
  for (int t = 0; t < static_cast<int>(z_seq.size()); ++t) {
    std::vector<Tensor> parts;
    for (int k = t - lag; k <= t; ++k)
      parts.push_back(k < 0 ? Tensor::zeros({batch, dim}) : z_seq[static_cast<std::size_t>(k)]);
    out.push_back(concat(parts, 1));
  }
  return out;
}

TemporalFlow TemporalFlow::create(ParamStore& store, const std::string& prefix, int dim, int lag,
                                  int hidden, int env_count, bool with_gates, PrngStream& init) {
  TemporalFlow flow;
  flow.dim = dim;
  flow.lag = lag;
  flow.env_count = env_count;
  flow.u_dim = env_count > 0 ? 8 : 0;
  const int in_dim = lag * dim + flow.u_dim;
  for (int i = 0; i < dim; ++i) {
    MlpSpec spec;
    spec.widths = {in_dim, hidden, 2};
    spec.zero_init_last = true;  // identity transform at initialization
    flow.nets.push_back(Mlp::create(store, prefix + ".dim" + std::to_string(i), spec, init));
  }
  if (env_count > 0) {
    std::vector<double> emb(static_cast<std::size_t>(env_count) * flow.u_dim);
    for (auto& v : emb) v = 0.1 * draw_standard_normal(init);
    flow.u_embed = store.add(prefix + ".u_embed", {env_count, flow.u_dim}, std::move(emb));
  }
  if (with_gates) {
    flow.gates = store.add(prefix + ".gates", {lag * dim, dim},
                           std::vector<double>(static_cast<std::size_t>(lag * dim) * dim, 1.0));
  }
  return flow;
}

namespace {

Tensor flow_context(const std::vector<Tensor>& z_seq, int t, int lag) {
  std::vector<Tensor> parts;
  for (int k = t - lag; k < t; ++k) parts.push_back(z_seq[static_cast<std::size_t>(k)]);
  return concat(parts, 1);
}

}  // namespace

TemporalFlow::Result TemporalFlow::forward(const Bound& p, const std::vector<Tensor>& z_seq,
                                           const std::vector<int>& u) const {
  const int total = static_cast<int>(z_seq.size());
  if (total <= lag)
    throw std::invalid_argument("temporal flow needs a sequence longer than the lag");
  const int batch = z_seq[0].shape()[0];

  Tensor u_emb;
  if (env_count > 0) {
    if (static_cast<int>(u.size()) != batch)
      throw std::invalid_argument("temporal flow: env index count does not match batch");
    u_emb = matmul(one_hot(u, env_count), p[static_cast<std::size_t>(u_embed)]);
  }

  Result res;
  Tensor logdet = Tensor::zeros({batch, 1});
  for (int t = lag; t < total; ++t) {
    Tensor context = flow_context(z_seq, t, lag);
    std::vector<Tensor> r_cols, a_cols;
    for (int i = 0; i < dim; ++i) {
      Tensor inp = context;
      if (gates >= 0) {
        Tensor col = reshape(slice(p[static_cast<std::size_t>(gates)], 1, i, 1), {lag * dim});
        inp = mul(inp, col);
      }
      if (env_count > 0) inp = concat({inp, u_emb}, 1);
      Tensor ma = nets[static_cast<std::size_t>(i)].forward(p, inp);  // [B,2]
      Tensor m = slice(ma, 1, 0, 1);
      Tensor a = slice(ma, 1, 1, 1);
      Tensor zi = slice(z_seq[static_cast<std::size_t>(t)], 1, i, 1);
      r_cols.push_back(mul(sub(zi, m), exp_op(neg(a))));
      a_cols.push_back(a);
    }
    res.residuals.push_back(concat(r_cols, 1));
    logdet = sub(logdet, row_sum(concat(a_cols, 1)));
  }
  res.logdet = logdet;
  return res;
}

std::vector<Tensor> TemporalFlow::inverse(const Bound& p, const std::vector<Tensor>& residuals,
                                          const std::vector<Tensor>& z_init,
                                          const std::vector<int>& u) const {
  if (static_cast<int>(z_init.size()) != lag)
    throw std::invalid_argument("temporal flow inverse needs exactly lag initial states");
  Tensor u_emb;
  if (env_count > 0) u_emb = matmul(one_hot(u, env_count), p[static_cast<std::size_t>(u_embed)]);

  std::vector<Tensor> z_seq = z_init;
  for (const Tensor& r : residuals) {
    Tensor context = flow_context(z_seq, static_cast<int>(z_seq.size()), lag);
    std::vector<Tensor> z_cols;
    for (int i = 0; i < dim; ++i) {
      Tensor inp = context;
      if (gates >= 0) {
        Tensor col = reshape(slice(p[static_cast<std::size_t>(gates)], 1, i, 1), {lag * dim});
        inp = mul(inp, col);
      }
      if (env_count > 0) inp = concat({inp, u_emb}, 1);
      Tensor ma = nets[static_cast<std::size_t>(i)].forward(p, inp);
      Tensor m = slice(ma, 1, 0, 1);
      Tensor a = slice(ma, 1, 1, 1);
      Tensor ri = slice(r, 1, i, 1);
      z_cols.push_back(add(mul(ri, exp_op(a)), m));
    }
    z_seq.push_back(concat(z_cols, 1));
  }
  return {z_seq.begin() + lag, z_seq.end()};
}

DomainFlow DomainFlow::create(ParamStore& store, const std::string& prefix, int style_dim,
                              int env_count, int u_dim, int hidden, PrngStream& init) {
  DomainFlow flow;
  flow.style_dim = style_dim;
  flow.env_count = env_count;
  flow.u_dim = u_dim;
  std::vector<double> emb(static_cast<std::size_t>(env_count) * u_dim);
  for (auto& v : emb) v = 0.1 * draw_standard_normal(init);
  flow.u_embed = store.add(prefix + ".u_embed", {env_count, u_dim}, std::move(emb));
  MlpSpec spec;
  spec.widths = {u_dim, hidden, 2 * style_dim};
  spec.zero_init_last = true;
  flow.head = Mlp::create(store, prefix + ".head", spec, init);
  return flow;
}

DomainFlow::Result DomainFlow::forward(const Bound& p, const Tensor& z_style,
                                       const std::vector<int>& u) const {
  if (z_style.shape().size() != 2 || z_style.shape()[1] != style_dim)
    throw std::invalid_argument("domain flow: bad style shape " + shape_str(z_style.shape()));
  for (int idx : u)
    if (idx < 0 || idx >= env_count)
      throw std::out_of_range("domain flow: unknown view index " + std::to_string(idx));
  Tensor emb = matmul(one_hot(u, env_count), p[static_cast<std::size_t>(u_embed)]);
  Tensor params = head.forward(p, emb);  // [B, 2s]
  Tensor raw_scale = slice(params, 1, 0, style_dim);
  Tensor shift = slice(params, 1, style_dim, style_dim);
  Result res;
  res.z_styled = add(mul(z_style, exp_op(raw_scale)), shift);
  res.logdet = row_sum(raw_scale);
  return res;
}

Tensor DomainFlow::inverse(const Bound& p, const Tensor& z_styled,
                           const std::vector<int>& u) const {
  Tensor emb = matmul(one_hot(u, env_count), p[static_cast<std::size_t>(u_embed)]);
  Tensor params = head.forward(p, emb);
  Tensor raw_scale = slice(params, 1, 0, style_dim);
  Tensor shift = slice(params, 1, style_dim, style_dim);
  return mul(sub(z_styled, shift), exp_op(neg(raw_scale)));
}

AdditiveDecoder AdditiveDecoder::create(ParamStore& store, const std::string& prefix,
                                        const std::vector<std::vector<int>>& blocks, int dim,
                                        int out, int hidden, PrngStream& init) {
  std::vector<bool> seen(static_cast<std::size_t>(dim), false);
  for (const auto& block : blocks) {
    if (block.empty()) throw std::invalid_argument("additive decoder: empty block");
    for (int c : block) {
      if (c < 0 || c >= dim)
        throw std::invalid_argument("additive decoder: coordinate out of range");
      if (seen[static_cast<std::size_t>(c)])
        throw std::invalid_argument("additive decoder: overlapping blocks");
      seen[static_cast<std::size_t>(c)] = true;
    }
  }
  for (bool s : seen)
    if (!s) throw std::invalid_argument("additive decoder: blocks must cover every coordinate");

  AdditiveDecoder dec;
  dec.blocks = blocks;
  dec.dim = dim;
  dec.out = out;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    MlpSpec spec;
    spec.widths = {static_cast<int>(blocks[k].size()), hidden, out};
    dec.branches.push_back(Mlp::create(store, prefix + ".branch" + std::to_string(k), spec, init));
  }
  MlpSpec gate_spec;
  gate_spec.widths = {dim, hidden, static_cast<int>(blocks.size())};
  dec.gate = Mlp::create(store, prefix + ".gate", gate_spec, init);
  return dec;
}

namespace {

Tensor select_columns(const Tensor& z, const std::vector<int>& cols, int dim) {
  std::vector<double> sel(static_cast<std::size_t>(dim) * cols.size(), 0.0);
  for (std::size_t j = 0; j < cols.size(); ++j)
    sel[static_cast<std::size_t>(cols[j]) * cols.size() + j] = 1.0;
  return matmul(z, Tensor({dim, static_cast<int>(cols.size())}, std::move(sel)));
}

}  // namespace

Tensor AdditiveDecoder::gate_weights(const Bound& p, const Tensor& z) const {
  return softmax(gate.forward(p, stop_gradient(z)), 1);
}

Tensor AdditiveDecoder::branch_output(const Bound& p, int k, const Tensor& z) const {
  return branches[static_cast<std::size_t>(k)].forward(
      p, select_columns(z, blocks[static_cast<std::size_t>(k)], dim));
}

Tensor AdditiveDecoder::forward(const Bound& p, const Tensor& z) const {
  Tensor alpha = gate_weights(p, z);
  Tensor acc = Tensor::zeros({z.shape()[0], out});
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    Tensor ak = tile_cols(slice(alpha, 1, static_cast<int>(k), 1), out);
    acc = add(acc, mul(ak, branch_output(p, static_cast<int>(k), z)));
  }
  return acc;
}

FrozenExtractor FrozenExtractor::create(int in_dim, int out_dim, int hidden, int depth,
                                        std::uint64_t seed) {
  PrngStream s{seed, 0xf0f0f0f0ULL};
  FrozenExtractor fe;
  std::vector<int> widths{in_dim};
  for (int i = 0; i < depth; ++i) widths.push_back(hidden);
  widths.push_back(out_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fi = widths[l], fo = widths[l + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(fi));
    std::vector<double> w(static_cast<std::size_t>(fi) * fo);
    for (auto& v : w) v = sd * draw_standard_normal(s);
    fe.weights.emplace_back(Shape{fi, fo}, std::move(w));
    fe.biases.emplace_back(Shape{fo}, std::vector<double>(static_cast<std::size_t>(fo), 0.0));
  }
  return fe;
}

Tensor FrozenExtractor::forward(const Tensor& x) const {
  Tensor h = stop_gradient(x);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = add(matmul(h, weights[l]), biases[l]);
    if (l + 1 < weights.size()) h = apply_act(h, act);
  }
  return h;
}

std::uint64_t FrozenExtractor::output_hash(const Tensor& x) const {
  const Tensor y = forward(x);
  return fnv1a(y.data().data(), y.data().size() * sizeof(double));
}

Prototypes Prototypes::create(ParamStore& store, const std::string& prefix, int k, int dim,
                              double tau_p, PrngStream& init) {
  if (k < 1) throw std::invalid_argument("prototypes: K must be >= 1");
  if (!(tau_p > 0)) throw std::invalid_argument("prototypes: temperature must be positive");
  Prototypes pr;
  pr.k = k;
  pr.dim = dim;
  pr.tau_p = tau_p;
  std::vector<double> rows(static_cast<std::size_t>(k) * dim);
  for (auto& v : rows) v = draw_standard_normal(init);
  for (int r = 0; r < k; ++r) {
    double norm = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double v = rows[static_cast<std::size_t>(r) * dim + c];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < dim; ++c) rows[static_cast<std::size_t>(r) * dim + c] /= norm;
  }
  pr.table = store.add(prefix + ".rows", {k, dim}, std::move(rows));
  return pr;
}

Tensor prototype_logits(const Tensor& prototype_rows, const Tensor& z, double tau_p) {
  if (!(tau_p > 0)) throw std::invalid_argument("prototype_logits: temperature must be positive");
  Tensor zb = normalize_rows(z);
  Tensor cb = normalize_rows(prototype_rows);
  return scale(matmul(zb, transpose(cb)), 1.0 / tau_p);
}

void renormalize_prototype_rows(ParamStore& store, int table_id) {
  auto& v = store.values(table_id);
  const Shape& sh = store.shape(table_id);
  const int k = sh[0], dim = sh[1];
  for (int r = 0; r < k; ++r) {
    double norm = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double x = v[static_cast<std::size_t>(r) * dim + c];
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (int c = 0; c < dim; ++c) v[static_cast<std::size_t>(r) * dim + c] /= norm;
  }
}

}  // namespace crl
