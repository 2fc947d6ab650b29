#include "crl/constraints.hpp"

#include <algorithm>
#include <cmath>

namespace crl {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// sum over dims of log N(x; mu, exp(logvar)) per sample -> [B,1]
Tensor gaussian_logprob_rows(const Tensor& x, const Tensor& mu, const Tensor& logvar) {
  Tensor quad = div(square(sub(x, mu)), exp_op(logvar));
  Tensor per_dim = scale(add(add_scalar(logvar, kLog2Pi), quad), -0.5);
  return row_sum(per_dim);
}

Tensor std_gaussian_logprob_rows(const Tensor& x) {
  return row_sum(scale(add_scalar(square(x), kLog2Pi), -0.5));
}

}  // namespace

Tensor kl_standard_gaussian(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape())
    throw std::invalid_argument("kl_standard_gaussian: shape mismatch " + shape_str(mu.shape()) +
                                " vs " + shape_str(logvar.shape()));
  Tensor per_dim = sub(add(square(mu), exp_op(logvar)), add_scalar(logvar, 1.0));
  return scale(mean(row_sum(per_dim)), 0.5);
}

Tensor capacity_kl(const Tensor& kl_value, long step, double beta, double c_max, long t_stop) {
  if (t_stop <= 0) throw std::invalid_argument("capacity_kl: T_stop must be positive");
  if (step < 0) throw std::invalid_argument("capacity_kl: step must be >= 0");
  const double c = std::min(c_max, static_cast<double>(step) / static_cast<double>(t_stop) * c_max);
  return scale(abs_op(add_scalar(kl_value, -c)), beta);
}

Tensor l1_sparsity(const Tensor& z) { return mean(row_sum(abs_op(z))); }

Tensor bernoulli_kl(double rho, const Tensor& rho_hat) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("bernoulli_kl: rho must be inside (0, 1)");
  Tensor q = clamp(rho_hat, 1e-6, 1.0 - 1e-6);
  Tensor active = scale(sub(Tensor::full(q.shape(), std::log(rho)), log_op(q)), rho);
  Tensor inactive = scale(sub(Tensor::full(q.shape(), std::log(1.0 - rho)),
                              log_op(sub(Tensor::full(q.shape(), 1.0), q))),
                          1.0 - rho);
  return sum(add(active, inactive));
}

Tensor energy_quadratic(const Tensor& z) { return scale(mean(sq_norm_rows(z)), 0.5); }

Tensor energy_learned(const Tensor& z, const Tensor& chol) {
  return scale(mean(sq_norm_rows(matmul(z, chol))), 0.5);
}

VqResult vector_quantize(const Tensor& z_e, const Tensor& codebook, double beta_commit) {
  if (codebook.shape().size() != 2 || codebook.shape()[0] < 1)
    throw std::invalid_argument("vector_quantize: empty codebook");
  const int b = z_e.shape()[0], d = z_e.shape()[1];
  const int k = codebook.shape()[0];
  if (codebook.shape()[1] != d)
    throw std::invalid_argument("vector_quantize: codebook dim mismatch");

  VqResult res;
  res.indices.resize(static_cast<std::size_t>(b));
  const auto& zv = z_e.data();
  const auto& cv = codebook.data();
  for (int i = 0; i < b; ++i) {
    double best = 0.0;
    int arg = 0;
    for (int c = 0; c < k; ++c) {
      double dist = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = zv[static_cast<std::size_t>(i) * d + j] - cv[static_cast<std::size_t>(c) * d + j];
        dist += diff * diff;
      }
      if (c == 0 || dist < best) {
        best = dist;
        arg = c;
      }
    }
    res.indices[static_cast<std::size_t>(i)] = arg;
  }

  Tensor selected = matmul(one_hot(res.indices, k), codebook);  // [B,d]
  res.quantized = add(z_e, stop_gradient(sub(selected, z_e)));
  Tensor codebook_term = mean(sq_norm_rows(sub(stop_gradient(z_e), selected)));
  Tensor commit_term = mean(sq_norm_rows(sub(z_e, stop_gradient(selected))));
  res.loss = add(codebook_term, scale(commit_term, beta_commit));
  return res;
}

TemporalPriorTerms temporal_prior_kl(const std::vector<Tensor>& mu_seq,
                                     const std::vector<Tensor>& logvar_seq,
                                     const std::vector<Tensor>& z_seq, const TemporalFlow& flow,
                                     const Bound& p, const std::vector<int>& u) {
  const int total = static_cast<int>(z_seq.size());
  const int lag = flow.lag;
  if (total < lag + 2)
    throw std::invalid_argument("temporal_prior_kl: sequence shorter than lag + 2");
  if (mu_seq.size() != z_seq.size() || logvar_seq.size() != z_seq.size())
    throw std::invalid_argument("temporal_prior_kl: posterior/sample sequences disagree");

  TemporalPriorTerms terms;
  terms.init_kl = Tensor::scalar(0.0);
  for (int t = 0; t < lag; ++t)
    terms.init_kl = add(terms.init_kl, kl_standard_gaussian(mu_seq[static_cast<std::size_t>(t)],
                                                            logvar_seq[static_cast<std::size_t>(t)]));

  TemporalFlow::Result flowed = flow.forward(p, z_seq, u);
  const int batch = z_seq[0].shape()[0];
  Tensor log_q = Tensor::zeros({batch, 1});
  Tensor log_p = flowed.logdet;
  for (int t = lag; t < total; ++t) {
    log_q = add(log_q, gaussian_logprob_rows(z_seq[static_cast<std::size_t>(t)],
                                             mu_seq[static_cast<std::size_t>(t)],
                                             logvar_seq[static_cast<std::size_t>(t)]));
    log_p = add(log_p, std_gaussian_logprob_rows(flowed.residuals[static_cast<std::size_t>(t - lag)]));
  }
  terms.future_kl = scale(mean(sub(log_q, log_p)), 1.0 / static_cast<double>(total - lag));
  return terms;
}

Tensor cond_prior_static_kl(const Tensor& mu, const Tensor& logvar, const std::vector<int>& u,
                            const Tensor& prior_mu, const Tensor& prior_logvar) {
  const int envs = prior_mu.shape()[0];
  Tensor sel = one_hot(u, envs);  // throws on unknown u
  Tensor pm = matmul(sel, prior_mu);
  Tensor plv = matmul(sel, prior_logvar);
  // 0.5 * [lv_p - lv_q + (var_q + (mu_q - mu_p)^2) / var_p - 1]
  Tensor ratio = div(add(exp_op(logvar), square(sub(mu, pm))), exp_op(plv));
  Tensor per_dim = add(sub(plv, logvar), add_scalar(ratio, -1.0));
  return scale(mean(row_sum(per_dim)), 0.5);
}

Tensor style_gaussian_nll(const Tensor& z_styled) {
  return neg(mean(std_gaussian_logprob_rows(z_styled)));
}

namespace {

// Derivative of the hidden activation as a tape expression. Piecewise-linear
// activations use a detached mask (their second derivative is zero a.e.).
Tensor act_derivative(const Tensor& pre, const Tensor& activated, Act act) {
  switch (act) {
    case Act::kIdentity: return Tensor::full(pre.shape(), 1.0);
    case Act::kTanh: return sub(Tensor::full(pre.shape(), 1.0), square(activated));
    case Act::kRelu: {
      std::vector<double> m(pre.data().size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = pre.data()[i] > 0 ? 1.0 : 0.0;
      return Tensor(pre.shape(), std::move(m));
    }
    case Act::kLeakyRelu: {
      std::vector<double> m(pre.data().size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = pre.data()[i] > 0 ? 1.0 : 0.2;
      return Tensor(pre.shape(), std::move(m));
    }
  }
  throw std::invalid_argument("unknown activation");
}

Tensor jacobian_l1_impl(const Mlp& decoder, const ParamStore& store, const Bound& p,
                        const Tensor& z, const std::vector<int>* sampled_cols) {
  const int batch = z.shape()[0];
  const std::size_t layers = decoder.w_ids.size();

  // Forward pass, keeping pre-activations of every hidden layer.
  std::vector<Tensor> pre(layers), post(layers);
  Tensor h = z;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = add(matmul(h, p[static_cast<std::size_t>(decoder.w_ids[l])]),
                 p[static_cast<std::size_t>(decoder.b_ids[l])]);
    post[l] = l + 1 < layers ? apply_act(pre[l], decoder.hidden_act) : pre[l];
    h = post[l];
  }

  Tensor last_w = p[static_cast<std::size_t>(decoder.w_ids[layers - 1])];
  if (sampled_cols) {
    std::vector<Tensor> cols;
    for (int c : *sampled_cols) cols.push_back(slice(last_w, 1, c, 1));
    last_w = concat(cols, 1);
  }

  Tensor acc = Tensor::scalar(0.0);
  for (int b = 0; b < batch; ++b) {
    Tensor m = p[static_cast<std::size_t>(decoder.w_ids[0])];  // [in, h1]
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      Tensor d = act_derivative(pre[l], post[l], decoder.hidden_act);
      Tensor drow = reshape(slice(d, 0, b, 1), {d.shape()[1]});
      m = mul(m, drow);  // scale columns by the sample's activation slope
      m = matmul(m, l + 2 < layers ? p[static_cast<std::size_t>(decoder.w_ids[l + 1])] : last_w);
    }
    if (layers == 1) m = last_w;
    acc = add(acc, sum(abs_op(m)));
  }
  return scale(acc, 1.0 / static_cast<double>(batch));
}

}  // namespace

Tensor decoder_jacobian_l1(const Mlp& decoder, const ParamStore& store, const Bound& p,
                           const Tensor& z, int cap) {
  const int out = decoder.out_dim(store);
  if (out > cap)
    throw std::invalid_argument(
        "decoder_jacobian_l1: output dimension " + std::to_string(out) +
        " exceeds the full-Jacobian cap (" + std::to_string(cap) +
        "); use the row-sampled estimator instead");
  return jacobian_l1_impl(decoder, store, p, z, nullptr);
}

Tensor decoder_jacobian_l1_sampled(const Mlp& decoder, const ParamStore& store, const Bound& p,
                                   const Tensor& z, int rows, PrngStream& stream) {
  const int out = decoder.out_dim(store);
  if (rows < 1 || rows > out)
    throw std::invalid_argument("decoder_jacobian_l1_sampled: bad row count");
  std::vector<int> cols;
  for (int r = 0; r < rows; ++r)
    cols.push_back(static_cast<int>(draw_index(stream, static_cast<std::uint64_t>(out))));
  Tensor partial = jacobian_l1_impl(decoder, store, p, z, &cols);
  return scale(partial, static_cast<double>(out) / static_cast<double>(rows));
}

Tensor select_cols(const Tensor& x, const std::vector<int>& cols) {
  const int dim = x.shape()[1];
  std::vector<double> sel(static_cast<std::size_t>(dim) * cols.size(), 0.0);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= dim)
      throw std::out_of_range("select_cols: index " + std::to_string(cols[j]) + " out of range");
    sel[static_cast<std::size_t>(cols[j]) * cols.size() + j] = 1.0;
  }
  return matmul(x, Tensor({dim, static_cast<int>(cols.size())}, std::move(sel)));
}

Tensor invariance_penalty(const Tensor& z_v1, const Tensor& z_v2,
                          const std::vector<int>& subset) {
  if (z_v1.shape() != z_v2.shape())
    throw std::invalid_argument("invariance_penalty: view shapes disagree");
  if (subset.empty()) return Tensor::scalar(0.0);
  return mean(square(sub(select_cols(z_v1, subset), select_cols(z_v2, subset))));
}

Tensor invariance_penalty_moments(const Tensor& z_v1, const Tensor& z_v2,
                                  const std::vector<int>& subset) {
  if (z_v1.shape() != z_v2.shape())
    throw std::invalid_argument("invariance_penalty: view shapes disagree");
  if (subset.empty()) return Tensor::scalar(0.0);
  const int b = z_v1.shape()[0];
  Tensor avg = Tensor::full({1, b}, 1.0 / static_cast<double>(b));
  auto moments = [&](const Tensor& z) {
    Tensor sel = select_cols(z, subset);
    Tensor m = matmul(avg, sel);
    Tensor v = sub(matmul(avg, square(sel)), square(m));
    return std::make_pair(m, v);
  };
  auto [m1, v1] = moments(z_v1);
  auto [m2, v2] = moments(z_v2);
  return mean(add(square(sub(m1, m2)), square(sub(v1, v2))));
}

Tensor mechanism_sparsity(const Tensor& edge_weights) { return sum(abs_op(edge_weights)); }

std::pair<Tensor, Tensor> aux_latent_and_delta(const std::vector<Tensor>& pred_h,
                                               const std::vector<Tensor>& h) {
  if (pred_h.size() != h.size() || pred_h.empty())
    throw std::invalid_argument("aux_latent_and_delta: sequences disagree");
  if (pred_h.size() < 2)
    throw std::invalid_argument("aux_latent_and_delta: delta needs at least two steps");
  Tensor latent = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < h.size(); ++t)
    latent = add(latent, mean(sq_norm_rows(sub(pred_h[t], h[t]))));
  latent = scale(latent, 1.0 / static_cast<double>(h.size()));

  Tensor delta = Tensor::scalar(0.0);
  for (std::size_t t = 0; t + 1 < h.size(); ++t) {
    Tensor dp = sub(pred_h[t + 1], pred_h[t]);
    Tensor dh = sub(h[t + 1], h[t]);
    delta = add(delta, mean(sq_norm_rows(sub(dp, dh))));
  }
  delta = scale(delta, 1.0 / static_cast<double>(h.size() - 1));
  return {latent, delta};
}

}  // namespace crl
