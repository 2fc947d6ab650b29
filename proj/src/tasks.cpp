#include "crl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crl {

namespace {

constexpr double kMaskEps = 1e-8;

void check_seq(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
               const char* what) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument(std::string(what) + ": sequence lengths disagree");
  for (std::size_t t = 0; t < a.size(); ++t)
    if (a[t].shape() != b[t].shape())
      throw std::invalid_argument(std::string(what) + ": shape mismatch at step " +
                                  std::to_string(t));
}

}  // namespace

std::vector<Tensor> transform_family(int n, int count) {
  // Pinned by (n, count): the family is part of the task definition.
  PrngStream s{mix64(static_cast<std::uint64_t>(n) << 32 | static_cast<std::uint64_t>(count)),
               0x7453f0a2ULL};
  std::vector<Tensor> family;
  for (int c = 0; c < count; ++c) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    if (c > 0) shuffle(s, perm);  // keep the identity as class 0
    std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
      const double sign = (c > 0 && draw_uniform01(s) < 0.5) ? -1.0 : 1.0;
      m[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]) * n + j] = sign;
    }
    family.emplace_back(Shape{n, n}, std::move(m));
  }
  return family;
}

ViewBatch view_generate(const ViewSpec& spec, const Tensor& batch, PrngStream& stream) {
  if (batch.shape().size() != 2)
    throw std::invalid_argument("view_generate expects a [batch, dim] tensor");
  const int b = batch.shape()[0], n = batch.shape()[1];
  ViewBatch out;
  switch (spec.kind) {
    case ViewSpec::Kind::kIdentity: {
      out.view = batch;
      return out;
    }
    case ViewSpec::Kind::kCorrupt: {
      if (!(spec.sigma > 0)) throw std::invalid_argument("corrupt view needs sigma > 0");
      Tensor noise = prng_draw(stream, DrawKind::kStandardNormal, batch.shape());
      out.view = add(batch, scale(noise, spec.sigma));
      return out;
    }
    case ViewSpec::Kind::kMask: {
      if (!(spec.mask_ratio > 0.0 && spec.mask_ratio < 1.0))
        throw std::invalid_argument("mask ratio must be in (0, 1)");
      const int hidden = static_cast<int>(std::lround(spec.mask_ratio * n));
      std::vector<double> m(static_cast<std::size_t>(b) * n, 1.0);
      std::vector<int> idx(static_cast<std::size_t>(n));
      for (int r = 0; r < b; ++r) {
        std::iota(idx.begin(), idx.end(), 0);
        shuffle(stream, idx);
        for (int k = 0; k < hidden; ++k)
          m[static_cast<std::size_t>(r) * n + static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 0.0;
      }
      out.visible = Tensor({b, n}, std::move(m));
      out.view = mul(batch, out.visible);
      return out;
    }
    case ViewSpec::Kind::kTwoViews: {
      auto jitter = [&](const Tensor& x) {
        Tensor noise = prng_draw(stream, DrawKind::kStandardNormal, x.shape());
        Tensor y = add(x, scale(noise, spec.sigma));
        std::vector<double> keep(static_cast<std::size_t>(b) * n, 1.0);
        for (auto& v : keep)
          if (draw_uniform01(stream) < spec.dropout) v = 0.0;
        return mul(y, Tensor({b, n}, std::move(keep)));
      };
      out.view = jitter(batch);
      out.view2 = jitter(batch);
      return out;
    }
    case ViewSpec::Kind::kTransform: {
      const std::vector<Tensor> family = transform_family(n, spec.transform_count);
      out.transform_ids.resize(static_cast<std::size_t>(b));
      std::vector<Tensor> rows;
      for (int r = 0; r < b; ++r) {
        const int c = static_cast<int>(draw_index(stream, static_cast<std::uint64_t>(spec.transform_count)));
        out.transform_ids[static_cast<std::size_t>(r)] = c;
        rows.push_back(matmul(slice(batch, 0, r, 1), family[static_cast<std::size_t>(c)]));
      }
      out.view = concat(rows, 0);
      return out;
    }
    case ViewSpec::Kind::kPrefix: {
      if (spec.prefix_t < 1 || spec.prefix_t >= n)
        throw std::invalid_argument("prefix view needs 1 <= t < dim");
      out.view = slice(batch, 1, 0, spec.prefix_t);
      return out;
    }
  }
  throw std::invalid_argument("unknown view kind");
}

Tensor loss_reconstruction(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  check_seq(pred, target, "loss_reconstruction");
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < pred.size(); ++t)
    acc = add(acc, mean(sq_norm_rows(sub(pred[t], target[t]))));
  return scale(acc, 1.0 / static_cast<double>(pred.size()));
}

Tensor loss_masked(const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                   const std::vector<Tensor>& visible) {
  check_seq(pred, target, "loss_masked");
  if (visible.size() != pred.size())
    throw std::invalid_argument("loss_masked: mask sequence length mismatch");
  const int b = pred[0].shape()[0];
  Tensor num = Tensor::zeros({b, 1});
  Tensor den = Tensor::zeros({b, 1});
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (visible[t].shape() != pred[t].shape())
      throw std::invalid_argument("loss_masked: mask shape mismatch at step " + std::to_string(t));
    Tensor hidden = sub(Tensor::full(visible[t].shape(), 1.0), visible[t]);
    num = add(num, sq_norm_rows(mul(hidden, sub(pred[t], target[t]))));
    den = add(den, row_sum(hidden));
  }
  return mean(div(num, add_scalar(den, kMaskEps)));
}

Tensor loss_mid_latent(const std::vector<Tensor>& pred_h, const std::vector<Tensor>& h) {
  std::vector<Tensor> sg;
  sg.reserve(h.size());
  for (const Tensor& t : h) sg.push_back(stop_gradient(t));
  return loss_reconstruction(pred_h, sg);
}

Tensor loss_next_frame(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  check_seq(pred, target, "loss_next_frame");
  if (pred.size() < 2)
    throw std::invalid_argument("loss_next_frame needs at least two steps");
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t t = 0; t + 1 < pred.size(); ++t)
    acc = add(acc, mean(sq_norm_rows(sub(pred[t], target[t + 1]))));
  return scale(acc, 1.0 / static_cast<double>(pred.size() - 1));
}

Tensor loss_cross_view(const Tensor& pred_i, const Tensor& target_j, const Tensor& pred_j,
                       const Tensor& target_i) {
  Tensor a = mean(sq_norm_rows(sub(pred_i, target_j)));
  Tensor b = mean(sq_norm_rows(sub(pred_j, target_i)));
  return scale(add(a, b), 0.5);
}

Tensor loss_autoregressive(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  return scale(loss_reconstruction(pred, target), 0.5);
}

Tensor loss_infonce(const Tensor& queries, const Tensor& keys, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("loss_infonce: tau must be positive");
  if (queries.shape() != keys.shape())
    throw std::invalid_argument("loss_infonce: query/key shapes disagree");
  const int n = queries.shape()[0];
  if (n < 2) throw std::invalid_argument("loss_infonce needs a batch of at least 2");
  Tensor q = normalize_rows(queries);
  Tensor k = normalize_rows(stop_gradient(keys));
  Tensor sim = scale(matmul(q, transpose(k)), 1.0 / tau);  // [N,N]
  Tensor lse = logsumexp(sim, 1);                          // [N,1]
  std::vector<double> eye(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eye[static_cast<std::size_t>(i) * n + i] = 1.0;
  Tensor diag = row_sum(mul(sim, Tensor({n, n}, std::move(eye))));  // [N,1]
  return mean(sub(lse, diag));
}

Tensor sinkhorn_assign(const Tensor& logits, int iters) {
  if (iters < 1) throw std::invalid_argument("sinkhorn_assign: iters must be >= 1");
  if (logits.shape().size() != 2)
    throw std::invalid_argument("sinkhorn_assign expects [N,K] logits");
  const int n = logits.shape()[0], k = logits.shape()[1];
  const auto& lv = logits.data();
  double mx = lv[0];
  for (double v : lv) mx = std::max(mx, v);
  std::vector<double> q(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) q[i] = std::exp(lv[i] - mx);

  for (int it = 0; it < iters; ++it) {
    for (int c = 0; c < k; ++c) {
      double s = 0.0;
      for (int r = 0; r < n; ++r) s += q[static_cast<std::size_t>(r) * k + c];
      const double f = 1.0 / (s * k);
      for (int r = 0; r < n; ++r) q[static_cast<std::size_t>(r) * k + c] *= f;
    }
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int c = 0; c < k; ++c) s += q[static_cast<std::size_t>(r) * k + c];
      const double f = 1.0 / (s * n);
      for (int c = 0; c < k; ++c) q[static_cast<std::size_t>(r) * k + c] *= f;
    }
  }
  for (auto& v : q) v *= n;  // rows now sum to 1
  return Tensor({n, k}, std::move(q));
}

Tensor loss_prototype_video(const Tensor& reps, const Tensor& prototype_rows, double tau_p) {
  const int n = reps.shape()[0];
  const int k = prototype_rows.shape()[0];
  const int d = prototype_rows.shape()[1];
  if (reps.shape()[1] != d)
    throw std::invalid_argument("loss_prototype_video: representation dim mismatch");
  // Hard assignments on detached values.
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  const auto& rv = reps.data();
  const auto& cv = prototype_rows.data();
  for (int i = 0; i < n; ++i) {
    double best = 0.0;
    for (int c = 0; c < k; ++c) {
      double dist = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = rv[static_cast<std::size_t>(i) * d + j] - cv[static_cast<std::size_t>(c) * d + j];
        dist += diff * diff;
      }
      if (c == 0 || dist < best) {
        best = dist;
        assign[static_cast<std::size_t>(i)] = c;
      }
    }
  }
  return loss_classification(prototype_logits(prototype_rows, reps, tau_p), assign);
}

Tensor loss_prototype_swapped(const Tensor& z_a, const Tensor& z_b, const Tensor& prototype_rows,
                              double tau_p, int sinkhorn_iters) {
  constexpr double kSinkhornEps = 0.05;  // entropy scale of the balanced targets
  Tensor logits_a = prototype_logits(prototype_rows, z_a, tau_p);
  Tensor logits_b = prototype_logits(prototype_rows, z_b, tau_p);
  const int k = logits_a.shape()[1];
  // Targets balance the raw cosine scores at temperature eps.
  const double to_eps = tau_p / kSinkhornEps;
  Tensor q_a = sinkhorn_assign(scale(logits_a.detached(), to_eps), sinkhorn_iters);
  Tensor q_b = sinkhorn_assign(scale(logits_b.detached(), to_eps), sinkhorn_iters);
  Tensor logp_a = sub(logits_a, tile_cols(logsumexp(logits_a, 1), k));
  Tensor logp_b = sub(logits_b, tile_cols(logsumexp(logits_b, 1), k));
  Tensor ce_a = mean(neg(row_sum(mul(logp_a, q_b))));  // targets swapped
  Tensor ce_b = mean(neg(row_sum(mul(logp_b, q_a))));
  return scale(add(ce_a, ce_b), 0.5);
}

Tensor loss_classification(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("loss_classification expects [N, C] logits");
  const int n = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("loss_classification: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= c)
      throw std::out_of_range("loss_classification: label " + std::to_string(l) +
                              " out of range " + std::to_string(c));
  Tensor lse = logsumexp(logits, 1);                       // [N,1]
  Tensor picked = row_sum(mul(logits, one_hot(labels, c)));  // [N,1]
  return mean(sub(lse, picked));
}

}  // namespace crl
