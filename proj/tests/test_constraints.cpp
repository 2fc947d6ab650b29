#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "crl/constraints.hpp"
#include "crl/gradcheck.hpp"
#include "test_util.hpp"

using namespace crl;
using namespace crl::testutil;

TEST_CASE("standard-normal KL closed forms") {
  CHECK(kl_standard_gaussian(Tensor::zeros({4, 3}), Tensor::zeros({4, 3})).value() == 0.0);
  CHECK(kl_standard_gaussian(Tensor::full({1, 1}, 1.0), Tensor::zeros({1, 1})).value() ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("standard-normal KL agrees with a Monte-Carlo estimate") {
  PrngStream s{70, 1};
  Tensor mu = random_tensor(s, {1, 3}, -1.0, 1.0);
  Tensor lv = random_tensor(s, {1, 3}, -1.0, 0.5);
  const double closed = kl_standard_gaussian(mu, lv).value();

  double mc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double sd = std::exp(0.5 * lv[j]);
      const double z = mu[j] + sd * draw_standard_normal(s);
      const double log_q = -0.5 * (std::log(2 * M_PI) + lv[j] + (z - mu[j]) * (z - mu[j]) / (sd * sd));
      const double log_p = -0.5 * (std::log(2 * M_PI) + z * z);
      mc += log_q - log_p;
    }
  }
  mc /= n;
  CHECK(std::abs(closed - mc) < 0.01);
}

TEST_CASE("capacity schedule hits its corner cases") {
  Tensor kl = Tensor::scalar(3.0);
  CHECK(capacity_kl(kl, 0, 2.0, 10.0, 100).value() == doctest::Approx(6.0));      // C(0) = 0
  CHECK(capacity_kl(kl, 100, 2.0, 10.0, 100).value() == doctest::Approx(14.0));   // C = C_max
  CHECK(capacity_kl(kl, 500, 2.0, 10.0, 100).value() == doctest::Approx(14.0));   // saturated
  CHECK(capacity_kl(kl, 50, 2.0, 10.0, 100).value() == doctest::Approx(4.0));     // C = 5
  CHECK_THROWS_AS((void)capacity_kl(kl, 1, 1.0, 10.0, 0), std::invalid_argument);
}

TEST_CASE("sparsity penalties") {
  CHECK(l1_sparsity(Tensor::zeros({3, 4})).value() == 0.0);
  CHECK(l1_sparsity(Tensor({2, 2}, {1, -2, 3, -4})).value() == doctest::Approx(5.0));

  CHECK(bernoulli_kl(0.1, Tensor({1, 1}, {0.1})).value() == doctest::Approx(0.0).epsilon(1e-12));
  // Direct evaluation: 0.1 ln 0.2 + 0.9 ln 1.8.
  const double expect = 0.1 * std::log(0.2) + 0.9 * std::log(1.8);
  CHECK(bernoulli_kl(0.1, Tensor({1, 1}, {0.5})).value() ==
        doctest::Approx(expect).epsilon(1e-12));
  // Out-of-range activations clamp instead of erroring.
  CHECK(std::isfinite(bernoulli_kl(0.1, Tensor({1, 2}, {-0.5, 1.5})).value()));
}

TEST_CASE("energy penalties and their gradient") {
  CHECK(energy_quadratic(Tensor::zeros({2, 3})).value() == 0.0);
  CHECK(energy_quadratic(Tensor({1, 2}, {1.0, 1.0})).value() == doctest::Approx(1.0));

  PrngStream s{71, 2};
  auto f = [](const Tensor& z) { return energy_quadratic(z); };
  Tensor z = random_tensor(s, {1, 4});
  CHECK(finite_diff_check(f, z, 1e-5) <= 1e-4);

  // Learned PSD quadratic with identity Cholesky reduces to the fixed form.
  Tensor eye({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  CHECK(energy_learned(z, eye).value() == doctest::Approx(energy_quadratic(z).value()));
}

TEST_CASE("vector quantization nearest-code selection and losses") {
  Tensor codebook({2, 1}, {0.0, 1.0});
  VqResult at_code = vector_quantize(Tensor({1, 1}, {1.0}), codebook, 0.25);
  CHECK(at_code.indices[0] == 1);
  CHECK(at_code.loss.value() == 0.0);

  VqResult near = vector_quantize(Tensor({1, 1}, {0.9}), codebook, 0.25);
  CHECK(near.indices[0] == 1);
  CHECK(near.quantized[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS((void)vector_quantize(Tensor({1, 1}, {0.0}), Tensor({0, 1}, {}), 0.25),
                  std::invalid_argument);
}

TEST_CASE("vq straight-through passes the gradient as identity") {
  PrngStream s{72, 3};
  Tensor codebook = random_tensor(s, {4, 3});
  Tensor z0 = random_tensor(s, {2, 3});

  Tape tape;
  Tensor z = tape.var(z0);
  VqResult vq = vector_quantize(z, codebook, 0.25);
  auto grads = tape.backward(sum(square(vq.quantized)));
  // d ||z_q||^2 / d z_e = 2 z_q under the straight-through contract.
  for (std::int64_t i = 0; i < z0.size(); ++i)
    CHECK(grads.at(z)[i] == doctest::Approx(2.0 * vq.quantized[i]).epsilon(1e-12));

  // The codebook term pulls the selected codeword toward sg(z_e).
  Tape tape2;
  Tensor cb = tape2.var(codebook);
  VqResult vq2 = vector_quantize(z0, cb, 0.25);
  auto cb_grads = tape2.backward(vq2.loss);
  CHECK(cb_grads.contains(cb.node_id()));
}

TEST_CASE("temporal prior: identity flow against a standard-normal posterior") {
  PrngStream s{73, 4};
  ParamStore store;
  TemporalFlow flow = TemporalFlow::create(store, "flow", 2, 1, 8, 0, false, s);
  Bound p = store.bind_const();
  const int T = 4;

  // Posterior equals the base density: the future KL term has mean ~ 0.
  double acc = 0.0;
  const int draws = 10000 / (T - 1);
  for (int rep = 0; rep < draws; ++rep) {
    std::vector<Tensor> mu(T, Tensor::zeros({1, 2})), lv(T, Tensor::zeros({1, 2})), z;
    for (int t = 0; t < T; ++t)
      z.push_back(reparameterize(mu[static_cast<std::size_t>(t)], lv[static_cast<std::size_t>(t)],
                                 prng_draw(s, DrawKind::kStandardNormal, {1, 2})));
    acc += temporal_prior_kl(mu, lv, z, flow, p, {}).future_kl.value();
  }
  CHECK(std::abs(acc / draws) <= 0.02);

  // L_init vanishes for a standard-normal posterior.
  std::vector<Tensor> mu(T, Tensor::zeros({3, 2})), lv(T, Tensor::zeros({3, 2})), z;
  for (int t = 0; t < T; ++t) z.push_back(mu[static_cast<std::size_t>(t)]);
  CHECK(temporal_prior_kl(mu, lv, z, flow, p, {}).init_kl.value() == 0.0);

  // Sequences shorter than lag + 2 are rejected.
  std::vector<Tensor> mu2(2, Tensor::zeros({1, 2})), lv2(2, Tensor::zeros({1, 2})),
      z2(2, Tensor::zeros({1, 2}));
  CHECK_THROWS_AS((void)temporal_prior_kl(mu2, lv2, z2, flow, p, {}), std::invalid_argument);
}

TEST_CASE("temporal prior shifts by the closed-form logdet under a constant scale") {
  PrngStream s{74, 5};
  ParamStore store;
  const int dim = 3;
  TemporalFlow flow = TemporalFlow::create(store, "flow", dim, 1, 8, 0, false, s);
  const int T = 4;
  std::vector<Tensor> mu(T, Tensor::zeros({1, dim})), lv(T, Tensor::zeros({1, dim}));
  // Zero futures keep the residual quadratic identical across scales.
  std::vector<Tensor> z(T, Tensor::zeros({1, dim}));

  Bound p_id = store.bind_const();
  const double base = temporal_prior_kl(mu, lv, z, flow, p_id, {}).future_kl.value();

  for (int i = 0; i < dim; ++i)
    store.values(flow.nets[static_cast<std::size_t>(i)].b_ids.back())[1] = std::log(2.0);
  Bound p_scaled = store.bind_const();
  const double scaled = temporal_prior_kl(mu, lv, z, flow, p_scaled, {}).future_kl.value();
  CHECK(scaled - base == doctest::Approx(dim * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("conditional prior KL closed forms and Monte-Carlo agreement") {
  Tensor prior_mu({2, 2}, {0, 0, 1, 1});
  Tensor prior_lv = Tensor::zeros({2, 2});

  // Prior equals posterior -> 0.
  CHECK(cond_prior_static_kl(Tensor::zeros({3, 2}), Tensor::zeros({3, 2}), {0, 0, 0}, prior_mu,
                             prior_lv)
            .value() == 0.0);
  // Unit variances, unit mean offset -> 0.5 per dimension.
  CHECK(cond_prior_static_kl(Tensor::zeros({1, 2}), Tensor::zeros({1, 2}), {1}, prior_mu,
                             prior_lv)
            .value() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)cond_prior_static_kl(Tensor::zeros({1, 2}), Tensor::zeros({1, 2}), {7},
                                             prior_mu, prior_lv),
                  std::out_of_range);

  // Monte-Carlo cross-check on a random configuration.
  PrngStream s{75, 6};
  Tensor mu = random_tensor(s, {1, 2}, -1, 1);
  Tensor lv = random_tensor(s, {1, 2}, -1, 0.5);
  Tensor pmu = random_tensor(s, {1, 2}, -1, 1);
  Tensor plv = random_tensor(s, {1, 2}, -1, 0.5);
  const double closed = cond_prior_static_kl(mu, lv, {0}, pmu, plv).value();
  double mc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) {
      const double sq = std::exp(0.5 * lv[j]);
      const double z = mu[j] + sq * draw_standard_normal(s);
      const double lq = -0.5 * (std::log(2 * M_PI) + lv[j] + (z - mu[j]) * (z - mu[j]) / (sq * sq));
      const double lp = -0.5 * (std::log(2 * M_PI) + plv[j] +
                                (z - pmu[j]) * (z - pmu[j]) / std::exp(plv[j]));
      mc += lq - lp;
    }
  CHECK(std::abs(closed - mc / n) < 0.01);
}

TEST_CASE("style Gaussian negative log-density closed forms") {
  CHECK(style_gaussian_nll(Tensor::zeros({4, 3})).value() ==
        doctest::Approx(1.5 * std::log(2 * M_PI)).epsilon(1e-12));
  CHECK(style_gaussian_nll(Tensor({1, 1}, {1.0})).value() ==
        doctest::Approx(0.5 * (std::log(2 * M_PI) + 1.0)).epsilon(1e-12));
}

TEST_CASE("decoder Jacobian L1 is exact for linear decoders") {
  PrngStream s{76, 7};
  for (int rep = 0; rep < 20; ++rep) {
    ParamStore store;
    MlpSpec spec;
    spec.widths = {3, 5};
    Mlp dec = Mlp::create(store, "dec", spec, s);
    double expect = 0.0;
    for (double w : store.values(dec.w_ids[0])) expect += std::abs(w);
    Bound p = store.bind_const();
    const double got = decoder_jacobian_l1(dec, store, p, random_tensor(s, {4, 3})).value();
    CHECK(std::abs(got - expect) <= 1e-10);
  }

  // Zero decoder -> zero penalty.
  ParamStore store;
  MlpSpec spec;
  spec.widths = {3, 5};
  spec.zero_init_last = true;
  Mlp dec = Mlp::create(store, "dec", spec, s);
  Bound p = store.bind_const();
  CHECK(decoder_jacobian_l1(dec, store, p, random_tensor(s, {2, 3})).value() == 0.0);
}

TEST_CASE("decoder Jacobian L1 matches finite differences on a tanh decoder") {
  PrngStream s{77, 8};
  ParamStore store;
  MlpSpec spec;
  spec.widths = {3, 6, 4};
  spec.hidden_act = Act::kTanh;
  Mlp dec = Mlp::create(store, "dec", spec, s);
  Bound p = store.bind_const();
  Tensor z = random_tensor(s, {2, 3});

  const double step = 1e-6;
  double expect = 0.0;
  for (int b = 0; b < 2; ++b)
    for (int out_c = 0; out_c < 4; ++out_c)
      for (int in_c = 0; in_c < 3; ++in_c) {
        std::vector<double> zp = z.data(), zm = z.data();
        zp[static_cast<std::size_t>(b) * 3 + static_cast<std::size_t>(in_c)] += step;
        zm[static_cast<std::size_t>(b) * 3 + static_cast<std::size_t>(in_c)] -= step;
        const double fp = dec.forward(p, Tensor({2, 3}, zp))[static_cast<std::int64_t>(b) * 4 + out_c];
        const double fm = dec.forward(p, Tensor({2, 3}, zm))[static_cast<std::int64_t>(b) * 4 + out_c];
        expect += std::abs((fp - fm) / (2 * step));
      }
  expect /= 2.0;  // batch mean
  const double got = decoder_jacobian_l1(dec, store, p, z).value();
  CHECK(std::abs(got - expect) / (std::abs(expect) + 1e-8) <= 1e-4);
}

TEST_CASE("decoder Jacobian cap and the row-sampled fallback") {
  PrngStream s{78, 9};
  ParamStore store;
  MlpSpec spec;
  spec.widths = {2, 4, 200};
  Mlp wide = Mlp::create(store, "wide", spec, s);
  Bound p = store.bind_const();
  Tensor z = random_tensor(s, {2, 2});
  CHECK_THROWS_WITH_AS((void)decoder_jacobian_l1(wide, store, p, z),
                       doctest::Contains("row-sampled"), std::invalid_argument);

  // The sampled estimator averages to the full penalty.
  ParamStore store2;
  MlpSpec small;
  small.widths = {2, 4, 6};
  Mlp dec = Mlp::create(store2, "dec", small, s);
  Bound p2 = store2.bind_const();
  const double full = decoder_jacobian_l1(dec, store2, p2, z).value();
  PrngStream rs{79, 10};
  double acc = 0.0;
  const int reps = 4000;
  for (int i = 0; i < reps; ++i)
    acc += decoder_jacobian_l1_sampled(dec, store2, p2, z, 2, rs).value();
  CHECK(acc / reps == doctest::Approx(full).epsilon(0.05));
}

TEST_CASE("invariance penalties") {
  Tensor a({1, 2}, {1.0, 2.0});
  Tensor b({1, 2}, {1.0, 3.0});
  CHECK(invariance_penalty(a, a, {0, 1}).value() == 0.0);
  CHECK(invariance_penalty(a, b, {}).value() == 0.0);
  CHECK(invariance_penalty(a, b, {0, 1}).value() == doctest::Approx(0.5));  // one unit diff of two

  PrngStream s{80, 11};
  Tensor z = random_tensor(s, {32, 3});
  CHECK(invariance_penalty_moments(z, z, {0, 2}).value() == 0.0);
  CHECK(invariance_penalty_moments(z, random_tensor(s, {32, 3}), {0, 2}).value() > 0.0);
  CHECK_THROWS_AS((void)invariance_penalty(a, b, {5}), std::out_of_range);
}

TEST_CASE("mechanism sparsity and gated transitions") {
  CHECK(mechanism_sparsity(Tensor::zeros({3, 3})).value() == 0.0);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(mechanism_sparsity(eye).value() == doctest::Approx(3.0));

  // A zeroed gate row makes the flow independent of that input coordinate.
  PrngStream s{81, 12};
  ParamStore store;
  TemporalFlow flow = TemporalFlow::create(store, "flow", 2, 1, 8, 0, true, s);
  for (auto& net : flow.nets) {
    auto& w = store.values(net.w_ids.back());
    for (auto& v : w) v = 0.5 * draw_standard_normal(s);
  }
  auto& gates = store.values(flow.gates);
  // gates is [lag*dim, dim]; zero the row of input coordinate 0.
  gates[0] = 0.0;
  gates[1] = 0.0;

  Bound p = store.bind_const();
  Tensor z_prev = random_tensor(s, {1, 2});
  Tensor z_cur = random_tensor(s, {1, 2});
  Tape tape;
  Tensor leaf = tape.var(z_prev);
  TemporalFlow::Result res = flow.forward(p, {leaf, z_cur}, {});
  auto grads = tape.backward(sum(square(res.residuals[0])));
  const Tensor& g = grads.at(leaf);
  CHECK(g[0] == 0.0);  // gated-out input coordinate
  CHECK(g[1] != 0.0);
}

TEST_CASE("auxiliary latent and delta losses") {
  PrngStream s{82, 13};
  std::vector<Tensor> h{random_tensor(s, {2, 3}), random_tensor(s, {2, 3}),
                        random_tensor(s, {2, 3})};
  auto [latent_same, delta_same] = aux_latent_and_delta(h, h);
  CHECK(latent_same.value() == 0.0);
  CHECK(delta_same.value() == 0.0);

  // Constant offset: latent picks it up, delta cancels it.
  Tensor c = Tensor::full({2, 3}, 0.7);
  std::vector<Tensor> shifted;
  for (const Tensor& t : h) shifted.push_back(add(t, c));
  auto [latent_off, delta_off] = aux_latent_and_delta(shifted, h);
  CHECK(latent_off.value() == doctest::Approx(3 * 0.7 * 0.7).epsilon(1e-12));
  CHECK(delta_off.value() == doctest::Approx(0.0).epsilon(1e-18));

  // Random case against an independent recomputation.
  std::vector<Tensor> pred{random_tensor(s, {2, 3}), random_tensor(s, {2, 3}),
                           random_tensor(s, {2, 3})};
  auto [latent, delta] = aux_latent_and_delta(pred, h);
  double want_latent = 0.0;
  for (int t = 0; t < 3; ++t) {
    double per_batch = 0.0;
    for (std::int64_t i = 0; i < 6; ++i) {
      const double diff = pred[static_cast<std::size_t>(t)][i] - h[static_cast<std::size_t>(t)][i];
      per_batch += diff * diff;
    }
    want_latent += per_batch / 2.0;  // batch mean of per-sample squared norms
  }
  want_latent /= 3.0;
  CHECK(latent.value() == doctest::Approx(want_latent).epsilon(1e-12));
  CHECK(delta.value() > 0.0);

  std::vector<Tensor> single{h[0]};
  CHECK_THROWS_AS((void)aux_latent_and_delta(single, single), std::invalid_argument);
}
