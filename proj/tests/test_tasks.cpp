#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "crl/gradcheck.hpp"
#include "crl/tasks.hpp"
#include "test_util.hpp"

using namespace crl;
using namespace crl::testutil;

TEST_CASE("identity view passes the batch through") {
  PrngStream s{50, 1};
  Tensor x = random_tensor(s, {4, 3});
  ViewSpec vs;
  CHECK(bitwise_equal(view_generate(vs, x, s).view, x));
}

TEST_CASE("mask view hides exactly the rounded fraction") {
  PrngStream s{51, 2};
  Tensor x = random_tensor(s, {8, 4});
  ViewSpec vs;
  vs.kind = ViewSpec::Kind::kMask;
  vs.mask_ratio = 0.5;
  ViewBatch vb = view_generate(vs, x, s);
  for (int r = 0; r < 8; ++r) {
    int zeros = 0;
    for (int c = 0; c < 4; ++c)
      if (vb.visible[static_cast<std::int64_t>(r) * 4 + c] == 0.0) ++zeros;
    CHECK(zeros == 2);
  }
  // Visible positions pass through, masked ones are zero.
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(vb.view[i] == (vb.visible[i] == 1.0 ? x[i] : 0.0));
}

TEST_CASE("corrupt view noise has the configured variance") {
  PrngStream s{52, 3};
  Tensor x = Tensor::zeros({500, 200});
  ViewSpec vs;
  vs.kind = ViewSpec::Kind::kCorrupt;
  vs.sigma = 0.1;
  ViewBatch vb = view_generate(vs, x, s);
  double var = 0.0;
  for (std::int64_t i = 0; i < vb.view.size(); ++i) var += vb.view[i] * vb.view[i];
  var /= static_cast<double>(vb.view.size());
  CHECK(var == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("transform views carry their class ids") {
  PrngStream s{53, 4};
  Tensor x = random_tensor(s, {16, 5});
  ViewSpec vs;
  vs.kind = ViewSpec::Kind::kTransform;
  vs.transform_count = 4;
  ViewBatch vb = view_generate(vs, x, s);
  REQUIRE(vb.transform_ids.size() == 16);
  const std::vector<Tensor> family = transform_family(5, 4);
  for (int r = 0; r < 16; ++r) {
    Tensor expect = matmul(slice(x, 0, r, 1), family[static_cast<std::size_t>(vb.transform_ids[static_cast<std::size_t>(r)])]);
    for (int c = 0; c < 5; ++c)
      CHECK(vb.view[static_cast<std::int64_t>(r) * 5 + c] == expect[c]);
  }
}

TEST_CASE("squared-family losses vanish at their optimum") {
  PrngStream s{54, 5};
  std::vector<Tensor> x{random_tensor(s, {3, 4}), random_tensor(s, {3, 4})};
  CHECK(loss_reconstruction(x, x).value() == 0.0);
  CHECK(loss_mid_latent(x, x).value() == 0.0);
  CHECK(loss_next_frame(x, x).value() ==
        doctest::Approx(mean(sq_norm_rows(sub(x[0], x[1]))).value()).epsilon(1e-12));
  CHECK(loss_autoregressive(x, x).value() == 0.0);
  std::vector<Tensor> visible{Tensor::full({3, 4}, 1.0), Tensor::full({3, 4}, 0.0)};
  CHECK(loss_masked(x, x, visible).value() == 0.0);
  CHECK(loss_cross_view(x[0], x[0], x[1], x[1]).value() == 0.0);
}

TEST_CASE("masked loss normalizes by the hidden count") {
  // pred - target = 1 everywhere, 4 dims, 2 masked, T = 1 -> 2 / (2 + eps).
  std::vector<Tensor> pred{Tensor::full({1, 4}, 1.0)};
  std::vector<Tensor> target{Tensor::zeros({1, 4})};
  std::vector<Tensor> visible{Tensor({1, 4}, {1.0, 0.0, 1.0, 0.0})};
  CHECK(loss_masked(pred, target, visible).value() ==
        doctest::Approx(2.0 / (2.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("masked loss ignores predictions at visible positions") {
  PrngStream s{55, 6};
  std::vector<Tensor> target{random_tensor(s, {2, 4})};
  std::vector<Tensor> visible{Tensor({2, 4}, {1, 0, 1, 0, 0, 1, 0, 1})};
  std::vector<Tensor> pred{random_tensor(s, {2, 4})};
  std::vector<double> altered = pred[0].data();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c)
      if (visible[0][static_cast<std::int64_t>(r) * 4 + c] == 1.0)
        altered[static_cast<std::size_t>(r) * 4 + static_cast<std::size_t>(c)] += 17.0;
  std::vector<Tensor> pred2{Tensor({2, 4}, altered)};
  CHECK(loss_masked(pred, target, visible).value() ==
        loss_masked(pred2, target, visible).value());
}

TEST_CASE("mid-latent loss sends no gradient to the target path") {
  PrngStream s{56, 7};
  Tape tape;
  Tensor h = tape.var(random_tensor(s, {2, 3}));
  Tensor pred = tape.var(random_tensor(s, {2, 3}));
  Tensor loss = loss_mid_latent({pred}, {h});
  auto grads = tape.backward(loss);
  CHECK_FALSE(grads.contains(h.node_id()));
  CHECK(grads.contains(pred.node_id()));
}

TEST_CASE("infonce with identical embeddings is ln N") {
  PrngStream s{57, 8};
  Tensor base = random_tensor(s, {1, 6});
  std::vector<Tensor> rows(4, base);
  Tensor q = concat(rows, 0);
  CHECK(loss_infonce(q, q, 0.1).value() == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("infonce with unit positive and negative similarity") {
  Tensor q({2, 2}, {1, 0, -1, 0});
  CHECK(loss_infonce(q, q, 0.1).value() ==
        doctest::Approx(std::log(1.0 + std::exp(-20.0))).epsilon(1e-9));
}

TEST_CASE("infonce equals a brute-force cross entropy") {
  PrngStream s{58, 9};
  const int n = 8, d = 5;
  Tensor q = random_tensor(s, {n, d});
  Tensor k = random_tensor(s, {n, d});
  const double tau = 0.2;

  // Independent recomputation with plain doubles.
  auto unit = [&](const Tensor& m, int r, int c) {
    double norm = 0;
    for (int j = 0; j < d; ++j) norm += m[static_cast<std::int64_t>(r) * d + j] * m[static_cast<std::int64_t>(r) * d + j];
    return m[static_cast<std::int64_t>(r) * d + c] / std::sqrt(norm);
  };
  double expect = 0.0;
  for (int i = 0; i < n; ++i) {
    double denom = 0.0, pos = 0.0;
    for (int j = 0; j < n; ++j) {
      double sim = 0.0;
      for (int c = 0; c < d; ++c) sim += unit(q, i, c) * unit(k, j, c);
      sim /= tau;
      denom += std::exp(sim);
      if (j == i) pos = sim;
    }
    expect += -pos + std::log(denom);
  }
  expect /= n;
  CHECK(loss_infonce(q, k, tau).value() == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("infonce is permutation equivariant in the batch") {
  PrngStream s{59, 10};
  const int n = 6, d = 4;
  Tensor q = random_tensor(s, {n, d});
  Tensor k = random_tensor(s, {n, d});
  std::vector<int> perm{3, 1, 4, 0, 5, 2};
  std::vector<double> qp(static_cast<std::size_t>(n) * d), kp(static_cast<std::size_t>(n) * d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) {
      qp[static_cast<std::size_t>(r) * d + static_cast<std::size_t>(c)] = q[static_cast<std::int64_t>(perm[static_cast<std::size_t>(r)]) * d + c];
      kp[static_cast<std::size_t>(r) * d + static_cast<std::size_t>(c)] = k[static_cast<std::int64_t>(perm[static_cast<std::size_t>(r)]) * d + c];
    }
  CHECK(loss_infonce(Tensor({n, d}, qp), Tensor({n, d}, kp), 0.1).value() ==
        doctest::Approx(loss_infonce(q, k, 0.1).value()).epsilon(1e-12));
}

TEST_CASE("infonce rejects tiny batches") {
  Tensor q({1, 3}, {1, 0, 0});
  CHECK_THROWS_AS((void)loss_infonce(q, q, 0.1), std::invalid_argument);
}

TEST_CASE("sinkhorn assignments balance rows and columns") {
  PrngStream s{60, 11};
  // K = 1: everything lands in the single column.
  Tensor one = sinkhorn_assign(random_tensor(s, {5, 1}), 3);
  for (std::int64_t i = 0; i < one.size(); ++i) CHECK(one[i] == doctest::Approx(1.0).epsilon(1e-12));

  // Uniform logits: uniform assignments.
  Tensor uni = sinkhorn_assign(Tensor::zeros({6, 3}), 3);
  for (std::int64_t i = 0; i < uni.size(); ++i)
    CHECK(uni[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // Random logits converge to column sums N/K.
  Tensor q = sinkhorn_assign(random_tensor(s, {16, 4}), 50);  // O(1) logits
  for (int r = 0; r < 16; ++r) {
    double row = 0;
    for (int c = 0; c < 4; ++c) row += q[static_cast<std::int64_t>(r) * 4 + c];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (int c = 0; c < 4; ++c) {
    double col = 0;
    for (int r = 0; r < 16; ++r) col += q[static_cast<std::int64_t>(r) * 4 + c];
    CHECK(col == doctest::Approx(4.0).epsilon(1e-6));
  }
}

TEST_CASE("video prototype loss at a prototype is tiny and K = 1 gives zero") {
  // K = 1: single-class cross entropy.
  Tensor protos1({1, 3}, {1, 0, 0});
  Tensor reps({2, 3}, {0.5, 0.5, 0, -1, 0, 0});
  CHECK(loss_prototype_video(reps, protos1, 0.1).value() == 0.0);

  // Representation at prototype 0, others orthogonal, tau_p = 0.1, K = 3.
  Tensor protos({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor at0({1, 3}, {1, 0, 0});
  const double expect = -std::log(std::exp(10.0) / (std::exp(10.0) + 2.0));
  CHECK(loss_prototype_video(at0, protos, 0.1).value() ==
        doctest::Approx(expect).epsilon(1e-9));
  CHECK(expect == doctest::Approx(9.1e-5).epsilon(0.01));
}

TEST_CASE("swapped prototype loss is symmetric in the views") {
  PrngStream s{61, 12};
  Tensor za = random_tensor(s, {6, 4});
  Tensor zb = random_tensor(s, {6, 4});
  Tensor protos = random_tensor(s, {3, 4});
  const double ab = loss_prototype_swapped(za, zb, protos, 0.1, 3).value();
  const double ba = loss_prototype_swapped(zb, za, protos, 0.1, 3).value();
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
}

TEST_CASE("classification loss closed forms") {
  Tensor uniform = Tensor::zeros({2, 4});
  CHECK(loss_classification(uniform, {0, 3}).value() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor margin({1, 3}, {10.0, 0.0, 0.0});
  CHECK(loss_classification(margin, {0}).value() ==
        doctest::Approx(std::log(1.0 + 2.0 * std::exp(-10.0))).epsilon(1e-9));

  CHECK_THROWS_AS((void)loss_classification(margin, {5}), std::out_of_range);
}

TEST_CASE("classification gradient matches finite differences") {
  PrngStream s{62, 13};
  std::vector<int> labels{1, 0, 2};
  auto f = [&](const Tensor& logits) { return loss_classification(logits, labels); };
  CHECK(finite_diff_check(f, random_tensor(s, {3, 3}), 1e-5) <= 1e-4);
}

TEST_CASE("losses stay finite under fuzzing") {
  PrngStream s{63, 14};
  for (int rep = 0; rep < 100; ++rep) {
    Tensor a = random_tensor(s, {4, 5}, -5.0, 5.0);
    Tensor b = random_tensor(s, {4, 5}, -5.0, 5.0);
    Tape tape;
    Tensor pa = tape.var(a);
    Tensor loss = add(add(loss_reconstruction({pa}, {b}), loss_infonce(pa, b, 0.1)),
                      loss_autoregressive({pa}, {b}));
    CHECK(std::isfinite(loss.value()));
    auto grads = tape.backward(loss);
    for (std::int64_t i = 0; i < grads.at(pa).size(); ++i)
      CHECK(std::isfinite(grads.at(pa)[i]));
  }
}
