#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crl/eval.hpp"
#include "test_util.hpp"

using namespace crl;
using namespace crl::testutil;

namespace {

// Exhaustive assignment oracle for square |corr| matrices.
double brute_force_best(const std::vector<double>& value, int d) {
  std::vector<int> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    double total = 0.0;
    for (int i = 0; i < d; ++i) total += value[static_cast<std::size_t>(i) * d + perm[static_cast<std::size_t>(i)]];
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("correlation matrix diagonal cases") {
  PrngStream s{90, 1};
  Tensor z = random_tensor(s, {50, 3});
  std::vector<double> self = correlation_matrix(z, z, CorrMethod::kPearson);
  for (int i = 0; i < 3; ++i)
    CHECK(self[static_cast<std::size_t>(i) * 3 + i] == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> flipped = correlation_matrix(neg(z), z, CorrMethod::kPearson);
  for (int i = 0; i < 3; ++i)
    CHECK(flipped[static_cast<std::size_t>(i) * 3 + i] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("spearman is invariant to cubing") {
  PrngStream s{91, 2};
  Tensor z = random_tensor(s, {100, 2});
  std::vector<double> cubed_data = z.data();
  for (auto& v : cubed_data) v = v * v * v;
  Tensor cubed(z.shape(), cubed_data);
  std::vector<double> base = correlation_matrix(z, z, CorrMethod::kSpearman);
  std::vector<double> after = correlation_matrix(cubed, z, CorrMethod::kSpearman);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(after[i] == doctest::Approx(base[i]).epsilon(1e-12));
}

TEST_CASE("constant columns zero out with a warning") {
  PrngStream s{92, 3};
  Tensor z = random_tensor(s, {30, 2});
  std::vector<double> flat = z.data();
  for (int r = 0; r < 30; ++r) flat[static_cast<std::size_t>(r) * 2] = 5.0;
  bool warn = false;
  std::vector<double> corr = correlation_matrix(Tensor({30, 2}, flat), z, CorrMethod::kPearson, &warn);
  CHECK(warn);
  CHECK(corr[0] == 0.0);
  CHECK(corr[1] == 0.0);
  CHECK_THROWS_AS((void)correlation_matrix(Tensor({2, 1}, {1, 2}), Tensor({2, 1}, {1, 2}),
                                           CorrMethod::kPearson),
                  std::invalid_argument);
}

TEST_CASE("mcc of the identity and of per-coordinate affine maps is 1") {
  PrngStream s{93, 4};
  Tensor z = random_tensor(s, {200, 4});
  CHECK(mcc(z, z, CorrMethod::kPearson).first == doctest::Approx(1.0).epsilon(1e-12));

  // Permute, sign-flip and affine-scale each coordinate.
  std::vector<int> perm{2, 0, 3, 1};
  std::vector<double> scalev{1.7, -0.4, 2.2, -3.0};
  std::vector<double> offset{0.3, -1.0, 2.0, 0.0};
  std::vector<double> mapped(static_cast<std::size_t>(200) * 4);
  for (int r = 0; r < 200; ++r)
    for (int c = 0; c < 4; ++c)
      mapped[static_cast<std::size_t>(r) * 4 + static_cast<std::size_t>(c)] =
          scalev[static_cast<std::size_t>(c)] * z[static_cast<std::int64_t>(r) * 4 + perm[static_cast<std::size_t>(c)]] +
          offset[static_cast<std::size_t>(c)];
  auto [value, assign] = mcc(Tensor({200, 4}, mapped), z, CorrMethod::kPearson);
  CHECK(value == doctest::Approx(1.0).epsilon(1e-12));
  for (int c = 0; c < 4; ++c) CHECK(assign[static_cast<std::size_t>(c)] == perm[static_cast<std::size_t>(c)]);
}

TEST_CASE("assignment optimality equals brute force on random matrices") {
  PrngStream s{94, 5};
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 2 + static_cast<int>(draw_index(s, 6));  // up to 7
    std::vector<double> value = draw_uniform_vec(s, static_cast<std::size_t>(d) * d);
    auto [got, assign] = mcc_from_corr(value, d, d);
    CHECK(got * d == doctest::Approx(brute_force_best(value, d)).epsilon(1e-12));
  }
}

TEST_CASE("rectangular assignments stay injective") {
  PrngStream s{95, 6};
  // More learned dims than true dims.
  Tensor z = random_tensor(s, {300, 2});
  std::vector<double> wide(static_cast<std::size_t>(300) * 4);
  for (int r = 0; r < 300; ++r) {
    wide[static_cast<std::size_t>(r) * 4 + 0] = z[static_cast<std::int64_t>(r) * 2 + 0];
    wide[static_cast<std::size_t>(r) * 4 + 1] = z[static_cast<std::int64_t>(r) * 2 + 1];
    wide[static_cast<std::size_t>(r) * 4 + 2] = draw_standard_normal(s);
    wide[static_cast<std::size_t>(r) * 4 + 3] = draw_standard_normal(s);
  }
  auto [value, assign] = mcc(Tensor({300, 4}, wide), z, CorrMethod::kPearson);
  CHECK(value == doctest::Approx(1.0).epsilon(1e-6));
  int assigned = 0;
  std::vector<bool> used(2, false);
  for (int i = 0; i < 4; ++i)
    if (assign[static_cast<std::size_t>(i)] >= 0) {
      ++assigned;
      CHECK_FALSE(used[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]);
      used[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] = true;
    }
  CHECK(assigned == 2);
}

TEST_CASE("r2 recovers realizable linear maps and rejects noise") {
  PrngStream s{96, 7};
  const int n = 2000;
  Tensor zh = random_tensor(s, {n, 3});
  // Z* = A z + b with a well-conditioned A.
  std::vector<double> a{1.0, 0.3, -0.2, 0.1, 1.2, 0.4, -0.3, 0.2, 0.9};
  std::vector<double> target(static_cast<std::size_t>(n) * 3);
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < 3; ++i) {
      double acc = 0.5;  // offset
      for (int j = 0; j < 3; ++j) acc += a[static_cast<std::size_t>(i) * 3 + j] * zh[static_cast<std::int64_t>(r) * 3 + j];
      target[static_cast<std::size_t>(r) * 3 + static_cast<std::size_t>(i)] = acc;
    }
  CHECK(r2_score(zh, Tensor({n, 3}, target), 1e-3) >= 0.999);

  // Independent noise: summary stays near zero.
  Tensor indep = random_tensor(s, {10000, 3});
  Tensor noise = random_tensor(s, {10000, 2});
  CHECK(r2_score(indep, noise, 1e-3) <= 0.05);
}

TEST_CASE("extreme ridge pulls predictions to the fit mean") {
  PrngStream s{97, 8};
  Tensor zh = random_tensor(s, {400, 2});
  Tensor zt = random_tensor(s, {400, 2});
  std::vector<double> raw;
  (void)r2_score(zh, zt, 1e12, &raw);
  for (double v : raw) CHECK(std::abs(v) <= 0.05);
  CHECK_THROWS_AS((void)r2_score(Tensor({10, 1}, std::vector<double>(10, 1.0)),
                                 Tensor({10, 1}, std::vector<double>(10, 1.0)), 1e-3),
                  std::invalid_argument);
}

TEST_CASE("report fixture renders the six video rows") {
  std::vector<ReportRow> rows{
      {"Reconstruction (TDRL)", "tdrl", 0.25, 0, 0.82, 0, 1, "pearson"},
      {"Contrastive Learning", "tdrl", 0.36, 0, 0.92, 0, 1, "pearson"},
      {"Next-Frame Prediction", "tdrl", 0.24, 0, 0.82, 0, 1, "pearson"},
      {"Mid-Latent Reconstruction", "tdrl", 0.08, 0, 0.69, 0, 1, "pearson"},
      {"Prototype-based Learning", "tdrl", 0.16, 0, 0.80, 0, 1, "pearson"},
      {"Masked Reconstruction", "tdrl", 0.08, 0, 0.72, 0, 1, "pearson"},
  };
  const std::string md = emit_report_markdown(rows);
  CHECK(md.find("| Task | Constraint | MCC | R2 | Seeds | Method |") != std::string::npos);
  CHECK(md.find("Reconstruction (TDRL) | tdrl | 0.25") != std::string::npos);
  CHECK(md.find("Contrastive Learning | tdrl | 0.36") != std::string::npos);
  CHECK(md.find("0.92") != std::string::npos);
  CHECK(md.find("Masked Reconstruction | tdrl | 0.08") != std::string::npos);
  // Row order is preserved.
  CHECK(md.find("Reconstruction (TDRL)") < md.find("Contrastive Learning"));
  CHECK(md.find("Prototype-based Learning") < md.find("Masked Reconstruction"));
}

TEST_CASE("single-row reports and csv round trips") {
  std::vector<ReportRow> rows{{"reconstruction", "vae_kl", 0.123456789, 0.01, 0.87654321,
                               0.002, 5, "pearson"}};
  const std::string csv = emit_report_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one row
  std::vector<ReportRow> back = parse_report_csv(csv);
  REQUIRE(back.size() == 1);
  CHECK(back[0].task == "reconstruction");
  CHECK(back[0].mcc_mean == rows[0].mcc_mean);
  CHECK(back[0].mcc_std == rows[0].mcc_std);
  CHECK(back[0].r2_mean == rows[0].r2_mean);
  CHECK(back[0].r2_std == rows[0].r2_std);
  CHECK(back[0].seeds == 5);
}

TEST_CASE("mcc stays within bounds on fuzzed inputs") {
  PrngStream s{98, 9};
  for (int rep = 0; rep < 20; ++rep) {
    Tensor zh = random_tensor(s, {50, 3});
    Tensor zt = random_tensor(s, {50, 4});
    auto [value, assign] = mcc(zh, zt, CorrMethod::kPearson);
    CHECK(value >= 0.0);
    CHECK(value <= 1.0);
  }
}
