#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "crl/container.hpp"
#include "crl/linalg.hpp"
#include "crl/scm.hpp"
#include "test_util.hpp"

using namespace crl;
using namespace crl::testutil;

namespace {

// Reachability oracle independent of DagSpec internals: repeated boolean
// matrix products.
bool oracle_has_cycle(const DagSpec& dag) {
  const int d = dag.d;
  std::vector<std::vector<bool>> reach = dag.edges;
  for (int step = 0; step < d; ++step)
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k)
        if (reach[i][k])
          for (int j = 0; j < d; ++j)
            if (dag.edges[k][j]) reach[i][j] = true;
  for (int i = 0; i < d; ++i)
    if (reach[i][i]) return true;
  return false;
}

std::vector<int> oracle_descendants(const DagSpec& dag, const std::vector<int>& targets) {
  const int d = dag.d;
  std::vector<std::vector<bool>> reach = dag.edges;
  for (int step = 0; step < d; ++step)
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k)
        if (reach[i][k])
          for (int j = 0; j < d; ++j)
            if (dag.edges[k][j]) reach[i][j] = true;
  std::vector<bool> in(static_cast<std::size_t>(d), false);
  for (int t : targets) {
    in[static_cast<std::size_t>(t)] = true;
    for (int j = 0; j < d; ++j)
      if (reach[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)])
        in[static_cast<std::size_t>(j)] = true;
  }
  std::vector<int> out;
  for (int j = 0; j < d; ++j)
    if (in[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("sample_dag edge-probability extremes") {
  PrngStream s{1, 100};
  DagSpec empty = sample_dag(4, 0.0, s);
  int edges = 0;
  for (const auto& row : empty.edges)
    for (bool e : row) edges += e ? 1 : 0;
  CHECK(edges == 0);

  DagSpec full = sample_dag(3, 1.0, s);
  edges = 0;
  for (const auto& row : full.edges)
    for (bool e : row) edges += e ? 1 : 0;
  CHECK(edges == 3);  // full lower triangle under the order
  CHECK(full.is_acyclic());
}

TEST_CASE("sampled dags pass the brute-force cycle oracle") {
  PrngStream s{2, 101};
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 2 + static_cast<int>(draw_index(s, 7));
    DagSpec dag = sample_dag(d, draw_uniform01(s), s);
    CHECK_FALSE(oracle_has_cycle(dag));
    CHECK(dag.is_acyclic());
  }
}

TEST_CASE("descendants and invariant set against the oracle") {
  DagSpec chain;
  chain.d = 3;
  chain.order = {0, 1, 2};
  chain.edges = {{false, true, false}, {false, false, true}, {false, false, false}};
  CHECK(descendants(chain, {1}) == std::vector<int>{1, 2});
  CHECK(invariant_set(chain, {1}) == std::vector<int>{0});
  CHECK(invariant_set(chain, {}) == std::vector<int>{0, 1, 2});
  CHECK(invariant_set(chain, {0, 1, 2}) == std::vector<int>{});

  PrngStream s{3, 102};
  for (int rep = 0; rep < 30; ++rep) {
    DagSpec dag = sample_dag(5, 0.4, s);
    std::vector<int> targets;
    for (int j = 0; j < 5; ++j)
      if (draw_uniform01(s) < 0.3) targets.push_back(j);
    CHECK(descendants(dag, targets) == oracle_descendants(dag, targets));
  }
  CHECK_THROWS_AS((void)descendants(chain, {7}), std::out_of_range);
}

TEST_CASE("empty-dag unit-gaussian latents have near-identity covariance") {
  PrngStream s{4, 103};
  StaticScm scm;
  scm.dag = sample_dag(3, 0.0, s);
  scm.mechanisms = sample_mechanisms(scm.dag, MechanismKind::kLinear, NoiseKind::kGaussian, 1.0, s);
  Dataset ds = generate_static(scm, identity_mixing(3), single_environment(3), 10000, s);
  double cov[3][3] = {};
  double mean[3] = {};
  for (int e = 0; e < ds.episodes; ++e)
    for (int j = 0; j < 3; ++j) mean[j] += ds.z(e, 0, j);
  for (double& m : mean) m /= ds.episodes;
  for (int e = 0; e < ds.episodes; ++e)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        cov[i][j] += (ds.z(e, 0, i) - mean[i]) * (ds.z(e, 0, j) - mean[j]);
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(cov[i][j] / ds.episodes - target));
    }
  CHECK(worst <= 0.08);
}

TEST_CASE("identity mixing passes latents through unchanged") {
  PrngStream s{5, 104};
  DagSpec dag = sample_dag(4, 0.5, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kLinear, NoiseKind::kGaussian, 1.0, s)};
  Dataset ds = generate_static(scm, identity_mixing(4), single_environment(4), 50, s);
  CHECK(ds.z_true == ds.x_obs);
}

TEST_CASE("environment noise modulation scales the variance") {
  PrngStream s{6, 105};
  DagSpec dag = sample_dag(2, 0.0, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kLinear, NoiseKind::kGaussian, 1.0, s)};
  EnvironmentSpec envs = single_environment(2);
  envs.env_count = 2;
  envs.noise_scale.push_back({2.0, 1.0});  // env 1 doubles node-0 noise
  envs.weight_scale.push_back({1.0, 1.0});
  Dataset ds = generate_static(scm, identity_mixing(2), envs, 20000, s);
  double var = 0.0;
  int count = 0;
  for (int e = 0; e < ds.episodes; ++e)
    if (ds.u[static_cast<std::size_t>(e)] == 1) {
      var += ds.z(e, 0, 0) * ds.z(e, 0, 0);
      ++count;
    }
  var /= count;
  CHECK(std::abs(var - 4.0) <= 0.3);
}

TEST_CASE("mlp mechanisms produce finite, parent-dependent values") {
  PrngStream s{60, 160};
  DagSpec dag = sample_dag(3, 1.0, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kMlp, NoiseKind::kLaplace, 1.0, s)};
  Dataset ds = generate_static(scm, identity_mixing(3), single_environment(3), 200, s);
  for (double v : ds.z_true) CHECK(std::isfinite(v));
}

TEST_CASE("zero-weight diagonal dynamics give white noise") {
  TemporalScmSpec t;
  PrngStream s{7, 106};
  t.base = sample_dag(2, 0.0, s);
  t.instantaneous_enabled = false;
  t.delayed.assign(1, std::vector<std::vector<bool>>(2, std::vector<bool>(2, false)));
  t.delayed[0][0][0] = t.delayed[0][1][1] = true;
  t.nodes.assign(2, NodeMechanism{});
  for (auto& m : t.nodes) {
    m.kind = MechanismKind::kLinear;
    m.linear_w = {0.0};
    m.noise = NoiseKind::kGaussian;
    m.noise_param = 1.0;
  }
  Dataset ds = generate_temporal(t, 12500, 8, s);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> prev, cur;
    for (int e = 0; e < ds.episodes; ++e)
      for (int step = 1; step < ds.time_steps; ++step) {
        prev.push_back(ds.z(e, step - 1, j));
        cur.push_back(ds.z(e, step, j));
      }
    CHECK(std::abs(pearson(prev, cur)) <= 0.05);
  }
}

TEST_CASE("temporal generation is deterministic given the stream") {
  PrngStream s1{8, 107};
  PrngStream s2{8, 107};
  TemporalScmSpec t1 = sample_temporal_scm(3, 2, 0.4, 0.3, true, MechanismKind::kLinear,
                                           NoiseKind::kGaussian, 1.0, s1);
  TemporalScmSpec t2 = sample_temporal_scm(3, 2, 0.4, 0.3, true, MechanismKind::kLinear,
                                           NoiseKind::kGaussian, 1.0, s2);
  Dataset a = generate_temporal(t1, 5, 6, s1);
  Dataset b = generate_temporal(t2, 5, 6, s2);
  CHECK(a.z_true == b.z_true);
}

TEST_CASE("instantaneous edge induces same-step correlation") {
  TemporalScmSpec t;
  PrngStream s{9, 108};
  t.base.d = 2;
  t.base.order = {0, 1};
  t.base.edges = {{false, true}, {false, false}};  // 0 -> 1 same step
  t.instantaneous_enabled = true;
  t.delayed.assign(1, std::vector<std::vector<bool>>(2, std::vector<bool>(2, false)));
  t.nodes.assign(2, NodeMechanism{});
  for (auto& m : t.nodes) {
    m.kind = MechanismKind::kLinear;
    m.noise = NoiseKind::kGaussian;
    m.noise_param = 1.0;
  }
  t.nodes[1].linear_w = {1.0};  // unit weight on the instantaneous parent
  Dataset ds = generate_temporal(t, 2000, 10, s);
  std::vector<double> z0, z1;
  for (int e = 0; e < ds.episodes; ++e)
    for (int step = 1; step < ds.time_steps; ++step) {
      z0.push_back(ds.z(e, step, 0));
      z1.push_back(ds.z(e, step, 1));
    }
  CHECK(pearson(z0, z1) > 0.7);  // analytic value 1/sqrt(2)
}

TEST_CASE("instantaneous edges rejected when disabled") {
  TemporalScmSpec t;
  PrngStream s{10, 109};
  t.base.d = 2;
  t.base.order = {0, 1};
  t.base.edges = {{false, true}, {false, false}};
  t.instantaneous_enabled = false;
  t.delayed.assign(1, std::vector<std::vector<bool>>(2, std::vector<bool>(2, false)));
  t.nodes.assign(2, NodeMechanism{});
  t.nodes[1].linear_w = {1.0};
  CHECK_THROWS_AS((void)generate_temporal(t, 2, 4, s), std::invalid_argument);
}

TEST_CASE("no-instantaneous latents are conditionally uncorrelated given history") {
  PrngStream s{11, 110};
  TemporalScmSpec t = sample_temporal_scm(3, 1, 0.5, 0.0, false, MechanismKind::kLinear,
                                          NoiseKind::kGaussian, 1.0, s);
  Dataset ds = generate_temporal(t, 12500, 9, s);
  const int d = 3;
  // Residualize each current coordinate on the previous step, then check
  // pairwise correlations of the residuals.
  std::vector<std::vector<double>> cond(static_cast<std::size_t>(d));
  std::vector<std::vector<double>> cur(static_cast<std::size_t>(d));
  std::vector<double> ones;
  std::vector<std::vector<double>> hist(static_cast<std::size_t>(d));
  for (int e = 0; e < ds.episodes; ++e)
    for (int step = 1; step < ds.time_steps; ++step) {
      for (int j = 0; j < d; ++j) {
        cur[static_cast<std::size_t>(j)].push_back(ds.z(e, step, j));
        hist[static_cast<std::size_t>(j)].push_back(ds.z(e, step - 1, j));
      }
    }
  const std::size_t rows = cur[0].size();
  const int p = d + 1;  // history plus intercept
  std::vector<double> xtx(static_cast<std::size_t>(p) * p, 0.0);
  auto xrow = [&](std::size_t r, int c) -> double {
    return c < d ? hist[static_cast<std::size_t>(c)][r] : 1.0;
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) xtx[static_cast<std::size_t>(i) * p + j] += xrow(r, i) * xrow(r, j);
  for (int i = 0; i < p; ++i) xtx[static_cast<std::size_t>(i) * p + i] += 1e-9;

  std::vector<std::vector<double>> resid(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    std::vector<double> xty(static_cast<std::size_t>(p), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (int i = 0; i < p; ++i) xty[static_cast<std::size_t>(i)] += xrow(r, i) * cur[static_cast<std::size_t>(j)][r];
    std::vector<double> beta = cholesky_solve(xtx, p, xty, 1);
    resid[static_cast<std::size_t>(j)].resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double pred = 0.0;
      for (int i = 0; i < p; ++i) pred += beta[static_cast<std::size_t>(i)] * xrow(r, i);
      resid[static_cast<std::size_t>(j)][r] = cur[static_cast<std::size_t>(j)][r] - pred;
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      CHECK(std::abs(pearson(resid[static_cast<std::size_t>(i)], resid[static_cast<std::size_t>(j)])) <= 0.05);
}

TEST_CASE("mixing is injective on random pairs and well conditioned") {
  PrngStream s{12, 111};
  MixingSpec mix = sample_mixing(3, 6, 2, s);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> a = draw_normal_vec(s, 3), b = draw_normal_vec(s, 3);
    bool same = true;
    for (int j = 0; j < 3; ++j) same = same && a[static_cast<std::size_t>(j)] == b[static_cast<std::size_t>(j)];
    if (same) continue;
    const std::vector<double> xa = mix.apply(a), xb = mix.apply(b);
    double dist = 0.0;
    for (std::size_t i = 0; i < xa.size(); ++i) dist += (xa[i] - xb[i]) * (xa[i] - xb[i]);
    CHECK(dist > 0.0);
  }
}

TEST_CASE("paired views: null intervention and do-values") {
  PrngStream s{13, 112};
  DagSpec dag = sample_dag(4, 0.5, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kLinear, NoiseKind::kGaussian, 1.0, s)};
  MixingSpec mix = sample_mixing(4, 5, 1, s);

  PairedViews null_pair = generate_paired(scm, mix, InterventionSpec{}, 64, s);
  CHECK(null_pair.v1.z_true == null_pair.v2.z_true);
  CHECK(null_pair.v1.x_obs == null_pair.v2.x_obs);
  CHECK(null_pair.invariant.size() == 4);

  InterventionSpec iv;
  iv.targets = {1};
  iv.kind = InterventionSpec::Kind::kDoValue;
  iv.value = 0.7;
  PairedViews pv = generate_paired(scm, mix, iv, 64, s);
  for (int e = 0; e < 64; ++e) CHECK(pv.v2.z(e, 0, 1) == 0.7);

  // Invariant coordinates agree bitwise: shared exogenous noise.
  for (int e = 0; e < 64; ++e)
    for (int a : pv.invariant) CHECK(pv.v1.z(e, 0, a) == pv.v2.z(e, 0, a));
}

TEST_CASE("noise-shift interventions keep invariant coordinates bitwise equal") {
  PrngStream s{14, 113};
  DagSpec dag = sample_dag(5, 0.4, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kMlp, NoiseKind::kGaussian, 1.0, s)};
  InterventionSpec iv;
  iv.targets = {0, 2};
  iv.kind = InterventionSpec::Kind::kNoiseShift;
  iv.value = 1.5;
  PairedViews pv = generate_paired(scm, identity_mixing(5), iv, 128, s);
  for (int e = 0; e < 128; ++e)
    for (int a : pv.invariant) CHECK(pv.v1.z(e, 0, a) == pv.v2.z(e, 0, a));
}

TEST_CASE("dataset container round trip is bitwise") {
  PrngStream s{15, 114};
  DagSpec dag = sample_dag(3, 0.5, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kLinear, NoiseKind::kLaplace, 0.8, s)};
  Dataset ds = generate_static(scm, sample_mixing(3, 4, 1, s),
                               sample_environments(3, 2, 0.5, 2.0, 1.0, 1.0, s), 32, s);
  const std::string path = "/tmp/crl_test_dataset.bin";
  save_dataset(path, ds);
  Dataset back = load_dataset(path);
  CHECK(back.z_true == ds.z_true);
  CHECK(back.x_obs == ds.x_obs);
  CHECK(back.u == ds.u);
  CHECK(back.spec_hash == ds.spec_hash);
  CHECK(back.seed == ds.seed);
  CHECK(back.episodes == ds.episodes);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt and foreign files are rejected") {
  PrngStream s{16, 115};
  DagSpec dag = sample_dag(2, 0.0, s);
  StaticScm scm{dag, sample_mechanisms(dag, MechanismKind::kLinear, NoiseKind::kGaussian, 1.0, s)};
  Dataset ds = generate_static(scm, identity_mixing(2), single_environment(2), 8, s);
  const std::string path = "/tmp/crl_test_corrupt.bin";
  save_dataset(path, ds);

  // Truncate the payload.
  std::string blob;
  {
    std::ifstream in(path, std::ios::binary);
    blob.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size() - 16));
  }
  CHECK_THROWS_AS((void)load_dataset(path), ContainerCorruptError);

  // Foreign magic bytes.
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_AS((void)load_dataset(path), ContainerFormatError);
  std::filesystem::remove(path);
}
