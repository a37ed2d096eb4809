// tests/test_transducer.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "grad_check.h"
#include "rnnt/ops.h"
#include "rnnt/transducer.h"

using namespace rnnt;
using rnnt::testing::grad_close;

namespace {

LogitsLattice random_lattice(int t_len, int u, int width, std::mt19937_64& rng,
                             double stddev = 1.5) {
  LogitsLattice lat;
  lat.num_frames = t_len;
  lat.num_rows = u + 1;
  lat.width = width;
  lat.logits = Tensor::randn({t_len * (u + 1), width}, rng, stddev);
  return lat;
}

std::vector<int> random_targets(int u, int vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(1, vocab);
  std::vector<int> t(static_cast<size_t>(u));
  for (auto& y : t) y = pick(rng);
  return t;
}

double log_softmax_at(const LogitsLattice& lat, int t, int u, int k) {
  double mx = lat.z(t, u, 0);
  for (int i = 1; i < lat.width; ++i) mx = std::max(mx, lat.z(t, u, i));
  double z = 0.0;
  for (int i = 0; i < lat.width; ++i) z += std::exp(lat.z(t, u, i) - mx);
  return lat.z(t, u, k) - mx - std::log(z);
}

}  // namespace

TEST_CASE("single-path lattices by hand") {
  std::mt19937_64 rng(3);
  SUBCASE("all-blank path, T'=2 U=0") {
    auto lat = random_lattice(2, 0, 4, rng);
    auto v = rnnt_loss_value(lat, {}, {});
    const double expect =
        -(log_softmax_at(lat, 0, 0, 0) + log_softmax_at(lat, 1, 0, 0));
    CHECK(std::fabs(v.loss - expect) <= 1e-12);
  }
  SUBCASE("label then blank, T'=1 U=1") {
    auto lat = random_lattice(1, 1, 4, rng);
    auto v = rnnt_loss_value(lat, {2}, {});
    const double expect =
        -(log_softmax_at(lat, 0, 0, 2) + log_softmax_at(lat, 0, 1, 0));
    CHECK(std::fabs(v.loss - expect) <= 1e-12);
  }
  SUBCASE("uniform logits, T'=1 U=0, V=2") {
    LogitsLattice lat;
    lat.num_frames = 1;
    lat.num_rows = 1;
    lat.width = 3;
    lat.logits = Tensor::zeros({1, 3});
    auto v = rnnt_loss_value(lat, {}, {});
    CHECK(std::fabs(v.loss - (-std::log(1.0 / 3.0))) <= 1e-14);
  }
}

TEST_CASE("path enumeration count for T'=3 U=2") {
  // The final step must be the frame-exhausting blank at u=U, so the
  // valid interleavings number C(T'+U-1, U) = C(4,2) = 6.
  std::mt19937_64 rng(5);
  auto lat = random_lattice(3, 2, 5, rng);
  long paths = 0;
  brute_force_rnnt_loss(lat, {1, 3}, &paths);
  CHECK(paths == 6);

  long paths11 = 0;
  auto lat11 = random_lattice(1, 1, 3, rng);
  brute_force_rnnt_loss(lat11, {2}, &paths11);
  CHECK(paths11 == 1);
}

TEST_CASE("dp loss equals brute force on random instances") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(derive_seed(1000, seed));
    std::uniform_int_distribution<int> tl(1, 5), ul(0, 4), vl(2, 5);
    const int t_len = tl(rng), u = ul(rng), vocab = vl(rng);
    auto lat = random_lattice(t_len, u, vocab + 1, rng);
    auto targets = random_targets(u, vocab, rng);
    auto v = rnnt_loss_value(lat, targets, {});
    const double oracle = brute_force_rnnt_loss(lat, targets);
    CAPTURE(seed);
    CHECK(std::fabs(v.loss - oracle) <= 1e-10);
    CHECK(std::fabs(v.alpha_total - v.beta_total) <= 1e-9);
  }
}

TEST_CASE("lattice gradient matches finite differences") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(derive_seed(2000, seed));
    std::uniform_int_distribution<int> tl(1, 4), ul(0, 3), vl(2, 4);
    const int t_len = tl(rng), u = ul(rng), vocab = vl(rng);
    auto lat = random_lattice(t_len, u, vocab + 1, rng);
    auto targets = random_targets(u, vocab, rng);
    auto v = rnnt_loss_value(lat, targets, {});

    const double h = 1e-5;
    bool ok = true;
    double worst = 0.0;
    for (int64_t i = 0; i < lat.logits.numel(); ++i) {
      const double keep = lat.logits.at(i);
      lat.logits.at(i) = keep + h;
      const double up = rnnt_loss_value(lat, targets, {}).loss;
      lat.logits.at(i) = keep - h;
      const double down = rnnt_loss_value(lat, targets, {}).loss;
      lat.logits.at(i) = keep;
      const double fd = (up - down) / (2 * h);
      const double an = v.grad[static_cast<size_t>(i)];
      worst = std::max(worst,
                       std::fabs(an - fd) / std::max({1.0, std::fabs(an)}));
      ok = ok && grad_close(an, fd, 1e-5);
    }
    CAPTURE(seed);
    CAPTURE(worst);
    CHECK(ok);
  }
}

TEST_CASE("fastemit scales only non-blank gradient components") {
  std::mt19937_64 rng(17);
  auto lat = random_lattice(4, 3, 6, rng);
  auto targets = random_targets(3, 5, rng);

  LossConfig plain;
  LossConfig fe;
  fe.fastemit_lambda = 5e-3;
  auto g0 = rnnt_loss_value(lat, targets, plain);
  auto g1 = rnnt_loss_value(lat, targets, fe);

  CHECK(g0.loss == g1.loss);
  const int width = lat.width;
  for (size_t i = 0; i < g0.grad.size(); ++i) {
    if (i % static_cast<size_t>(width) == 0) {
      CHECK(g1.grad[i] == g0.grad[i]);  // blank untouched, bit-identical
    } else {
      CHECK(g1.grad[i] == g0.grad[i] * (1.0 + 5e-3));
    }
  }

  // lambda = 0 goes through the identical unregularized path.
  LossConfig zero;
  zero.fastemit_lambda = 0.0;
  auto gz = rnnt_loss_value(lat, targets, zero);
  CHECK(gz.grad == g0.grad);
}

TEST_CASE("per-node gradient sums vanish without fastemit") {
  std::mt19937_64 rng(23);
  auto lat = random_lattice(3, 2, 5, rng);
  auto targets = random_targets(2, 4, rng);
  auto v = rnnt_loss_value(lat, targets, {});
  for (int node = 0; node < lat.num_frames * lat.num_rows; ++node) {
    double s = 0.0;
    for (int k = 0; k < lat.width; ++k) {
      s += v.grad[static_cast<size_t>(node) * lat.width + k];
    }
    CHECK(std::fabs(s) <= 1e-12);
  }
}

TEST_CASE("loss is invariant to per-node logit shifts") {
  std::mt19937_64 rng(29);
  auto lat = random_lattice(4, 2, 5, rng);
  auto targets = random_targets(2, 4, rng);
  const double base = rnnt_loss_value(lat, targets, {}).loss;

  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  for (int node = 0; node < lat.num_frames * lat.num_rows; ++node) {
    const double c = shift(rng);
    for (int k = 0; k < lat.width; ++k) {
      lat.logits.at(node, k) += c;
    }
  }
  const double shifted = rnnt_loss_value(lat, targets, {}).loss;
  CHECK(std::fabs(base - shifted) <= 1e-9);
}

TEST_CASE("include_eou contract") {
  std::mt19937_64 rng(31);
  const int vocab = 4;
  const int eou = vocab + 1;  // width V+2, ids 1..V, EOU = V+1
  LossConfig cfg;
  cfg.include_eou = true;

  SUBCASE("finite iff target ends with EOU") {
    auto lat = random_lattice(3, 2, vocab + 2, rng);
    auto ok = rnnt_loss_value(lat, {2, eou}, cfg);
    CHECK(std::isfinite(ok.loss));
    auto bad = rnnt_loss_value(lat, {2, 3}, cfg);
    CHECK(std::isinf(bad.loss));
    for (double g : bad.grad) CHECK(g == 0.0);
  }
  SUBCASE("mid-sequence EOU rejected") {
    auto lat = random_lattice(3, 2, vocab + 2, rng);
    CHECK_THROWS(rnnt_loss_value(lat, {eou, 2}, cfg));
  }
  SUBCASE("eou-terminated loss agrees with brute force") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 r2(derive_seed(3000, seed));
      auto lat = random_lattice(3, 2, vocab + 2, r2);
      std::vector<int> targets = {
          std::uniform_int_distribution<int>(1, vocab)(r2), eou};
      auto v = rnnt_loss_value(lat, targets, cfg);
      CHECK(std::fabs(v.loss - brute_force_rnnt_loss(lat, targets)) <= 1e-10);
    }
  }
}

TEST_CASE("degenerate lattice shapes") {
  LogitsLattice empty;
  empty.num_frames = 0;
  empty.num_rows = 1;
  empty.width = 3;
  auto v = rnnt_loss_value(empty, {}, {});
  CHECK(v.loss == 0.0);

  LogitsLattice bad = empty;
  bad.num_rows = 2;
  CHECK_THROWS(rnnt_loss_value(bad, {1}, {}));
}

TEST_CASE("rnnt_loss integrates with the tape") {
  std::mt19937_64 rng(37);
  auto lat = random_lattice(3, 2, 5, rng);
  lat.logits.set_requires_grad(true);
  auto targets = random_targets(2, 4, rng);

  Graph graph;
  Tensor loss;
  {
    Graph::Scope scope(graph);
    loss = rnnt_loss(lat, targets, {});
  }
  graph.backward(loss);
  auto v = rnnt_loss_value(lat, targets, {});
  CHECK(loss.scalar() == v.loss);
  for (int64_t i = 0; i < lat.logits.numel(); ++i) {
    CHECK(lat.logits.grad()[i] == v.grad[static_cast<size_t>(i)]);
  }
}

TEST_CASE("endpointer cross entropy") {
  SUBCASE("uniform logits give ln 4") {
    Tensor logits = Tensor::zeros({5, 4});
    std::vector<int> labels = {0, 1, 2, 3, 0};
    Tensor loss = endpointer_ce_loss(logits, labels);
    CHECK(std::fabs(loss.scalar() - std::log(4.0)) <= 1e-14);
  }
  SUBCASE("confident correct logits saturate to zero") {
    Tensor logits = Tensor::zeros({3, 4});
    std::vector<int> labels = {2, 0, 3};
    for (int t = 0; t < 3; ++t) logits.at(t, labels[static_cast<size_t>(t)]) = 50.0;
    Tensor loss = endpointer_ce_loss(logits, labels);
    CHECK(loss.scalar() <= 1e-12);
  }
  SUBCASE("gradient matches finite differences") {
    std::mt19937_64 rng(41);
    Tensor logits = Tensor::randn({4, 4}, rng, 1.0);
    std::vector<int> labels = {3, 1, 0, 2};
    logits.set_requires_grad(true);
    Graph graph;
    Tensor loss;
    {
      Graph::Scope scope(graph);
      loss = endpointer_ce_loss(logits, labels);
    }
    graph.backward(loss);

    const double h = 1e-5;
    for (int64_t i = 0; i < logits.numel(); ++i) {
      const double keep = logits.at(i);
      logits.at(i) = keep + h;
      const double up = endpointer_ce_loss(logits, labels).scalar();
      logits.at(i) = keep - h;
      const double down = endpointer_ce_loss(logits, labels).scalar();
      logits.at(i) = keep;
      CHECK(grad_close(logits.grad()[i], (up - down) / (2 * h), 1e-5));
    }
  }
  SUBCASE("bad labels rejected") {
    Tensor logits = Tensor::zeros({1, 4});
    CHECK_THROWS(endpointer_ce_loss(logits, {4}));
    CHECK_THROWS(endpointer_ce_loss(logits, {-1}));
  }
}
