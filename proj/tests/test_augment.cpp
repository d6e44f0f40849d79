#include <cmath>
#include <numbers>
#include <set>

#include "cssl/augment.hpp"
#include "doctest.h"
#include "support/augment_trials.hpp"

using namespace cssl;
using cssl::testing::random_connectome;

namespace {

Connectome pair_matrix(double x) {
  return Connectome::from_matrix(Tensor::from_rows({{1, x}, {x, 1}}));
}

}  // namespace

TEST_CASE("select_nodes bounds") {
  Rng rng(1);
  AugmentConfig zero;
  zero.k_min = zero.k_max = 0;
  CHECK(select_nodes(10, zero, rng).empty());

  AugmentConfig cfg;  // 5..20
  for (int i = 0; i < 200; ++i) {
    auto s = select_nodes(200, cfg, rng);
    CHECK(s.size() >= 5);
    CHECK(s.size() <= 20);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == s.size());
    for (auto n : s) CHECK(n < 200);
  }

  Rng a(9), b(9);
  CHECK(select_nodes(200, cfg, a) == select_nodes(200, cfg, b));

  CHECK_THROWS_AS(select_nodes(10, cfg, rng), std::invalid_argument);
}

TEST_CASE("select_nodes is uniform over nodes") {
  Rng rng(2);
  AugmentConfig cfg;
  cfg.k_min = cfg.k_max = 3;
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t)
    for (auto n : select_nodes(10, cfg, rng)) ++hits[n];
  for (int h : hits) CHECK(std::abs(h - trials * 3 / 10) < 300);
}

TEST_CASE("shrinking by |C| deletes the node") {
  Rng rng(3);
  const Connectome c = random_connectome(rng, 8);
  const std::size_t node = 5;
  NodeEdit edit{node, Direction::shrink};
  auto out = apply_dilate_shrink(c, std::span(&edit, 1),
                                 [&](std::size_t n, std::size_t v) { return std::abs(c(n, v)); });
  for (std::size_t v = 0; v < 8; ++v) {
    if (v == node) {
      CHECK(out(node, node) == 1.0);
      continue;
    }
    CHECK(out(node, v) == 0.0);
    CHECK(out(v, node) == 0.0);
  }
}

TEST_CASE("dilation clamps and keeps sign") {
  NodeEdit edit{0, Direction::dilate};
  auto hi = apply_dilate_shrink(pair_matrix(0.95), std::span(&edit, 1),
                                [](std::size_t, std::size_t) { return 0.2; });
  CHECK(hi(0, 1) == 1.0);
  auto neg = apply_dilate_shrink(pair_matrix(-0.3), std::span(&edit, 1),
                                 [](std::size_t, std::size_t) { return 0.1; });
  CHECK(neg(0, 1) == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(neg(1, 0) == neg(0, 1));

  NodeEdit shrink{1, Direction::shrink};
  auto zero = apply_dilate_shrink(pair_matrix(-0.3), std::span(&shrink, 1),
                                  [](std::size_t, std::size_t) { return 0.5; });
  CHECK(zero(0, 1) == 0.0);
}

TEST_CASE("edge between two edited nodes follows the lower index") {
  Tensor m = Tensor::identity(4);
  m(1, 3) = m(3, 1) = 0.5;
  const auto c = Connectome::from_matrix(m);
  std::vector<NodeEdit> edits{{1, Direction::dilate}, {3, Direction::shrink}};
  int calls_for_pair = 0;
  auto out = apply_dilate_shrink(c, edits, [&](std::size_t n, std::size_t v) {
    if ((n == 1 && v == 3) || (n == 3 && v == 1)) ++calls_for_pair;
    return 0.1;
  });
  CHECK(calls_for_pair == 1);
  CHECK(out(1, 3) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("background noise identities") {
  Rng rng(4);
  const Connectome c = random_connectome(rng, 12);
  AugmentConfig cfg;
  cfg.noise = NoiseSpec::none();
  CHECK(background_noise(c, {}, cfg, rng) == c);
  cfg.noise = NoiseSpec::gaussian(0.0);
  CHECK(background_noise(c, {}, cfg, rng) == c);
}

TEST_CASE("background noise magnitude matches the half-normal mean") {
  // E|eps| = sigma * sqrt(2/pi) for eps ~ N(0, sigma^2). Start from a matrix
  // with small correlations so clamping never triggers.
  const double sigma = 0.01;
  const std::size_t v = 200;
  Tensor m = Tensor::identity(v);
  Rng init(5);
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = i + 1; j < v; ++j) m(i, j) = m(j, i) = init.uniform(-0.5, 0.5);
  const auto c = Connectome::from_matrix(m);
  AugmentConfig cfg;
  cfg.noise = NoiseSpec::gaussian(sigma);
  const double expected = sigma * std::sqrt(2.0 / std::numbers::pi);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto out = background_noise(c, {}, cfg, rng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = i + 1; j < v; ++j, ++count) total += std::abs(out(i, j) - c(i, j));
    CHECK(std::abs(total / count - expected) < 0.1 * expected);
  }
}

TEST_CASE("view pairs") {
  Rng rng(7);
  const Connectome c = random_connectome(rng, 200);

  AugmentConfig noop;
  noop.k_min = noop.k_max = 0;
  noop.noise = NoiseSpec::none();
  auto same = make_view_pair(c, noop, rng);
  CHECK(same.first == c);
  CHECK(same.second == c);

  AugmentConfig cfg;
  int collisions = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng r(seed);
    auto p = make_view_pair(c, cfg, r, "s");
    CHECK(satisfies_connectome_invariants(p.first.matrix()));
    CHECK(satisfies_connectome_invariants(p.second.matrix()));
    if (p.first == c || p.second == c || p.first == p.second) ++collisions;
  }
  CHECK(collisions == 0);
}

TEST_CASE("augmentation invariants over randomized trials") {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto r = cssl::testing::augmentation_trial(seed);
    if (!r.ok()) {
      ++failures;
      MESSAGE("seed " << seed << ": " << r.violations.front());
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("noise spec parsing") {
  CHECK(NoiseSpec::parse("none").kind == NoiseKind::none);
  auto g = NoiseSpec::parse("N(0, 0.01)");
  CHECK(g.kind == NoiseKind::gaussian);
  CHECK(g.sigma == 0.01);
  CHECK(NoiseSpec::parse("gaussian(0.1)").sigma == 0.1);
  auto u = NoiseSpec::parse("uniform(-0.1, 0.1)");
  CHECK(u.kind == NoiseKind::uniform);
  CHECK(u.lo == -0.1);
  CHECK(u.hi == 0.1);
  CHECK(NoiseSpec::parse(u.to_string()).hi == 0.1);
  CHECK_THROWS_AS(NoiseSpec::parse("poisson(2)"), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSpec::parse("N(1, 0.1)"), std::invalid_argument);
}

TEST_CASE("config validation") {
  AugmentConfig cfg;
  CHECK_NOTHROW(cfg.validate(20));
  cfg.delta_max = 0.0;
  CHECK_THROWS_AS(cfg.validate(20), std::invalid_argument);
  cfg.delta_max = 0.5;
  cfg.k_min = 6;
  cfg.k_max = 5;
  CHECK_THROWS_AS(cfg.validate(20), std::invalid_argument);
  cfg.k_min = 0;
  cfg.noise = NoiseSpec::gaussian(-1.0);
  CHECK_THROWS_AS(cfg.validate(20), std::invalid_argument);
}
