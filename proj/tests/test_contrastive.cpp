#include <cmath>

#include "cssl/contrastive.hpp"
#include "doctest.h"
#include "support/contrastive_fixtures.hpp"

using namespace cssl;
using namespace cssl::testing;

namespace {

// Direct evaluation of the loss, no stabilization and no norm checks.
double plain_loss(const Tensor& q, const Tensor& pos, const Tensor& neg, double tau) {
  auto dot = [](const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(ra, j) * b(rb, j);
    return s;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double num = std::exp(dot(q, i, pos, i) / tau);
    double den = num;
    for (std::size_t k = 0; k < neg.rows(); ++k) den += std::exp(dot(q, i, neg, k) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(q.rows());
}

Tensor stack(const std::vector<Tensor>& rows) {
  Tensor out({rows.size(), rows.front().size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j];
  return out;
}

}  // namespace

TEST_CASE("uniform similarities give ln(K+1)") {
  Rng rng(1);
  const Tensor q = random_unit_rows(rng, 1, 16);
  for (std::size_t k : {0u, 1u, 64u, 512u}) {
    for (double cosine : {0.3, -0.5, 1.0}) {
      const Tensor pos = with_cosine(rng, q, cosine);
      std::vector<Tensor> negs;
      for (std::size_t j = 0; j < k; ++j) negs.push_back(with_cosine(rng, q, cosine));
      const Tensor n = k == 0 ? Tensor({0, 16}) : stack(negs);
      CHECK(std::abs(info_nce_value(q, pos, n, 0.07) - std::log(static_cast<double>(k + 1))) < 1e-9);
    }
  }
}

TEST_CASE("empty queue gives zero loss") {
  Rng rng(2);
  const Tensor q = random_unit_rows(rng, 1, 8), pos = random_unit_rows(rng, 1, 8);
  CHECK(info_nce_value(q, pos, Tensor({0, 8}), 0.07) == 0.0);
  CHECK(info_nce_value(q, pos, Tensor(), 0.07) == 0.0);
}

TEST_CASE("separated pair matches the closed form") {
  const double tau = 0.07;
  Tensor q({1, 4}, {1, 0, 0, 0});
  Tensor neg({512, 4});
  for (std::size_t k = 0; k < 512; ++k) neg(k, 0) = -1.0;
  const double expected = std::log1p(512.0 * std::exp(-2.0 / tau));
  CHECK(expected == doctest::Approx(2.0e-10).epsilon(0.05));
  CHECK(std::abs(info_nce_value(q, q, neg, tau) - expected) < 1e-12);
  Tape t;
  CHECK(std::abs(info_nce(t.leaf(q), q, neg, tau).value().item() - expected) < 1e-12);
}

TEST_CASE("loss agrees with direct evaluation") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(5), k = rng.below(40), d = 2 + rng.below(10);
    const Tensor q = random_unit_rows(rng, b, d), pos = random_unit_rows(rng, b, d);
    const Tensor neg = k == 0 ? Tensor({0, d}) : random_unit_rows(rng, k, d);
    const double tau = rng.uniform(0.05, 1.0);
    Tape t;
    const double got = info_nce(t.leaf(q), pos, neg, tau).value().item();
    CHECK(std::abs(got - plain_loss(q, pos, neg, tau)) < 1e-10 * std::max(1.0, got));
  }
}

TEST_CASE("loss properties") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 8, k = 1 + rng.below(30);
    const Tensor q = random_unit_rows(rng, 1, d);
    const double tau = rng.uniform(0.05, 1.0);
    std::vector<Tensor> negs;
    for (std::size_t j = 0; j < k; ++j) negs.push_back(with_cosine(rng, q, rng.uniform(-0.9, 0.9)));
    const Tensor n = stack(negs);
    const double c = rng.uniform(-0.9, 0.8);
    const double base = info_nce_value(q, with_cosine(rng, q, c), n, tau);
    CHECK(base > 0.0);
    // raising the positive similarity lowers the loss
    CHECK(info_nce_value(q, with_cosine(rng, q, c + 0.1), n, tau) < base);
    // raising one negative similarity raises it
    std::vector<Tensor> bumped = negs;
    double cos0 = 0.0;
    for (std::size_t j = 0; j < d; ++j) cos0 += bumped[0][j] * q[j];
    bumped[0] = with_cosine(rng, q, std::min(1.0, cos0 + 0.1));
    CHECK(info_nce_value(q, with_cosine(rng, q, c), stack(bumped), tau) > base);
  }
}

TEST_CASE("gradient flows to queries only and matches differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(info_nce_gradcheck(seed) < 1e-4);

  // Full gradient (radial part included) against central differences of the
  // direct formula.
  Rng rng(5);
  const Tensor q = random_unit_rows(rng, 2, 5), pos = random_unit_rows(rng, 2, 5);
  const Tensor neg = random_unit_rows(rng, 7, 5);
  const double tau = 0.3;
  Tape t;
  const Var qv = t.leaf(q);
  t.backward(info_nce(qv, pos, neg, tau));
  const Tensor& g = t.grad(qv);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < q.size(); ++i) {
    Tensor hi = q, lo = q;
    hi[i] += eps;
    lo[i] -= eps;
    const double fd = (plain_loss(hi, pos, neg, tau) - plain_loss(lo, pos, neg, tau)) / (2 * eps);
    CHECK(std::abs(g[i] - fd) < 1e-8);
  }
}

TEST_CASE("loss input validation") {
  Rng rng(6);
  const Tensor q = random_unit_rows(rng, 1, 4), pos = random_unit_rows(rng, 1, 4);
  Tape t;
  CHECK_THROWS_AS(info_nce(t.leaf(q), pos, Tensor({0, 4}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(info_nce(t.leaf(q), pos, Tensor({0, 4}), -1.0), std::invalid_argument);
  Tensor off = q;
  off[0] += 1e-3;
  CHECK_THROWS_AS(info_nce(t.leaf(off), pos, Tensor({0, 4}), 0.07), std::invalid_argument);
  CHECK_THROWS_AS(info_nce_value(q, off, Tensor({0, 4}), 0.07), std::invalid_argument);
  Tensor tiny_off = q;
  tiny_off[0] *= 1.0 + 1e-8;
  CHECK_NOTHROW(info_nce_value(tiny_off, pos, Tensor({0, 4}), 0.07));
  CHECK_THROWS_AS(info_nce(t.leaf(q), random_unit_rows(rng, 2, 4), Tensor({0, 4}), 0.07), ShapeError);
}

TEST_CASE("queue warm-up and eviction") {
  Rng rng(7);
  KeyQueue queue(512, 8);
  const Tensor first = random_unit_rows(rng, 64, 8);
  queue.push(first);
  CHECK(queue.size() == 64);
  CHECK(queue.entries() == first);

  std::vector<Tensor> pushed{first};
  for (int b = 1; b < 8; ++b) {
    pushed.push_back(random_unit_rows(rng, 64, 8));
    queue.push(pushed.back());
  }
  CHECK(queue.full());
  const Tensor extra = random_unit_rows(rng, 64, 8);
  queue.push(extra);
  pushed.push_back(extra);
  CHECK(queue.size() == 512);
  const Tensor e = queue.entries();
  // oldest 64 gone, newest 64 at the tail
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(e(i, j) == pushed[1](i, j));
      CHECK(e(448 + i, j) == extra(i, j));
    }
}

TEST_CASE("queue replay oracle over scripted sequences") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cap = 1 + rng.below(40);
    KeyQueue queue(cap, 3);
    std::vector<std::vector<double>> all;
    for (int step = 0; step < 15; ++step) {
      const Tensor keys = random_unit_rows(rng, rng.below(12), 3);
      if (keys.rows() > 0) queue.push(keys);
      for (std::size_t i = 0; i < keys.rows(); ++i) all.emplace_back(keys.row_span(i).begin(), keys.row_span(i).end());
      const std::size_t expect = std::min(cap, all.size());
      REQUIRE(queue.size() == expect);
      const Tensor e = queue.entries();
      for (std::size_t i = 0; i < expect; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(e(i, j) == all[all.size() - expect + i][j]);
    }
  }
  KeyQueue q(4, 3);
  CHECK_THROWS_AS(q.push(Tensor({1, 3}, {1.0, 1.0, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(q.push(Tensor({1, 2}, {1.0, 0.0})), ShapeError);
  CHECK(q.size() == 0);
}

TEST_CASE("momentum update") {
  ParamSet k, q;
  k.add("w", Tensor({1, 1}, {1.0}));
  q.add("w", Tensor({1, 1}, {0.0}));
  ParamSet k1 = k;
  momentum_update(k1, q, 1.0);
  CHECK(k1 == k);
  momentum_update(k1, q, 0.0);
  CHECK(k1 == q);
  ParamSet k2 = k;
  momentum_update(k2, q, 0.999);
  CHECK(k2.at("w").item() == 0.999);

  Rng rng(9);
  ParamSet a, b;
  a.add("x", Tensor({3, 4}));
  b.add("x", Tensor({3, 4}));
  for (auto& v : a[0].values()) v = rng.normal();
  for (auto& v : b[0].values()) v = rng.normal();
  for (int step = 0; step < 100; ++step) {
    const Tensor before = a[0];
    momentum_update(a, b, 0.999);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(std::abs(std::abs(a[0][i] - b[0][i]) - 0.999 * std::abs(before[i] - b[0][i])) < 1e-12);
    }
  }

  ParamSet wrong;
  wrong.add("x", Tensor({4, 3}));
  CHECK_THROWS_AS(momentum_update(a, wrong, 0.5), ShapeError);
  CHECK_THROWS_AS(momentum_update(a, b, 1.5), std::invalid_argument);
}

TEST_CASE("moco state starts with identical encoders") {
  ParamSet p;
  p.add("w", Tensor({2, 2}, {1, 2, 3, 4}));
  MoCoState s(p, 16, MoCoConfig{});
  CHECK(s.key == s.query);
  CHECK(s.queue.capacity() == 512);
  CHECK(s.queue.size() == 0);
  MoCoConfig bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(MoCoState(p, 16, bad), std::invalid_argument);
}
