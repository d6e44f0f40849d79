#include <algorithm>
#include <cmath>
#include <numeric>

#include "cssl/model.hpp"
#include "doctest.h"
#include "support/model_fixtures.hpp"

using namespace cssl;
using namespace cssl::testing;

namespace {

// ---- reference computations written with plain loops ----

Tensor ref_affine(const Tensor& x, const ParamSet& p, const std::string& pre) {
  const Tensor& w = p.at(pre + "w");
  const Tensor& b = p.at(pre + "b");
  Tensor y({x.rows(), w.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b(0, j);
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
      y(i, j) = s;
    }
  return y;
}

Tensor ref_layer_norm(const Tensor& x, const ParamSet& p, const std::string& pre, double eps) {
  Tensor y(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x(i, j) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) var += (x(i, j) - mu) * (x(i, j) - mu) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j)
      y(i, j) = (x(i, j) - mu) / std::sqrt(var + eps) * p.at(pre + "gamma")(0, j) + p.at(pre + "beta")(0, j);
  }
  return y;
}

Tensor ref_softmax_rows(Tensor s) {
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double mx = -INFINITY, tot = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
    for (std::size_t j = 0; j < s.cols(); ++j) tot += (s(i, j) = std::exp(s(i, j) - mx));
    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) /= tot;
  }
  return s;
}

Tensor ref_encode(const EncoderConfig& cfg, const ParamSet& p, Tensor x) {
  const std::size_t v = cfg.nodes, d = cfg.width(), dh = d / cfg.heads;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "encoder.layer" + std::to_string(l) + ".";
    const Tensor q = ref_affine(x, p, pre + "attn.q."), k = ref_affine(x, p, pre + "attn.k."),
                 val = ref_affine(x, p, pre + "attn.v.");
    Tensor heads({v, d});
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Tensor s({v, v});
      for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < v; ++j) {
          double dot = 0.0;
          for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q(i, c) * k(j, c);
          s(i, j) = dot / std::sqrt(static_cast<double>(dh));
        }
      const Tensor a = ref_softmax_rows(s);
      for (std::size_t i = 0; i < v; ++i)
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < v; ++j) acc += a(i, j) * val(j, c);
          heads(i, c) = acc;
        }
    }
    Tensor o = ref_affine(heads, p, pre + "attn.o.");
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += x[i];
    x = ref_layer_norm(o, p, pre + "ln1.", cfg.ln_eps);
    Tensor hdn = ref_affine(x, p, pre + "ff1.");
    for (auto& e : hdn.values()) e = e > 0 ? e : cfg.ff_slope * e;
    Tensor ff = ref_affine(hdn, p, pre + "ff2.");
    for (std::size_t i = 0; i < ff.size(); ++i) ff[i] += x[i];
    x = ref_layer_norm(ff, p, pre + "ln2.", cfg.ln_eps);
  }
  return x;
}

// Modified Gram-Schmidt, one row at a time.
Tensor ref_gram_schmidt(const Tensor& e) {
  Tensor q = e;
  for (std::size_t k = 0; k < e.rows(); ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < e.cols(); ++c) dot += q(k, c) * q(j, c);
      for (std::size_t c = 0; c < e.cols(); ++c) q(k, c) -= dot * q(j, c);
    }
    double n = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) n += q(k, c) * q(k, c);
    n = std::sqrt(n);
    for (std::size_t c = 0; c < e.cols(); ++c) q(k, c) /= n;
  }
  return q;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& pi) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = x(pi[i], j);
  return y;
}

Tensor permute_cols(const Tensor& x, const std::vector<std::size_t>& pi) {
  return permute_rows(x.transposed(), pi).transposed();
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

// Relabels every axis indexed by node position. Query/key/value outputs and
// the feed-forward hidden layer live in head/hidden space and stay put.
ParamSet relabel(const ParamSet& p, const std::vector<std::size_t>& pi) {
  ParamSet out;
  for (ParamId id = 0; id < p.size(); ++id) {
    const auto& name = p.name(id);
    Tensor t = p[id];
    const bool in_qkv = ends_with(name, "attn.q.w") || ends_with(name, "attn.k.w") ||
                        ends_with(name, "attn.v.w");
    if (in_qkv || ends_with(name, "ff1.w") || name == "readout.w_out") t = permute_rows(t, pi);
    if (ends_with(name, "attn.o.w") || ends_with(name, "attn.o.b") || ends_with(name, "ff2.w") ||
        ends_with(name, "ff2.b") || name.find(".ln") != std::string::npos || name == "readout.centers") {
      t = permute_cols(t, pi);
    }
    out.add(name, std::move(t));
  }
  return out;
}

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
  std::vector<std::size_t> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  rng.shuffle(pi);
  return pi;
}

}  // namespace

TEST_CASE("encoder matches a loop-level reference") {
  for (std::size_t v : {8u, 20u}) {
    EncoderConfig cfg = small_config(v, 4);
    Rng rng(v);
    ParamSet p = init_params(cfg, rng);
    // perturb layer-norm affine terms away from their identity init
    for (ParamId id = 0; id < p.size(); ++id)
      if (p.name(id).find(".ln") != std::string::npos)
        for (auto& x : p[id].values()) x += 0.3 * rng.normal();
    const Tensor c = random_corr(rng, v);
    Tape tape;
    Network net(tape, cfg, p);
    const Tensor z = net.encode(tape.constant(c)).value();
    CHECK(z.shape() == Shape{v, v});
    CHECK(max_abs_diff(z, ref_encode(cfg, p, c)) < 1e-12);
  }
}

TEST_CASE("duplicate nodes give identical embeddings") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(1);
  const ParamSet p = init_params(cfg, rng);
  Tensor x = random_matrix(rng, 8, 8);
  for (std::size_t j = 0; j < 8; ++j) x(5, j) = x(2, j);
  Tape tape;
  Network net(tape, cfg, p);
  const Tensor z = net.encode(tape.constant(x)).value();
  for (std::size_t j = 0; j < 8; ++j) CHECK(z(5, j) == z(2, j));
}

TEST_CASE("encoder is permutation equivariant over node rows") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(2);
  const ParamSet p = init_params(cfg, rng);
  const Tensor x = random_corr(rng, 8);
  Tape tape;
  Network net(tape, cfg, p);
  const Var zv = net.encode(tape.constant(x));
  const Tensor zz = zv.value();
  const Tensor z = net.readout_trace(zv).clusters.value();
  for (int trial = 0; trial < 50; ++trial) {
    const auto pi = random_perm(rng, 8);
    Tape t2;
    Network n2(t2, cfg, p);
    const Var zp = n2.encode(t2.constant(permute_rows(x, pi)));
    CHECK(max_abs_diff(zp.value(), permute_rows(zz, pi)) < 1e-12);
    // cluster embeddings do not depend on node order
    CHECK(max_abs_diff(n2.readout_trace(zp).clusters.value(), z) < 1e-12);
  }
}

TEST_CASE("relabeling nodes of C permutes embeddings and leaves the readout unchanged") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(3);
  const ParamSet p = init_params(cfg, rng);
  const Tensor c = random_corr(rng, 8);
  Tape tape;
  Network net(tape, cfg, p);
  const Var z = net.encode(tape.constant(c));
  const Tensor f = net.readout(z).value();
  for (int trial = 0; trial < 50; ++trial) {
    const auto pi = random_perm(rng, 8);
    const ParamSet q = relabel(p, pi);
    Tape t2;
    Network n2(t2, cfg, q);
    const Var z2 = n2.encode(t2.constant(permute_cols(permute_rows(c, pi), pi)));
    CHECK(max_abs_diff(z2.value(), permute_cols(permute_rows(z.value(), pi), pi)) < 1e-12);
    CHECK(max_abs_diff(n2.readout(z2).value(), f) < 1e-12);
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(4);
  const ParamSet p = init_params(cfg, rng);
  const Tensor c = random_corr(rng, 8);
  auto run = [&] {
    Tape t;
    Network n(t, cfg, p);
    const Var f = n.features(t.constant(c));
    return std::pair{n.classify(f).value(), n.project(f).value()};
  };
  CHECK(run() == run());
}

TEST_CASE("gram_schmidt examples") {
  Tensor e = Tensor::matrix(3, 5);
  for (std::size_t i = 0; i < 3; ++i) e(i, i) = 1.0;
  CHECK(gram_schmidt(e) == e);

  const Tensor r = gram_schmidt(Tensor::from_rows({{1, 0}, {1, 1}}));
  CHECK(max_abs_diff(r, Tensor::from_rows({{1, 0}, {0, 1}})) < 1e-15);

  try {
    gram_schmidt(Tensor::from_rows({{1, 2, 3}, {0, 1, 0}, {0, 1, 0}}));
    FAIL("expected rank deficiency");
  } catch (const RankDeficiencyError& err) {
    CHECK(err.row() == 2);
    CHECK(std::string(err.what()).find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(gram_schmidt(Tensor::from_rows({{1, 1}, {1, 1}})), RankDeficiencyError);
}

TEST_CASE("gram_schmidt properties") {
  Rng rng(5);
  for (auto [n, d] : {std::pair<std::size_t, std::size_t>{4, 8}, {10, 20}, {100, 200}}) {
    const Tensor e = random_matrix(rng, n, d);
    const Tensor q = gram_schmidt(e);
    CHECK(max_abs_diff(matmul(q, q.transposed()), Tensor::identity(n)) < 1e-10);
    CHECK(max_abs_diff(q, ref_gram_schmidt(e)) < 1e-10);
    // span preserved: projecting E onto span(E') reproduces E
    CHECK(max_abs_diff(matmul(matmul(e, q.transposed()), q), e) < 1e-10);
    CHECK(max_abs_diff(gram_schmidt(q), q) < 1e-12);
  }
}

TEST_CASE("readout") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(6);
  const ParamSet p = init_params(cfg, rng);
  Tape tape;
  Network net(tape, cfg, p);
  Tensor z = random_matrix(rng, 8, 8, 3.0);
  const Tensor centers = gram_schmidt(p.at("readout.centers"));
  for (std::size_t j = 0; j < 8; ++j) z(3, j) = 60.0 * centers(2, j);
  const auto tr = net.readout_trace(tape.constant(z));
  const Tensor& a = tr.assignment.value();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(a(3, 2) > 1.0 - 1e-12);
  CHECK(tr.output.value().shape() == Shape{4, 8});
  // U = A^T Z
  CHECK(max_abs_diff(tr.clusters.value(), matmul(a.transposed(), z)) < 1e-12);
}

TEST_CASE("readout width at full scale") {
  EncoderConfig cfg;
  cfg.nodes = 200;
  Rng rng(7);
  const ParamSet p = init_params(cfg, rng);
  CHECK(cfg.feature_dim() == 800);
  Tape tape;
  Network net(tape, cfg, p);
  CHECK(net.features(tape.constant(Tensor::identity(200))).value().shape() == Shape{1, 800});
}

TEST_CASE("classifier head") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(8);
  ParamSet p = init_params(cfg, rng);
  const Tensor f = random_matrix(rng, 5, cfg.feature_dim());
  {
    Tape t;
    Network n(t, cfg, p);
    CHECK(n.classify(t.constant(f)).value().shape() == Shape{5, 2});
  }
  for (ParamId id = 0; id < p.size(); ++id)
    if (p.name(id).rfind("classifier.", 0) == 0) p[id] = Tensor(p[id].shape(), 0.0);
  Tape t;
  Network n(t, cfg, p);
  CHECK(n.classify(t.constant(f)).value() == Tensor({5, 2}, 0.0));
  CHECK_THROWS_AS(n.classify(t.constant(Tensor({1, 3}))), ShapeError);
}

TEST_CASE("projection head") {
  const EncoderConfig cfg = small_config(8, 4);
  Rng rng(9);
  ParamSet p = init_params(cfg, rng);
  Tensor f = random_matrix(rng, 6, cfg.feature_dim());
  for (std::size_t j = 0; j < f.cols(); ++j) f(1, j) = f(0, j);
  {
    Tape t;
    Network n(t, cfg, p);
    const Tensor g = n.project(t.constant(f)).value();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * g(i, j);
      CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-12);
    }
    double cos01 = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j) cos01 += g(0, j) * g(1, j);
    CHECK(std::abs(cos01 - 1.0) < 1e-12);
  }
  p.at("project.l2.w") = Tensor(p.at("project.l2.w").shape(), 0.0);
  p.at("project.l2.b") = Tensor(p.at("project.l2.b").shape(), 0.0);
  Tape t;
  Network n(t, cfg, p);
  CHECK_THROWS_AS(n.project(t.constant(f)), NumericError);
}

TEST_CASE("gradient checks through the network") {
  for (const auto& c : model_gradchecks(10)) {
    INFO(c.name);
    CHECK(c.error < 1e-4);
  }
}

TEST_CASE("cross entropy and probabilities") {
  Tape t;
  const Var logits = t.leaf(Tensor::from_rows({{0.2, -1.0}, {3.0, 0.5}}));
  const std::vector<int> labels{1, 0};
  const double expected =
      0.5 * (std::log(std::exp(0.2) + std::exp(-1.0)) + 1.0 + std::log(std::exp(3.0) + std::exp(0.5)) - 3.0);
  CHECK(std::abs(cross_entropy(logits, labels).value().item() - expected) < 1e-14);
  const auto pr = positive_probability(logits.value());
  CHECK(std::abs(pr[0] - std::exp(-1.0) / (std::exp(0.2) + std::exp(-1.0))) < 1e-15);
  CHECK(std::abs(pr[1] - std::exp(0.5) / (std::exp(3.0) + std::exp(0.5))) < 1e-15);
  const std::vector<int> bad{2, 0};
  CHECK_THROWS_AS(cross_entropy(logits, bad), std::invalid_argument);
}

TEST_CASE("parameter bookkeeping") {
  EncoderConfig cfg = small_config(8, 4);
  Rng rng(11);
  ParamSet p = init_params(cfg, rng);
  CHECK_NOTHROW(check_params(cfg, p));
  const auto counts = param_counts(p);
  std::size_t total = 0;
  for (const auto& [k, n] : counts) total += n;
  CHECK(total == p.scalar_count());
  CHECK(counts.at("readout") == 4 * 8 + 8 * 8);
  CHECK(counts.at("classifier") == 32 * 256 + 256 + 256 * 32 + 32 + 32 * 2 + 2);

  EncoderConfig wider = small_config(12, 4);
  Rng rng2(12);
  ParamSet q = init_params(wider, rng2);
  const std::vector<std::string> enc{"encoder."};
  CHECK_THROWS_AS(check_params(cfg, q, enc), ShapeError);
  CHECK_THROWS_AS(copy_params(q, p, "encoder."), ShapeError);

  Rng rng3(13);
  ParamSet r = init_params(cfg, rng3);
  copy_params(p, r, "encoder.");
  CHECK(r.at("encoder.layer1.ff2.w") == p.at("encoder.layer1.ff2.w"));
  CHECK_FALSE(r.at("classifier.l1.w") == p.at("classifier.l1.w"));

  EncoderConfig bad = small_config(8, 4);
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = small_config(8, 9);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("initialization") {
  EncoderConfig cfg = small_config(20, 10);
  Rng a(14), b(14);
  const ParamSet p = init_params(cfg, a);
  CHECK(p == init_params(cfg, b));
  const Tensor& e = p.at("readout.centers");
  CHECK(max_abs_diff(matmul(e, e.transposed()), Tensor::identity(10)) < 1e-12);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim()));
  for (double x : p.at("classifier.l1.w").values()) CHECK(std::abs(x) <= bound);
}
