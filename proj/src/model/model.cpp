#include "cssl/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cssl {

namespace {

std::string fmt_residual(std::size_t row, double residual) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "gram_schmidt: row %zu is linearly dependent on earlier rows (residual norm %.3g < %.0e)",
                row, residual, kRankTolerance);
  return buf;
}

std::string layer_prefix(std::size_t l) { return "encoder.layer" + std::to_string(l) + "."; }

void add_affine(ParamSet& ps, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w({in, out}), b({1, out});
  for (auto& x : w.values()) x = rng.uniform(-bound, bound);
  for (auto& x : b.values()) x = rng.uniform(-bound, bound);
  ps.add(prefix + "w", std::move(w));
  ps.add(prefix + "b", std::move(b));
}

void add_affine_shapes(std::map<std::string, Shape>& m, const std::string& prefix, std::size_t in,
                       std::size_t out) {
  m[prefix + "w"] = {in, out};
  m[prefix + "b"] = {1, out};
}

}  // namespace

RankDeficiencyError::RankDeficiencyError(std::size_t row, double residual)
    : NumericError(fmt_residual(row, residual)), row_(row) {}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("encoder config: " + m); };
  if (nodes == 0) fail("nodes must be positive");
  if (layers == 0) fail("layers must be positive");
  if (heads == 0 || width() % heads != 0) fail("d_model must be divisible by heads");
  if (clusters == 0) fail("clusters must be positive");
  if (clusters > width()) fail("clusters must not exceed d_model (orthonormal centers)");
  if (d_out == 0 || proj_dim == 0) fail("d_out and proj_dim must be positive");
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
}

// ---------------------------------------------------------------- parameters

std::map<std::string, Shape> param_shapes(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.width(), ff = cfg.ff_width();
  std::map<std::string, Shape> m;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto p = layer_prefix(l);
    for (const char* name : {"attn.q.", "attn.k.", "attn.v.", "attn.o."}) add_affine_shapes(m, p + name, d, d);
    m[p + "ln1.gamma"] = {1, d};
    m[p + "ln1.beta"] = {1, d};
    add_affine_shapes(m, p + "ff1.", d, ff);
    add_affine_shapes(m, p + "ff2.", ff, d);
    m[p + "ln2.gamma"] = {1, d};
    m[p + "ln2.beta"] = {1, d};
  }
  m["readout.centers"] = {cfg.clusters, d};
  m["readout.w_out"] = {d, cfg.d_out};
  add_affine_shapes(m, "project.l1.", cfg.feature_dim(), cfg.proj_dim);
  add_affine_shapes(m, "project.l2.", cfg.proj_dim, cfg.proj_dim);
  add_affine_shapes(m, "classifier.l1.", cfg.feature_dim(), kClassifierHidden1);
  add_affine_shapes(m, "classifier.l2.", kClassifierHidden1, kClassifierHidden2);
  add_affine_shapes(m, "classifier.l3.", kClassifierHidden2, kClasses);
  return m;
}

ParamSet init_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.width(), ff = cfg.ff_width();
  ParamSet ps;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto p = layer_prefix(l);
    for (const char* name : {"attn.q.", "attn.k.", "attn.v.", "attn.o."}) add_affine(ps, rng, p + name, d, d);
    ps.add(p + "ln1.gamma", Tensor({1, d}, 1.0));
    ps.add(p + "ln1.beta", Tensor({1, d}, 0.0));
    add_affine(ps, rng, p + "ff1.", d, ff);
    add_affine(ps, rng, p + "ff2.", ff, d);
    ps.add(p + "ln2.gamma", Tensor({1, d}, 1.0));
    ps.add(p + "ln2.beta", Tensor({1, d}, 0.0));
  }
  Tensor centers({cfg.clusters, d});
  for (auto& x : centers.values()) x = rng.normal();
  ps.add("readout.centers", gram_schmidt(centers));
  {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor w({d, cfg.d_out});
    for (auto& x : w.values()) x = rng.uniform(-bound, bound);
    ps.add("readout.w_out", std::move(w));
  }
  add_affine(ps, rng, "project.l1.", cfg.feature_dim(), cfg.proj_dim);
  add_affine(ps, rng, "project.l2.", cfg.proj_dim, cfg.proj_dim);
  add_affine(ps, rng, "classifier.l1.", cfg.feature_dim(), kClassifierHidden1);
  add_affine(ps, rng, "classifier.l2.", kClassifierHidden1, kClassifierHidden2);
  add_affine(ps, rng, "classifier.l3.", kClassifierHidden2, kClasses);
  return ps;
}

void check_params(const EncoderConfig& cfg, const ParamSet& params, std::span<const std::string> prefixes) {
  auto wanted = [&](const std::string& name) {
    if (prefixes.empty()) return true;
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  };
  for (const auto& [name, shape] : param_shapes(cfg)) {
    if (!wanted(name)) continue;
    if (!params.contains(name)) throw ShapeError("missing parameter '" + name + "'");
    const auto& have = params.at(name).shape();
    if (have != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_string(have) + ", expected " +
                       shape_string(shape));
    }
  }
}

std::map<std::string, std::size_t> param_counts(const ParamSet& params) {
  std::map<std::string, std::size_t> counts;
  for (ParamId id = 0; id < params.size(); ++id) {
    const auto& name = params.name(id);
    counts[name.substr(0, name.find('.'))] += params[id].size();
  }
  return counts;
}

void copy_params(const ParamSet& src, ParamSet& dst, const std::string& prefix) {
  for (ParamId id = 0; id < src.size(); ++id) {
    const auto& name = src.name(id);
    if (name.rfind(prefix, 0) != 0) continue;
    Tensor& target = dst.at(name);
    if (target.shape() != src[id].shape()) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_string(src[id].shape()) +
                       ", expected " + shape_string(target.shape()));
    }
    target = src[id];
  }
}

// ---------------------------------------------------------------- Gram-Schmidt

Var gram_schmidt(Var e) {
  const std::size_t n = e.value().rows();
  std::vector<Var> basis;
  basis.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Var r = ad::slice_rows(e, k, k + 1);
    if (k > 0) {
      const Var q = ad::concat_rows(basis);
      for (int pass = 0; pass < 2; ++pass) {
        r = ad::sub(r, ad::matmul(ad::matmul(r, ad::transpose(q)), q));
      }
    }
    double norm2 = 0.0;
    for (double x : r.value().values()) norm2 += x * x;
    const double norm = std::sqrt(norm2);
    if (!(norm >= kRankTolerance)) throw RankDeficiencyError(k, norm);
    basis.push_back(ad::l2_normalize_rows(r));
  }
  return ad::concat_rows(basis);
}

Tensor gram_schmidt(const Tensor& e) {
  Tape tape;
  return gram_schmidt(tape.constant(e)).value();
}

// ---------------------------------------------------------------- Network

Network::Network(Tape& tape, const EncoderConfig& cfg, const ParamSet& params)
    : Network(tape, cfg, params, std::vector<bool>(params.size(), true)) {}

Network::Network(Tape& tape, const EncoderConfig& cfg, const ParamSet& params,
                 const std::vector<bool>& trainable)
    : tape_(tape), cfg_(cfg) {
  cfg_.validate();
  if (trainable.size() != params.size()) throw std::invalid_argument("Network: trainable mask size mismatch");
  for (ParamId id = 0; id < params.size(); ++id) {
    vars_[params.name(id)] = trainable[id] ? tape.parameter(id, params[id]) : tape.constant(params[id]);
  }
}

Var Network::param(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

void Network::replace(const std::string& name, Var v) {
  if (param(name).value().shape() != v.value().shape()) {
    throw ShapeError("replacement for '" + name + "' has the wrong shape");
  }
  vars_[name] = v;
}

Var Network::affine(Var x, const std::string& prefix) const {
  return ad::add_row(ad::matmul(x, param(prefix + "w")), param(prefix + "b"));
}

Var Network::layer_norm(Var x, const std::string& prefix) const {
  return ad::add_row(ad::mul_row(ad::layer_norm_rows(x, cfg_.ln_eps), param(prefix + "gamma")),
                     param(prefix + "beta"));
}

Var Network::attention(Var x, const std::string& prefix) const {
  const std::size_t d = cfg_.width(), h = cfg_.heads, dh = d / h;
  const Var q = affine(x, prefix + "q."), k = affine(x, prefix + "k."), v = affine(x, prefix + "v.");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    const Var qi = ad::slice_cols(q, i * dh, (i + 1) * dh);
    const Var ki = ad::slice_cols(k, i * dh, (i + 1) * dh);
    const Var vi = ad::slice_cols(v, i * dh, (i + 1) * dh);
    const Var weights = ad::softmax_rows(ad::scale(ad::matmul(qi, ad::transpose(ki)), scale));
    heads.push_back(ad::matmul(weights, vi));
  }
  return affine(ad::concat_cols(heads), prefix + "o.");
}

Var Network::encode(Var x) const {
  const auto& s = x.value().shape();
  if (s.size() != 2 || s[0] != cfg_.nodes || s[1] != cfg_.width()) {
    throw ShapeError("encode: expected " + shape_string({cfg_.nodes, cfg_.width()}) + " input, got " +
                     shape_string(s));
  }
  Var h = x;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const auto p = layer_prefix(l);
    h = layer_norm(ad::add(h, attention(h, p + "attn.")), p + "ln1.");
    const Var ff = affine(ad::leaky_relu(affine(h, p + "ff1."), cfg_.ff_slope), p + "ff2.");
    h = layer_norm(ad::add(h, ff), p + "ln2.");
  }
  return h;
}

ReadoutTrace Network::readout_trace(Var z) const {
  ReadoutTrace t;
  t.centers = gram_schmidt(param("readout.centers"));
  t.assignment = ad::softmax_rows(ad::matmul(z, ad::transpose(t.centers)));
  t.clusters = ad::matmul(ad::transpose(t.assignment), z);
  t.output = ad::matmul(t.clusters, param("readout.w_out"));
  return t;
}

Var Network::features(Var c) const {
  if (cfg_.width() != cfg_.nodes) {
    throw ShapeError("features: connectome rows are node features, so d_model must equal nodes");
  }
  const Var f = readout(encode(c));
  return ad::reshape(f, 1, cfg_.feature_dim());
}

Var Network::project(Var f) const {
  if (f.value().cols() != cfg_.feature_dim()) throw ShapeError("project: feature width mismatch");
  const Var h = ad::leaky_relu(affine(f, "project.l1."), cfg_.head_slope);
  return ad::l2_normalize_rows(affine(h, "project.l2."));
}

Var Network::classify(Var f) const {
  if (f.value().cols() != cfg_.feature_dim()) throw ShapeError("classify: feature width mismatch");
  Var h = ad::leaky_relu(affine(f, "classifier.l1."), cfg_.head_slope);
  h = ad::leaky_relu(affine(h, "classifier.l2."), cfg_.head_slope);
  return affine(h, "classifier.l3.");
}

// ---------------------------------------------------------------- losses

Var cross_entropy(Var logits, std::span<const int> labels) {
  const auto& v = logits.value();
  if (v.rank() != 2 || v.rows() != labels.size() || v.cols() != kClasses) {
    throw ShapeError("cross_entropy: logits " + shape_string(v.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor onehot({v.rows(), v.cols()});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= kClasses) {
      throw std::invalid_argument("cross_entropy: label outside {0,1}");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  Tape& tape = logits.tape();
  const Var picked = ad::sum(ad::mul(ad::log_softmax_rows(logits), tape.constant(std::move(onehot))));
  return ad::scale(picked, -1.0 / static_cast<double>(labels.size()));
}

std::vector<double> positive_probability(const Tensor& logits) {
  std::vector<double> p(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    // softmax over two logits is the logistic of their difference
    const double diff = logits(i, 1) - logits(i, 0);
    p[i] = diff >= 0 ? 1.0 / (1.0 + std::exp(-diff)) : std::exp(diff) / (1.0 + std::exp(diff));
  }
  return p;
}

std::vector<double> predict(const EncoderConfig& cfg, const ParamSet& params,
                            std::span<const Tensor> connectomes) {
  std::vector<double> out;
  out.reserve(connectomes.size());
  const std::vector<bool> frozen(params.size(), false);
  for (const auto& c : connectomes) {
    Tape tape;
    Network net(tape, cfg, params, frozen);
    out.push_back(positive_probability(net.classify(net.features(tape.constant(c))).value())[0]);
  }
  return out;
}

}  // namespace cssl
