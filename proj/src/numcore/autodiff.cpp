#include "cssl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace cssl {

// ---------------------------------------------------------------- ParamSet

ParamId ParamSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const ParamId id = values_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return id;
}

ParamId ParamSet::id_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

// ---------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr, "constant"); }

Var Tape::leaf(Tensor value) {
  Var v = record(std::move(value), {}, nullptr, "leaf");
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Tape::parameter(ParamId id, const Tensor& value) {
  if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return Var(this, it->second);
  Var v = leaf(value);
  nodes_[v.id()].op = "parameter";
  param_nodes_.emplace(id, v.id());
  return v;
}

std::vector<Var> Tape::bind(const ParamSet& params, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (ParamId id = 0; id < params.size(); ++id) {
    vars.push_back(trainable ? parameter(id, params[id]) : constant(params[id]));
  }
  return vars;
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward,
                 const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by '") + op + "'");
  }
  const std::size_t id = nodes_.size();
  bool needs = false;
  for (auto p : parents) {
    if (p >= id) throw std::logic_error("cycle detected: parent id not older than child");
    needs = needs || nodes_[p].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.parents = std::move(parents);
  node.requires_grad = needs;
  node.op = op;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  if (grads_[id].empty()) grads_[id] = Tensor(nodes_[id].value.shape());
  return grads_[id];
}

const Tensor& Tape::grad(Var v) const {
  static const Tensor none;
  if (v.id() >= grads_.size() || grads_[v.id()].empty()) return none;
  return grads_[v.id()];
}

Gradients Tape::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_string(loss.value().shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || grads_[i].empty()) continue;
    node.backward(*this, grads_[i]);
  }
  for (const auto& g : grads_) {
    if (!g.empty() && !g.all_finite()) throw NumericError("non-finite gradient in backward");
  }
  Gradients out;
  for (const auto& [pid, node_id] : param_nodes_) {
    const Tensor& g = grads_[node_id];
    out.emplace(pid, g.empty() ? Tensor(nodes_[node_id].value.shape()) : g);
  }
  return out;
}

// ---------------------------------------------------------------- ops

namespace ad {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

// Adds src into the gradient buffer of node id when that node tracks gradients.
void accumulate(Tape& t, std::size_t id, const Tensor& src, double factor = 1.0) {
  if (!t.requires_grad(id)) return;
  auto dst = t.grad_buffer(id).values();
  auto s = src.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * s[i];
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib](Tape& t, const Tensor& g) {
                           accumulate(t, ia, g);
                           accumulate(t, ib, g);
                         },
                         "add");
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib](Tape& t, const Tensor& g) {
                           accumulate(t, ia, g);
                           accumulate(t, ib, g, -1.0);
                         },
                         "sub");
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib](Tape& t, const Tensor& g) {
                           const Tensor& av = t.value(ia);
                           const Tensor& bv = t.value(ib);
                           if (t.requires_grad(ia)) {
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (t.requires_grad(ib)) {
                             auto& gb = t.grad_buffer(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                           }
                         },
                         "mul");
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, c](Tape& t, const Tensor& g) { accumulate(t, ia, g, c); }, "scale");
}

Var add_row(Var x, Var b) {
  require_same_tape(x, b);
  const Tensor& xv = x.value();
  require_matrix(xv, "add_row");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (b.value().size() != n) throw ShapeError("add_row: bias length does not match columns");
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += b.value()[j];
  const auto ix = x.id(), ib = b.id();
  return x.tape().record(std::move(out), {ix, ib},
                         [ix, ib, m, n](Tape& t, const Tensor& g) {
                           accumulate(t, ix, g);
                           if (t.requires_grad(ib)) {
                             auto& gb = t.grad_buffer(ib);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
                           }
                         },
                         "add_row");
}

Var mul_row(Var x, Var w) {
  require_same_tape(x, w);
  const Tensor& xv = x.value();
  require_matrix(xv, "mul_row");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (w.value().size() != n) throw ShapeError("mul_row: gain length does not match columns");
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= w.value()[j];
  const auto ix = x.id(), iw = w.id();
  return x.tape().record(std::move(out), {ix, iw},
                         [ix, iw, m, n](Tape& t, const Tensor& g) {
                           const Tensor& xv = t.value(ix);
                           const Tensor& wv = t.value(iw);
                           if (t.requires_grad(ix)) {
                             auto& gx = t.grad_buffer(ix);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gx(i, j) += g(i, j) * wv[j];
                           }
                           if (t.requires_grad(iw)) {
                             auto& gw = t.grad_buffer(iw);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gw[j] += g(i, j) * xv(i, j);
                           }
                         },
                         "mul_row");
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = cssl::matmul(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib](Tape& t, const Tensor& g) {
                           if (t.requires_grad(ia)) {
                             accumulate(t, ia, cssl::matmul(g, t.value(ib).transposed()));
                           }
                           if (t.requires_grad(ib)) {
                             accumulate(t, ib, cssl::matmul(t.value(ia).transposed(), g));
                           }
                         },
                         "matmul");
}

Var transpose(Var a) {
  const auto ia = a.id();
  return a.tape().record(a.value().transposed(), {ia},
                         [ia](Tape& t, const Tensor& g) { accumulate(t, ia, g.transposed()); },
                         "transpose");
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(s), {ia},
                         [ia](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           for (auto& v : t.grad_buffer(ia).values()) v += g[0];
                         },
                         "sum");
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "row_sum");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, 0) += av(i, j);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, m, n](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(i, 0);
                         },
                         "row_sum");
}

Var leaky_relu(Var a, double negative_slope) {
  Tensor out = a.value();
  for (auto& v : out.values())
    if (v < 0.0) v *= negative_slope;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, negative_slope](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           const Tensor& x = t.value(ia);
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += x[i] < 0.0 ? negative_slope * g[i] : g[i];
                         },
                         "leaky_relu");
}

Var exp(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  const auto ia = a.id();
  auto holder = std::make_shared<std::size_t>(0);
  Var y = a.tape().record(std::move(out), {ia},
                          [ia, holder](Tape& t, const Tensor& g) {
                            if (!t.requires_grad(ia)) return;
                            const Tensor& yv = t.value(*holder);
                            auto& ga = t.grad_buffer(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
                          },
                          "exp");
  *holder = y.id();
  return y;
}

Var log(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::log(v);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           const Tensor& x = t.value(ia);
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
                         },
                         "log");
}

namespace {

Tensor softmax_rows_value(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y(i, j) = std::exp(x(i, j) - mx);
      z += y(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) y(i, j) /= z;
  }
  return y;
}

}  // namespace

Var softmax_rows(Var a) {
  require_matrix(a.value(), "softmax_rows");
  Tensor y = softmax_rows_value(a.value());
  const auto ia = a.id();
  // The backward pass reads the output through its own node id, known after recording.
  auto holder = std::make_shared<std::size_t>(0);
  Var out = a.tape().record(std::move(y), {ia},
                        [ia, holder](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          const Tensor& yv = t.value(*holder);
                          auto& ga = t.grad_buffer(ia);
                          const std::size_t m = yv.rows(), n = yv.cols();
                          for (std::size_t i = 0; i < m; ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * yv(i, j);
                            for (std::size_t j = 0; j < n; ++j)
                              ga(i, j) += yv(i, j) * (g(i, j) - dot);
                          }
                        },
                        "softmax_rows");
  *holder = out.id();
  return out;
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y(i, j) = x(i, j) - lse;
  }
  const auto ia = a.id();
  auto holder = std::make_shared<std::size_t>(0);
  Var out = a.tape().record(std::move(y), {ia},
                            [ia, holder](Tape& t, const Tensor& g) {
                              if (!t.requires_grad(ia)) return;
                              const Tensor& yv = t.value(*holder);
                              auto& ga = t.grad_buffer(ia);
                              const std::size_t m = yv.rows(), n = yv.cols();
                              for (std::size_t i = 0; i < m; ++i) {
                                double gs = 0.0;
                                for (std::size_t j = 0; j < n; ++j) gs += g(i, j);
                                for (std::size_t j = 0; j < n; ++j)
                                  ga(i, j) += g(i, j) - std::exp(yv(i, j)) * gs;
                              }
                            },
                            "log_softmax_rows");
  *holder = out.id();
  return out;
}

Var layer_norm_rows(Var a, double eps) {
  const Tensor& x = a.value();
  require_matrix(x, "layer_norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y(i, j) = (x(i, j) - mu) * inv_std[i];
  }
  const auto ia = a.id();
  auto holder = std::make_shared<std::size_t>(0);
  Var out = a.tape().record(
      std::move(y), {ia},
      [ia, holder, inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        if (!t.requires_grad(ia)) return;
        const Tensor& yv = t.value(*holder);
        auto& ga = t.grad_buffer(ia);
        const std::size_t m = yv.rows(), n = yv.cols();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            g_mean += g(i, j);
            gy_mean += g(i, j) * yv(i, j);
          }
          g_mean *= inv_n;
          gy_mean *= inv_n;
          for (std::size_t j = 0; j < n; ++j)
            ga(i, j) += inv_std[i] * (g(i, j) - g_mean - yv(i, j) * gy_mean);
        }
      },
      "layer_norm_rows");
  *holder = out.id();
  return out;
}

Var l2_normalize_rows(Var a, double min_norm) {
  const Tensor& x = a.value();
  require_matrix(x, "l2_normalize_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x(i, j) * x(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] >= min_norm)) {
      throw NumericError("l2_normalize_rows: row " + std::to_string(i) +
                         " has (near) zero norm and cannot be normalized");
    }
    for (std::size_t j = 0; j < n; ++j) y(i, j) = x(i, j) / norms[i];
  }
  const auto ia = a.id();
  auto holder = std::make_shared<std::size_t>(0);
  Var out = a.tape().record(
      std::move(y), {ia},
      [ia, holder, norms = std::move(norms)](Tape& t, const Tensor& g) {
        if (!t.requires_grad(ia)) return;
        const Tensor& yv = t.value(*holder);
        auto& ga = t.grad_buffer(ia);
        const std::size_t m = yv.rows(), n = yv.cols();
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * yv(i, j);
          for (std::size_t j = 0; j < n; ++j) ga(i, j) += (g(i, j) - yv(i, j) * dot) / norms[i];
        }
      },
      "l2_normalize_rows");
  *holder = out.id();
  return out;
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  if (begin >= end || end > x.cols()) throw ShapeError("slice_cols: bad column range");
  const std::size_t m = x.rows(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = x(i, begin + j);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, begin, m, w](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j) ga(i, begin + j) += g(i, j);
                         },
                         "slice_cols");
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_rows");
  if (begin >= end || end > x.rows()) throw ShapeError("slice_rows: bad row range");
  const std::size_t n = x.cols();
  std::vector<double> vals(x.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                           x.values().begin() + static_cast<std::ptrdiff_t>(end * n));
  const auto ia = a.id();
  return a.tape().record(Tensor({end - begin, n}, std::move(vals)), {ia},
                         [ia, begin, n](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           auto ga = t.grad_buffer(ia).values().subspan(begin * n, g.size());
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         },
                         "slice_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rows() != m) throw ShapeError("concat_cols: row counts differ");
    ids.push_back(p.id());
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out({m, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offsets[k] + j) = v(i, j);
  }
  return parts[0].tape().record(std::move(out), ids,
                                [ids, offsets, m](Tape& t, const Tensor& g) {
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (!t.requires_grad(ids[k])) continue;
                                    auto& gk = t.grad_buffer(ids[k]);
                                    const std::size_t w = gk.cols();
                                    for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < w; ++j)
                                        gk(i, j) += g(i, offsets[k] + j);
                                  }
                                },
                                "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::vector<std::size_t> ids, offsets;
  std::vector<double> vals;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().cols() != n) throw ShapeError("concat_rows: column counts differ");
    ids.push_back(p.id());
    offsets.push_back(vals.size());
    vals.insert(vals.end(), p.value().values().begin(), p.value().values().end());
  }
  const std::size_t rows = vals.size() / n;
  return parts[0].tape().record(Tensor({rows, n}, std::move(vals)), ids,
                                [ids, offsets](Tape& t, const Tensor& g) {
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (!t.requires_grad(ids[k])) continue;
                                    auto gk = t.grad_buffer(ids[k]).values();
                                    for (std::size_t i = 0; i < gk.size(); ++i)
                                      gk[i] += g[offsets[k] + i];
                                  }
                                },
                                "concat_rows");
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const auto ia = a.id();
  return a.tape().record(a.value().reshaped({rows, cols}), {ia},
                         [ia](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           auto ga = t.grad_buffer(ia).values();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                         },
                         "reshape");
}

Var pick(Var a, std::size_t r, std::size_t c) {
  const Tensor& x = a.value();
  require_matrix(x, "pick");
  if (r >= x.rows() || c >= x.cols()) throw ShapeError("pick: index out of range");
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(x(r, c)), {ia},
                         [ia, r, c](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ia)) return;
                           t.grad_buffer(ia)(r, c) += g[0];
                         },
                         "pick");
}

}  // namespace ad

// ---------------------------------------------------------------- gradcheck

double gradcheck(const std::function<Var(Tape&, Var)>& fn, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradcheck: eps must be positive");

  Tape tape;
  Var input = tape.leaf(x);
  Var out = fn(tape, input);
  if (!out.value().all_finite()) throw NumericError("gradcheck: function value is not finite");
  tape.backward(out);
  Tensor analytic = tape.grad(input);
  if (analytic.empty()) analytic = Tensor(x.shape());

  auto eval = [&](const Tensor& at) {
    Tape t;
    const double v = fn(t, t.constant(at)).value().item();
    if (!std::isfinite(v)) throw NumericError("gradcheck: function value is not finite");
    return v;
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = eval(probe);
    probe[i] = orig - eps;
    const double fm = eval(probe);
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cssl
