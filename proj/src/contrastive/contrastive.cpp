#include "cssl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace cssl {

namespace {

void require_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (double x : t.row_span(i)) s += x * x;
    if (!(std::abs(std::sqrt(s) - 1.0) <= kUnitTolerance)) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) + " is not unit-norm");
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct RowLoss {
  double loss;
  std::vector<double> weights;  // softmax over [positive, negatives...]
};

// loss = logsumexp(l) - l_0 with l = similarities / tau. When the positive
// dominates, log1p keeps the small-loss regime exact.
RowLoss row_loss(std::span<const double> q, std::span<const double> pos, const Tensor& negatives,
                 double tau) {
  const std::size_t k = negatives.rows();
  std::vector<double> l(k + 1);
  l[0] = dot(q, pos) / tau;
  for (std::size_t j = 0; j < k; ++j) l[j + 1] = dot(q, negatives.row_span(j)) / tau;
  const double mx = *std::max_element(l.begin(), l.end());
  RowLoss r;
  r.weights.resize(k + 1);
  double rest = 0.0;  // sum of exp(l - mx) excluding the max-attaining term
  bool skipped = false;
  for (std::size_t j = 0; j <= k; ++j) {
    r.weights[j] = std::exp(l[j] - mx);
    if (!skipped && l[j] == mx) {
      skipped = true;
      continue;
    }
    rest += r.weights[j];
  }
  r.loss = (mx - l[0]) + std::log1p(rest);
  const double total = 1.0 + rest;
  for (auto& w : r.weights) w /= total;
  return r;
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("info_nce: tau must be positive");
}

}  // namespace

// ---------------------------------------------------------------- KeyQueue

KeyQueue::KeyQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), buffer_({capacity == 0 ? 1 : capacity, dim == 0 ? 1 : dim}) {
  if (capacity == 0 || dim == 0) throw std::invalid_argument("KeyQueue: capacity and dim must be positive");
}

void KeyQueue::push(const Tensor& keys) {
  if (keys.rank() != 2 || keys.cols() != dim_) {
    throw ShapeError("KeyQueue::push: expected rows of width " + std::to_string(dim_) + ", got " +
                     shape_string(keys.shape()));
  }
  require_unit_rows(keys, "KeyQueue::push");
  for (std::size_t i = 0; i < keys.rows(); ++i) {
    std::copy_n(keys.row_span(i).begin(), dim_, buffer_.values().begin() + static_cast<std::ptrdiff_t>(head_ * dim_));
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
}

Tensor KeyQueue::entries() const {
  Tensor out({size_, dim_});
  const std::size_t start = (head_ + capacity_ - size_) % capacity_;
  for (std::size_t i = 0; i < size_; ++i) {
    const auto src = buffer_.row_span((start + i) % capacity_);
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(i * dim_));
  }
  return out;
}

// ---------------------------------------------------------------- InfoNCE

Var info_nce(Var q, const Tensor& positives, const Tensor& negatives, double tau) {
  check_tau(tau);
  const Tensor& qv = q.value();
  if (qv.rank() != 2 || positives.shape() != qv.shape()) {
    throw ShapeError("info_nce: queries " + shape_string(qv.shape()) + " vs positives " +
                     shape_string(positives.shape()));
  }
  const std::size_t b = qv.rows(), d = qv.cols();
  if (negatives.size() != 0 && (negatives.rank() != 2 || negatives.cols() != d)) {
    throw ShapeError("info_nce: negatives must have width " + std::to_string(d));
  }
  const Tensor negs = negatives.size() == 0 ? Tensor({0, d}) : negatives;
  require_unit_rows(qv, "info_nce queries");
  require_unit_rows(positives, "info_nce positives");
  require_unit_rows(negs, "info_nce negatives");

  // dL_i/dq_i = (sum_j w_ij key_j - positive_i) / tau, keys = [positive, negatives]
  Tensor grad({b, d});
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto r = row_loss(qv.row_span(i), positives.row_span(i), negs, tau);
    total += r.loss;
    for (std::size_t c = 0; c < d; ++c) {
      double g = (r.weights[0] - 1.0) * positives(i, c);
      for (std::size_t j = 0; j < negs.rows(); ++j) g += r.weights[j + 1] * negs(j, c);
      grad(i, c) = g / (tau * static_cast<double>(b));
    }
  }
  const auto iq = q.id();
  return q.tape().record(Tensor::scalar(total / static_cast<double>(b)), {iq},
                         [iq, grad = std::move(grad)](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(iq)) return;
                           auto out = t.grad_buffer(iq).values();
                           const double s = g.item();
                           for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * grad[i];
                         },
                         "info_nce");
}

double info_nce_value(const Tensor& q, const Tensor& positive, const Tensor& negatives, double tau) {
  check_tau(tau);
  if (q.size() != positive.size()) throw ShapeError("info_nce_value: query/positive size mismatch");
  const Tensor qr = q.reshaped({1, q.size()}), pr = positive.reshaped({1, positive.size()});
  const Tensor negs = negatives.size() == 0 ? Tensor({0, q.size()}) : negatives;
  if (negs.cols() != q.size()) throw ShapeError("info_nce_value: negatives width mismatch");
  require_unit_rows(qr, "info_nce query");
  require_unit_rows(pr, "info_nce positive");
  require_unit_rows(negs, "info_nce negatives");
  return row_loss(qr.values(), pr.values(), negs, tau).loss;
}

// ---------------------------------------------------------------- MoCo

void momentum_update(ParamSet& key, const ParamSet& query, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("momentum_update: m must lie in [0, 1]");
  if (key.names() != query.names()) throw ShapeError("momentum_update: parameter names differ");
  for (ParamId id = 0; id < key.size(); ++id) {
    auto k = key[id].values();
    const auto q = query[id].values();
    if (key[id].shape() != query[id].shape()) {
      throw ShapeError("momentum_update: shape mismatch for '" + key.name(id) + "'");
    }
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = m * k[i] + (1.0 - m) * q[i];
  }
}

MoCoState::MoCoState(const ParamSet& init, std::size_t key_dim, const MoCoConfig& cfg)
    : query(init), key(init), queue(cfg.queue_size, key_dim), config(cfg) {
  if (!(cfg.momentum >= 0.0 && cfg.momentum <= 1.0)) throw std::invalid_argument("moco: momentum must lie in [0, 1]");
  check_tau(cfg.tau);
}

}  // namespace cssl
