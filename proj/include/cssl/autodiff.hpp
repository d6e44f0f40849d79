#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cssl/tensor.hpp"

namespace cssl {

using ParamId = std::size_t;

/// Gradients keyed by parameter id. Parameters absent from the map have zero gradient.
using Gradients = std::map<ParamId, Tensor>;

/// Named, ordered collection of trainable tensors. The index of a tensor is its ParamId.
class ParamSet {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  Tensor& operator[](ParamId id) { return values_.at(id); }
  const Tensor& operator[](ParamId id) const { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ParamId id_of(const std::string& name) const;
  Tensor& at(const std::string& name) { return values_[id_of(name)]; }
  const Tensor& at(const std::string& name) const { return values_[id_of(name)]; }

  std::size_t scalar_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamId> index_;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of a computation. Nodes are stored in creation order, which
/// is a topological order of the graph, so backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Tracked leaf that is not a parameter; its gradient is available through grad().
  Var leaf(Tensor value);
  /// Tracked parameter leaf. Registering the same id twice returns the first node.
  Var parameter(ParamId id, const Tensor& value);
  /// Registers every tensor in the set; result is indexed by ParamId.
  std::vector<Var> bind(const ParamSet& params, bool trainable = true);

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward, const char* op);

  /// Reverse sweep from a scalar loss. Every parameter registered on this tape
  /// appears in the result; unreachable ones get zeros.
  Gradients backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node; valid during and after backward.
  Tensor& grad_buffer(std::size_t id);
  const Tensor& grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    const char* op = "";
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<ParamId, std::size_t> param_nodes_;
};

/// Differentiable operations. All operate on rank-2 values; scalars are 1x1.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// X (m x n) plus row vector b (1 x n) on every row.
Var add_row(Var x, Var b);
/// X (m x n) times row vector g (1 x n) elementwise on every row.
Var mul_row(Var x, Var g);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var sum(Var a);
Var mean(Var a);
/// m x n -> m x 1
Var row_sum(Var a);
Var leaky_relu(Var a, double negative_slope);
Var exp(Var a);
Var log(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Zero-mean, unit-variance normalization of each row (no affine part).
Var layer_norm_rows(Var a, double eps);
/// Scales each row to unit Euclidean norm. Throws NumericError on a row with norm < min_norm.
Var l2_normalize_rows(Var a, double min_norm = 1e-12);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Single element as a 1x1 value.
Var pick(Var a, std::size_t r, std::size_t c);

}  // namespace ad

/// Central-difference gradient check of fn at x.
///
/// Returns max over coordinates of |a - n| / max(1e-8, |a| + |n|), with a the
/// analytic and n the numeric derivative. Throws NumericError if fn is non-finite.
double gradcheck(const std::function<Var(Tape&, Var)>& fn, const Tensor& x, double eps = 1e-5);

}  // namespace cssl
