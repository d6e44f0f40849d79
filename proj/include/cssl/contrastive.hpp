#pragma once

#include <cstddef>
#include <vector>

#include "cssl/autodiff.hpp"
#include "cssl/tensor.hpp"

namespace cssl {

inline constexpr double kUnitTolerance = 1e-6;

/// Fixed-capacity FIFO of unit-norm key embeddings. Once full, each push
/// evicts the oldest entries.
class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, std::size_t dim);

  /// Appends the rows of keys (B x dim) in order. Throws std::invalid_argument
  /// on a row whose norm is off by more than kUnitTolerance.
  void push(const Tensor& keys);
  void clear() noexcept { size_ = head_ = 0; }

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  bool full() const noexcept { return size_ == capacity_; }

  /// Current entries, oldest first (size x dim).
  Tensor entries() const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  Tensor buffer_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // next slot to write
};

/// Contrastive loss for a batch of queries (B x d) against their positive keys
/// (B x d) and shared negatives (K x d, possibly K = 0):
///
///   loss_i = -log( e^{<q_i,k_i>/tau} / (e^{<q_i,k_i>/tau} + sum_j e^{<q_i,n_j>/tau}) )
///
/// Returns the batch mean as a 1x1 node. Keys and negatives are treated as
/// constants; only q receives a gradient. Throws std::invalid_argument for
/// tau <= 0 or rows that are not unit-norm within kUnitTolerance.
Var info_nce(Var q, const Tensor& positives, const Tensor& negatives, double tau);

/// Same loss evaluated for a single query without a tape.
double info_nce_value(const Tensor& q, const Tensor& positive, const Tensor& negatives, double tau);

/// theta_k <- m * theta_k + (1 - m) * theta_q for every tensor. Throws
/// ShapeError when the sets disagree in names or shapes, std::invalid_argument
/// for m outside [0, 1].
void momentum_update(ParamSet& key, const ParamSet& query, double m);

struct MoCoConfig {
  std::size_t queue_size = 512;
  double momentum = 0.999;
  double tau = 0.07;
};

/// Query and key parameter sets plus the negative queue.
struct MoCoState {
  MoCoState(const ParamSet& init, std::size_t key_dim, const MoCoConfig& cfg);

  ParamSet query;
  ParamSet key;
  KeyQueue queue;
  MoCoConfig config;
};

}  // namespace cssl
