#pragma once

#include <cstdint>
#include <vector>

#include "cssl/autodiff.hpp"

namespace cssl {

enum class OptimKind { sgd, adam };

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Optimizer state. Moment buffers are allocated on the first Adam step and
/// always mirror the parameter shapes.
struct OptimState {
  OptimKind kind = OptimKind::sgd;
  double lr = 1e-5;
  double weight_decay = 0.0;
  AdamConstants adam{};
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static OptimState sgd(double lr, double weight_decay = 0.0) {
    OptimState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    return s;
  }
  static OptimState adamw(double lr, double weight_decay) {
    OptimState s;
    s.kind = OptimKind::adam;
    s.lr = lr;
    s.weight_decay = weight_decay;
    return s;
  }
};

/// One update of every parameter in `params`.
///
/// sgd:  p <- p - lr * (g + wd * p)
/// adam: bias-corrected moments, then p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
///
/// Parameters missing from `grads` are treated as having zero gradient. When
/// `trainable` is non-empty only the listed ids are touched.
void opt_step(OptimState& state, ParamSet& params, const Gradients& grads,
              const std::vector<ParamId>& trainable = {});

}  // namespace cssl
