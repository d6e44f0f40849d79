#include "cssl/optim.hpp"

#include <cmath>

namespace cssl {

void opt_step(OptimState& state, ParamSet& params, const Gradients& grads,
              const std::vector<ParamId>& trainable) {
  for (const auto& [id, g] : grads) {
    if (id >= params.size() || g.shape() != params[id].shape()) {
      throw ShapeError("opt_step: gradient shape does not match parameter " +
                       (id < params.size() ? params.name(id) : std::to_string(id)));
    }
  }

  std::vector<ParamId> ids = trainable;
  if (ids.empty()) {
    for (ParamId id = 0; id < params.size(); ++id) ids.push_back(id);
  }

  if (state.kind == OptimKind::adam && state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (ParamId id = 0; id < params.size(); ++id) {
      state.first_moment.emplace_back(params[id].shape());
      state.second_moment.emplace_back(params[id].shape());
    }
  }
  ++state.step;

  const double lr = state.lr, wd = state.weight_decay;
  for (ParamId id : ids) {
    Tensor& p = params[id];
    auto it = grads.find(id);
    const Tensor* g = it == grads.end() ? nullptr : &it->second;

    if (state.kind == OptimKind::sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g ? (*g)[i] : 0.0;
        p[i] -= lr * (gi + wd * p[i]);
      }
      continue;
    }

    const auto& c = state.adam;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    Tensor& m = state.first_moment[id];
    Tensor& v = state.second_moment[id];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + c.eps)) + lr * wd * p[i];
    }
  }
}

}  // namespace cssl
