#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cssl/connectome.hpp"
#include "cssl/rng.hpp"

namespace cssl {

enum class NoiseKind { none, gaussian, uniform };

/// Background noise distribution. The gaussian parameter is a standard deviation.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double sigma = 0.01;
  double lo = -0.1;
  double hi = 0.1;

  static NoiseSpec none() { return {NoiseKind::none, 0.0, 0.0, 0.0}; }
  static NoiseSpec gaussian(double sigma) { return {NoiseKind::gaussian, sigma, 0.0, 0.0}; }
  static NoiseSpec uniform(double lo, double hi) { return {NoiseKind::uniform, 0.0, lo, hi}; }

  /// Parses "none", "gaussian(0.01)" / "normal(0.01)", "uniform(-0.1,0.1)".
  static NoiseSpec parse(const std::string& text);
  std::string to_string() const;
  double draw(Rng& rng) const;
};

struct AugmentConfig {
  std::size_t k_min = 5;
  std::size_t k_max = 20;
  double delta_max = 0.5;
  NoiseSpec noise{};

  /// Throws std::invalid_argument unless 0 <= k_min <= k_max <= nodes,
  /// delta_max in (0, 1] and the noise parameters are well-formed.
  void validate(std::size_t nodes) const;
};

enum class Direction { dilate, shrink };

struct NodeEdit {
  std::size_t node;
  Direction direction;
};

/// k uniform in [k_min, k_max], then k distinct nodes uniformly without
/// replacement. Result sorted ascending.
std::vector<std::size_t> select_nodes(std::size_t nodes, const AugmentConfig& cfg, Rng& rng);

/// Dilation/shrinkage with explicit per-node directions and per-edge increments.
///
/// For each edge (n, v), v != n, incident to an edited node n the absolute
/// correlation moves by delta(n, v): up for dilate, down for shrink, clamped
/// to [0, 1], sign preserved. An edge between two edited nodes is changed once,
/// using the lower-indexed node's direction. Increments are requested in
/// ascending (n, v) order.
Connectome apply_dilate_shrink(const Connectome& c, std::span<const NodeEdit> edits,
                               const std::function<double(std::size_t, std::size_t)>& delta);

/// Random directions (fair coin per node) and increments ~ Uniform(0, delta_max).
Connectome dilate_shrink(const Connectome& c, std::span<const std::size_t> nodes,
                         const AugmentConfig& cfg, Rng& rng);

/// Adds clamped i.i.d. noise to every entry whose endpoints are both unselected.
Connectome background_noise(const Connectome& c, std::span<const std::size_t> selected,
                            const AugmentConfig& cfg, Rng& rng);

struct AugmentedView {
  Connectome view;
  std::vector<NodeEdit> edits;
};

/// One augmented instance: select nodes, dilate/shrink them, noise the rest.
AugmentedView augment_view(const Connectome& c, const AugmentConfig& cfg, Rng& rng);

struct ViewPair {
  Connectome first;
  Connectome second;
  std::string source_id;
};

ViewPair make_view_pair(const Connectome& c, const AugmentConfig& cfg, Rng& rng,
                        std::string source_id = {});

}  // namespace cssl
