#include "cssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <stdexcept>

namespace cssl {

// ---------------------------------------------------------------- NoiseSpec

NoiseSpec NoiseSpec::parse(const std::string& text) {
  std::string s;
  for (char ch : text) {
    if (ch != ' ' && ch != '\t') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (s == "none") return none();
  const auto open = s.find('('), close = s.rfind(')');
  if (open == std::string::npos || close != s.size() - 1) {
    throw std::invalid_argument("unrecognized noise spec '" + text + "'");
  }
  const std::string kind = s.substr(0, open);
  const std::string args = s.substr(open + 1, close - open - 1);
  try {
    if (kind == "gaussian" || kind == "normal" || kind == "n") {
      std::size_t pos = 0;
      double sigma = std::stod(args, &pos);
      // "N(0, 0.01)": mean then standard deviation.
      if (pos < args.size() && args[pos] == ',') {
        if (sigma != 0.0) throw std::invalid_argument("only zero-mean gaussian noise is supported");
        sigma = std::stod(args.substr(pos + 1));
      }
      return gaussian(sigma);
    }
    if (kind == "uniform" || kind == "u") {
      const auto comma = args.find(',');
      if (comma == std::string::npos) throw std::invalid_argument("uniform noise needs (lo,hi)");
      return uniform(std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1)));
    }
  } catch (const std::logic_error&) {
    throw std::invalid_argument("unrecognized noise spec '" + text + "'");
  }
  throw std::invalid_argument("unrecognized noise spec '" + text + "'");
}

std::string NoiseSpec::to_string() const {
  auto show = [](double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
  };
  switch (kind) {
    case NoiseKind::none:
      return "none";
    case NoiseKind::gaussian:
      return "gaussian(" + show(sigma) + ")";
    case NoiseKind::uniform:
      return "uniform(" + show(lo) + "," + show(hi) + ")";
  }
  return "none";
}

double NoiseSpec::draw(Rng& rng) const {
  switch (kind) {
    case NoiseKind::none:
      return 0.0;
    case NoiseKind::gaussian:
      return sigma * rng.normal();
    case NoiseKind::uniform:
      return rng.uniform(lo, hi);
  }
  return 0.0;
}

void AugmentConfig::validate(std::size_t nodes) const {
  if (k_min > k_max) throw std::invalid_argument("augment: k_min must not exceed k_max");
  if (k_max > nodes) {
    throw std::invalid_argument("augment: k_max (" + std::to_string(k_max) +
                                ") exceeds node count (" + std::to_string(nodes) + ")");
  }
  if (!(delta_max > 0.0 && delta_max <= 1.0)) {
    throw std::invalid_argument("augment: delta_max must lie in (0, 1]");
  }
  if (noise.kind == NoiseKind::gaussian && !(noise.sigma >= 0.0)) {
    throw std::invalid_argument("augment: gaussian sigma must be >= 0");
  }
  if (noise.kind == NoiseKind::uniform && !(noise.lo <= noise.hi)) {
    throw std::invalid_argument("augment: uniform noise needs lo <= hi");
  }
}

// ---------------------------------------------------------------- operations

std::vector<std::size_t> select_nodes(std::size_t nodes, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate(nodes);
  const auto k = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(cfg.k_min), static_cast<std::int64_t>(cfg.k_max)));
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  std::vector<std::size_t> pool(nodes);
  for (std::size_t i = 0; i < nodes; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(nodes - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Connectome apply_dilate_shrink(const Connectome& c, std::span<const NodeEdit> edits,
                               const std::function<double(std::size_t, std::size_t)>& delta) {
  const std::size_t v = c.nodes();
  std::vector<int> dir(v, -1);  // -1 untouched, 0 dilate, 1 shrink
  for (const auto& e : edits) {
    if (e.node >= v) throw std::invalid_argument("dilate_shrink: node index out of range");
    dir[e.node] = e.direction == Direction::dilate ? 0 : 1;
  }
  Tensor m = c.matrix();
  for (std::size_t n = 0; n < v; ++n) {
    if (dir[n] < 0) continue;
    for (std::size_t u = 0; u < v; ++u) {
      if (u == n) continue;
      if (dir[u] >= 0 && u < n) continue;  // already handled by the lower-indexed node
      const double d = delta(n, u);
      const double x = m(n, u);
      const double magnitude = dir[n] == 0 ? std::min(std::abs(x) + d, 1.0)
                                           : std::max(std::abs(x) - d, 0.0);
      const double y = magnitude == 0.0 ? 0.0 : std::copysign(magnitude, x);
      m(n, u) = m(u, n) = y;
    }
  }
  return Connectome::from_matrix(m, 0.0);
}

namespace {

std::vector<NodeEdit> draw_edits(std::span<const std::size_t> nodes, Rng& rng) {
  std::vector<NodeEdit> edits;
  edits.reserve(nodes.size());
  for (auto n : nodes) edits.push_back({n, rng.coin() ? Direction::dilate : Direction::shrink});
  std::sort(edits.begin(), edits.end(),
            [](const NodeEdit& a, const NodeEdit& b) { return a.node < b.node; });
  return edits;
}

Connectome apply_random_increments(const Connectome& c, std::span<const NodeEdit> edits,
                                   double delta_max, Rng& rng) {
  return apply_dilate_shrink(c, edits,
                             [&](std::size_t, std::size_t) { return rng.uniform(0.0, delta_max); });
}

}  // namespace

Connectome dilate_shrink(const Connectome& c, std::span<const std::size_t> nodes,
                         const AugmentConfig& cfg, Rng& rng) {
  return apply_random_increments(c, draw_edits(nodes, rng), cfg.delta_max, rng);
}

Connectome background_noise(const Connectome& c, std::span<const std::size_t> selected,
                            const AugmentConfig& cfg, Rng& rng) {
  if (cfg.noise.kind == NoiseKind::none) return c;
  const std::size_t v = c.nodes();
  std::vector<bool> chosen(v, false);
  for (auto n : selected) {
    if (n >= v) throw std::invalid_argument("background_noise: node index out of range");
    chosen[n] = true;
  }
  Tensor m = c.matrix();
  for (std::size_t i = 0; i < v; ++i) {
    if (chosen[i]) continue;
    for (std::size_t j = i + 1; j < v; ++j) {
      if (chosen[j]) continue;
      const double y = std::clamp(m(i, j) + cfg.noise.draw(rng), -1.0, 1.0);
      m(i, j) = m(j, i) = y;
    }
  }
  return Connectome::from_matrix(m, 0.0);
}

AugmentedView augment_view(const Connectome& c, const AugmentConfig& cfg, Rng& rng) {
  const auto nodes = select_nodes(c.nodes(), cfg, rng);
  auto edits = draw_edits(nodes, rng);
  Connectome shaped = apply_random_increments(c, edits, cfg.delta_max, rng);
  return AugmentedView{background_noise(shaped, nodes, cfg, rng), std::move(edits)};
}

ViewPair make_view_pair(const Connectome& c, const AugmentConfig& cfg, Rng& rng,
                        std::string source_id) {
  cfg.validate(c.nodes());
  auto a = augment_view(c, cfg, rng);
  auto b = augment_view(c, cfg, rng);
  return ViewPair{std::move(a.view), std::move(b.view), std::move(source_id)};
}

}  // namespace cssl
