#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace cssl {

/// xoshiro256** seeded through splitmix64.
///
/// Every draw the library makes goes through this class, including the
/// uniform, normal and integer transforms, so a (config, seed) pair produces
/// the same bytes on any standard library. std::*_distribution is avoided
/// because its output is implementation-defined.
class Rng {
 public:
  using result_type = std::uint64_t;
  static constexpr std::string_view algorithm = "xoshiro256** (splitmix64 seeding)";

  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(); }

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n > 0. Unbiased by rejection.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller; the second variate is discarded.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool coin() { return (next() >> 63) != 0; }

  /// Independent child stream derived from this stream's next output and a tag.
  Rng fork(std::uint64_t tag);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<std::uint64_t, 4> state() const { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace cssl
