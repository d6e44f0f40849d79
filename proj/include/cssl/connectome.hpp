#pragma once

#include <cstddef>
#include <stdexcept>

#include "cssl/tensor.hpp"

namespace cssl {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L x V matrix of regional signals (rows are time points).
class TimeSeries {
 public:
  explicit TimeSeries(Tensor values);

  std::size_t length() const { return values_.rows(); }
  std::size_t regions() const { return values_.cols(); }
  const Tensor& values() const noexcept { return values_; }

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

 private:
  Tensor values_;
};

/// Symmetric V x V correlation matrix with unit diagonal and entries in [-1, 1].
class Connectome {
 public:
  /// Validates and canonicalizes a matrix. Asymmetry, diagonal deviation and range
  /// excess up to `tol` are repaired (mirror of the upper triangle, diagonal set
  /// to 1, clamp); anything larger throws DataError.
  static Connectome from_matrix(const Tensor& m, double tol = 1e-9);
  static Connectome identity(std::size_t v);

  std::size_t nodes() const { return m_.rows(); }
  double operator()(std::size_t u, std::size_t v) const { return m_(u, v); }
  const Tensor& matrix() const noexcept { return m_; }

  friend bool operator==(const Connectome&, const Connectome&) = default;

 private:
  explicit Connectome(Tensor m) : m_(std::move(m)) {}
  Tensor m_;
};

/// Pearson correlation of every pair of columns with population (1/L) moments.
/// Columns with zero variance correlate 0 with everything else; the diagonal is 1.
Connectome pearson_connectome(const TimeSeries& ts);

/// True when `m` is exactly symmetric, has a unit diagonal and lies in [-1, 1].
bool satisfies_connectome_invariants(const Tensor& m);

}  // namespace cssl
