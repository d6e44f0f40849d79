#include "cssl/connectome.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace cssl {

TimeSeries::TimeSeries(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 2) throw DataError("time series must be an L x V matrix");
  if (values_.rows() < 2) throw DataError("time series needs at least 2 time points");
  if (!values_.all_finite()) throw DataError("time series contains non-finite values");
}

Connectome Connectome::from_matrix(const Tensor& m, double tol) {
  if (m.rank() != 2 || m.rows() != m.cols()) {
    throw DataError("connectome must be square, got " + shape_string(m.shape()));
  }
  if (!m.all_finite()) throw DataError("connectome contains non-finite values");
  const std::size_t v = m.rows();
  Tensor c({v, v});
  for (std::size_t i = 0; i < v; ++i) {
    if (std::abs(m(i, i) - 1.0) > tol) {
      throw DataError("connectome diagonal entry " + std::to_string(i) + " is not 1");
    }
    c(i, i) = 1.0;
    for (std::size_t j = i + 1; j < v; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > tol) {
        throw DataError("connectome is not symmetric at (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");
      }
      const double x = m(i, j);
      if (std::abs(x) > 1.0 + tol) {
        throw DataError("connectome entry out of [-1, 1] at (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");
      }
      c(i, j) = c(j, i) = std::clamp(x, -1.0, 1.0);
    }
  }
  return Connectome(std::move(c));
}

Connectome Connectome::identity(std::size_t v) { return Connectome(Tensor::identity(v)); }

Connectome pearson_connectome(const TimeSeries& ts) {
  const Tensor& x = ts.values();
  const std::size_t len = ts.length(), v = ts.regions();
  const double inv_len = 1.0 / static_cast<double>(len);

  std::vector<double> mean(v, 0.0), sd(v, 0.0);
  Tensor centered({len, v});
  for (std::size_t j = 0; j < v; ++j) {
    for (std::size_t t = 0; t < len; ++t) mean[j] += x(t, j);
    mean[j] *= inv_len;
    double ss = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      centered(t, j) = x(t, j) - mean[j];
      ss += centered(t, j) * centered(t, j);
    }
    sd[j] = std::sqrt(ss * inv_len);
  }

  // A column is degenerate when its spread is at roundoff level relative to its magnitude.
  auto degenerate = [&](std::size_t j) {
    return sd[j] <= 1e-12 * std::max(1.0, std::abs(mean[j]));
  };

  Tensor c({v, v});
  for (std::size_t i = 0; i < v; ++i) {
    c(i, i) = 1.0;
    for (std::size_t j = i + 1; j < v; ++j) {
      double r = 0.0;
      if (!degenerate(i) && !degenerate(j)) {
        double cov = 0.0;
        for (std::size_t t = 0; t < len; ++t) cov += centered(t, i) * centered(t, j);
        cov *= inv_len;
        r = std::clamp(cov / (sd[i] * sd[j]), -1.0, 1.0);
      }
      c(i, j) = c(j, i) = r;
    }
  }
  return Connectome::from_matrix(c, 0.0);
}

bool satisfies_connectome_invariants(const Tensor& m) {
  if (m.rank() != 2 || m.rows() != m.cols()) return false;
  const std::size_t v = m.rows();
  for (std::size_t i = 0; i < v; ++i) {
    if (m(i, i) != 1.0) return false;
    for (std::size_t j = 0; j < v; ++j) {
      const double x = m(i, j);
      if (!(x >= -1.0 && x <= 1.0)) return false;
      if (x != m(j, i)) return false;
    }
  }
  return true;
}

}  // namespace cssl
