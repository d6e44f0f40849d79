#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cssl/autodiff.hpp"
#include "cssl/rng.hpp"
#include "cssl/tensor.hpp"

namespace cssl {

/// Raised by gram_schmidt when a row is numerically dependent on earlier rows.
class RankDeficiencyError : public NumericError {
 public:
  RankDeficiencyError(std::size_t row, double residual);
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

struct EncoderConfig {
  std::size_t nodes = 0;      // V
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 0;    // 0: same as nodes
  std::size_t ff_dim = 0;     // 0: 4 * d_model
  std::size_t clusters = 100; // N_o
  std::size_t d_out = 8;
  std::size_t proj_dim = 128;
  double ff_slope = 0.0;      // feed-forward activation; 0 is ReLU
  double head_slope = 0.01;   // LeakyReLU slope in the projection and classifier heads
  double ln_eps = 1e-5;

  std::size_t width() const noexcept { return d_model == 0 ? nodes : d_model; }
  std::size_t ff_width() const noexcept { return ff_dim == 0 ? 4 * width() : ff_dim; }
  std::size_t feature_dim() const noexcept { return clusters * d_out; }

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

inline constexpr std::size_t kClassifierHidden1 = 256;
inline constexpr std::size_t kClassifierHidden2 = 32;
inline constexpr std::size_t kClasses = 2;

/// Fresh parameters under the prefixes "encoder.", "readout.", "project." and
/// "classifier.". Affine maps are uniform in +-1/sqrt(fan_in); cluster centers
/// are standard normal, then orthonormalized.
ParamSet init_params(const EncoderConfig& cfg, Rng& rng);

/// Expected name -> shape table for a configuration.
std::map<std::string, Shape> param_shapes(const EncoderConfig& cfg);

/// Throws ShapeError naming the first missing or mis-shaped tensor whose name
/// starts with one of the prefixes (all tensors when prefixes is empty).
void check_params(const EncoderConfig& cfg, const ParamSet& params,
                  std::span<const std::string> prefixes = {});

/// Scalar counts grouped by the component prefix (text before the first '.').
std::map<std::string, std::size_t> param_counts(const ParamSet& params);

/// Copies every tensor of `src` whose name starts with `prefix` into `dst`.
void copy_params(const ParamSet& src, ParamSet& dst, const std::string& prefix);

/// Row-wise orthonormalization (classical Gram-Schmidt with one
/// reorthogonalization pass). Differentiable; throws RankDeficiencyError when
/// a residual norm falls below 1e-8.
Var gram_schmidt(Var e);
Tensor gram_schmidt(const Tensor& e);

inline constexpr double kRankTolerance = 1e-8;

/// Intermediate values of the readout, kept for inspection.
struct ReadoutTrace {
  Var centers;     // E' (N_o x d_model)
  Var assignment;  // A  (V x N_o)
  Var clusters;    // U  (N_o x d_model)
  Var output;      // F  (N_o x d_out)
};

/// The network's parameters bound to one tape.
///
/// Parameters listed as trainable become tape parameters (and receive
/// gradients); the rest are constants.
class Network {
 public:
  Network(Tape& tape, const EncoderConfig& cfg, const ParamSet& params);
  Network(Tape& tape, const EncoderConfig& cfg, const ParamSet& params,
          const std::vector<bool>& trainable);

  const EncoderConfig& config() const noexcept { return cfg_; }
  Var param(const std::string& name) const;
  /// Substitutes a different node for a parameter (used by gradient checks).
  void replace(const std::string& name, Var v);

  /// Attention encoder: V x d_model node features -> V x d_model embeddings.
  Var encode(Var x) const;
  ReadoutTrace readout_trace(Var z) const;
  Var readout(Var z) const { return readout_trace(z).output; }
  /// Connectome (V x V) -> flattened readout (1 x D_f).
  Var features(Var c) const;
  /// B x D_f -> B x proj_dim with unit rows.
  Var project(Var f) const;
  /// B x D_f -> B x 2 logits.
  Var classify(Var f) const;

 private:
  Var affine(Var x, const std::string& prefix) const;
  Var layer_norm(Var x, const std::string& prefix) const;
  Var attention(Var x, const std::string& prefix) const;

  Tape& tape_;
  EncoderConfig cfg_;
  std::map<std::string, Var> vars_;
};

/// Mean negative log-likelihood of the labels under row-wise softmax of B x 2 logits.
Var cross_entropy(Var logits, std::span<const int> labels);

/// Softmax probability of class 1 per row.
std::vector<double> positive_probability(const Tensor& logits);

/// Probability of class 1 for each connectome, evaluated without gradients.
std::vector<double> predict(const EncoderConfig& cfg, const ParamSet& params,
                            std::span<const Tensor> connectomes);

}  // namespace cssl
