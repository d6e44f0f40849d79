#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cssl/connectome.hpp"

namespace cssl {

/// 0 = control, 1 = ASD.
using Label = int;

struct Sample {
  std::string subject_id;
  Connectome connectome;
  std::optional<Label> label;
  std::optional<TimeSeries> time_series;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Collection of samples sharing one node count.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Sample> samples);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t nodes() const noexcept { return nodes_; }
  const Sample& operator[](std::size_t i) const { return samples_.at(i); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  bool fully_labeled() const;
  std::size_t count_label(Label l) const;
  /// Samples at the given positions, in that order.
  Dataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<Sample> samples_;
  std::size_t nodes_ = 0;
};

// ---------------------------------------------------------------- files
//
// Layout of a dataset directory:
//   labels.csv            header "subject_id,label"; label is 0, 1 or empty (unlabeled)
//   <id>.conn.csv         first line V, then V lines of V comma-separated decimals
//   <id>.ts.csv           first line "L,V", then L lines of V comma-separated decimals
// A matrix file takes precedence over a time-series file for the same subject.

Connectome read_connectome_csv(const std::filesystem::path& path);
TimeSeries read_time_series_csv(const std::filesystem::path& path);
void write_connectome_csv(const std::filesystem::path& path, const Connectome& c);
void write_time_series_csv(const std::filesystem::path& path, const TimeSeries& ts);

Dataset load_dataset(const std::filesystem::path& dir);
/// Writes labels.csv plus one .conn.csv per sample (and .ts.csv when present).
void write_dataset(const std::filesystem::path& dir, const Dataset& ds, bool with_time_series = false);

// ---------------------------------------------------------------- synthetic data

/// Latent block-community generator.
///
/// Nodes are split into `blocks` contiguous communities. For each subject and
/// time point, with g, f_b and e_v independent standard normals,
///
///   x_v = global_weight * g + block_weight * s * f_{b(v)} + coupling * f_{partner(b(v))}
///         + noise * e_v
///
/// where s = 1 + jitter * N(0, 1) is drawn once per subject, partner swaps
/// blocks 0 and 1 (other blocks have no partner), and coupling is 0 for
/// class 0 and `separation` for class 1. Class 1 therefore shows stronger
/// correlation between communities 0 and 1.
struct ClassSpec {
  std::size_t blocks = 4;
  double separation = 0.6;
  double global_weight = 0.3;
  double block_weight = 0.8;
  double noise = 1.0;
  double jitter = 0.2;
};

Dataset synth_dataset(std::size_t n, std::size_t nodes, std::size_t length, const ClassSpec& spec,
                      std::uint64_t seed);

// ---------------------------------------------------------------- splitting

struct SplitSpec {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  std::uint64_t seed = 0;
};

/// Indices into the source dataset, each part sorted ascending.
struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Per-class shuffle then largest-remainder allocation of each class to the
/// three parts (ties go to the earlier part: train, then val, then test).
Split stratified_split(const Dataset& ds, const SplitSpec& spec);

}  // namespace cssl
