#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "cssl/dataset.hpp"
#include "cssl/pipeline.hpp"

namespace cssl {

/// Where the experiment's samples come from.
struct DataConfig {
  std::string source = "synth";  // "synth" or "dir"
  std::string path;              // dataset directory when source = dir
  std::size_t n = 200;
  std::size_t nodes = 20;
  std::size_t length = 30;
  ClassSpec classes{};
  std::uint64_t seed = 1;
};

struct RunConfig {
  DataConfig data{};
  ExperimentConfig experiment{};
};

/// Parses key = value sections:
///
///   [data] [model] [augment] [moco] [pretrain] [finetune] [split] [run]
///
/// Missing keys keep their defaults; unknown sections or keys are errors.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its effective value, in a fixed order. Parsing the result
/// reproduces the same configuration.
std::string format_config(const RunConfig& cfg);

/// Same, limited to the sections that shape training (no [data]).
std::string format_experiment_config(const ExperimentConfig& cfg);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string fingerprint(const std::string& text);

/// Loads the dataset a configuration refers to.
Dataset load_data(const DataConfig& cfg);

}  // namespace cssl
