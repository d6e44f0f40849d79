#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "cssl/autodiff.hpp"

namespace cssl {

/// Checkpoint container, all integers and floats little-endian:
///
///   char[8]  magic "CSSLCKPT"
///   u32      version (= 1)
///   u32      entry count
///   entry*   { u32 name_len; u8 name[name_len];
///              u32 rank; u64 extent[rank];
///              f64 value[prod(extent)] }
///
/// Entries appear in ParamSet order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const ParamSet& params);
ParamSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace cssl
