#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcdiag/network.hpp"

namespace pcdiag::nets {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string training = "{}";  // JSON echo of the training configuration
};

struct LoadedModel {
  Classifier model;
  CheckpointMeta meta;
};

/// Binary layout (little-endian): "PCDG", u32 version, u32 + header JSON
/// (the network spec plus "seed"/"training"), u32 array count, per array
/// u16 + name, u8 rank, u32 dims, f64 data; trailing CRC32 of everything before it.
std::vector<std::uint8_t> serialize_checkpoint(const Classifier& model, const CheckpointMeta& meta = {});
LoadedModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Classifier& model, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {});
LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace pcdiag::nets
