#pragma once

// Checkpoint container, all integers and reals little-endian:
//
//   "PSCK" | u32 version
//   u32 n_tensors, then per tensor:
//       u32 name_len | name bytes | u32 rank | u32 dims[rank] | f64 values[prod(dims)]
//   u32 n_scalars, then per scalar:
//       u32 name_len | name bytes | f64 value
//   u64 config_len | config bytes (JSON text)

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pinsight/learncore/optim.hpp"

namespace pinsight::learn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::map<std::string, double> scalars;  // training state (epoch, step, best accuracy, ...)
  std::string config_json;

  bool operator==(const Checkpoint& other) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
/// Throws CorruptHeader on bad magic or version, Truncation on short input.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pinsight::learn
