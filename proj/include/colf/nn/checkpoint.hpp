#pragma once

#include "colf/nn/gaussian.hpp"
#include "colf/nn/mlp.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace colf::nn {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedParameters {
  std::string name;
  ParameterSet<float> params;
};

/**
 * On-disk layout:
 *
 *   "COLFCKPT"                      8 bytes magic
 *   header length                   uint32 little-endian
 *   header                          UTF-8 JSON object
 *   tensors                         float32 little-endian, in header order
 *
 * The header records the format version, each network's shape and element
 * count, the log-std clamp bounds, the seed, and caller metadata.
 */
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::uint64_t seed = 0;
  LogStdBounds log_std_bounds;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedParameters> networks;

  const ParameterSet<float>& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Byte-level forms used by the file functions; exposed for tests.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace colf::nn
