#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "gcbf/gnn/gnn.hpp"

namespace gcbf::io {

inline constexpr int kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;  // bytes into params.bin
};

struct CheckpointManifest {
  int version = kCheckpointVersion;
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  int step = 0;
  std::vector<TensorEntry> tensors;
  std::size_t payload_bytes = 0;
  std::uint64_t payload_hash = 0;  // FNV-1a of params.bin
  std::uint64_t config_hash = 0;   // of `config`
  nlohmann::json config;           // effective run configuration
};

struct Checkpoint {
  gnn::GnnParams params;
  CheckpointManifest manifest;
};

// Writes <dir>/params.bin (little-endian float64) and <dir>/manifest.json, each
// through a temporary file and a rename.
void save_checkpoint(const std::filesystem::path& dir, const gnn::GnnParams& p, int step,
                     const nlohmann::json& config);

// Throws ConfigError when missing, CorruptPayloadError on length/hash/shape
// problems or a version mismatch, EnvMismatchError when `expected` differs.
Checkpoint load_checkpoint(const std::filesystem::path& dir, std::optional<dyn::EnvKind> expected = std::nullopt);

}  // namespace gcbf::io
