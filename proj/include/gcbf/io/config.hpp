#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "gcbf/eval/metrics.hpp"
#include "gcbf/train/trainer.hpp"

namespace gcbf::io {

using nlohmann::json;

// Everything a run needs. Defaults come from RunConfig::defaults(env); the JSON
// form only has to name the keys it overrides (docs/formats.md).
struct RunConfig {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  dyn::DynamicsConfig dynamics;
  world::WorldParams world;  // area here is the training area
  train::TrainConfig train;
  eval::EvalSpec eval;
  std::vector<int> scaling_n;

  static RunConfig defaults(dyn::EnvKind env);
  // Pushes the shared dynamics and world settings into train and eval, then validates.
  void finalize();
};

// Throws ConfigError on unknown keys, wrong types and invalid values.
RunConfig parse_config(const json& j);
RunConfig load_config(const std::filesystem::path& path);
// The effective configuration, every key present.
json to_json(const RunConfig& c);
// FNV-1a of the canonical dump of to_json(c) without output_dir; run
// directories are stamped with it.
std::uint64_t config_hash(const RunConfig& c);
std::uint64_t json_hash(const json& j);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

}  // namespace gcbf::io
