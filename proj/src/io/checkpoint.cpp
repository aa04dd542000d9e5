#include "gcbf/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gcbf/error.hpp"
#include "gcbf/io/config.hpp"
#include "gcbf/io/formats.hpp"

namespace gcbf::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint64_t fnv(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void put_le(std::string& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t u = 0;
  for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const gnn::GnnParams& p, int step, const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  const auto tensors = p.tensors();
  const auto names = p.tensor_names();
  std::string payload;
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    entries.push_back({{"name", names[k]}, {"shape", tensors[k]->shape()}, {"offset", payload.size()}});
    for (double v : tensors[k]->values()) put_le(payload, v);
  }
  nlohmann::json m;
  m["format_version"] = kCheckpointVersion;
  m["env"] = std::string(dyn::env_name(p.env));
  m["step"] = step;
  m["payload"] = {{"file", "params.bin"}, {"bytes", payload.size()}, {"fnv1a", hex64(fnv(payload))}};
  m["tensors"] = entries;
  m["config_hash"] = hex64(json_hash(config));
  m["config"] = config;
  // Payload first: a manifest only ever points at a complete params.bin.
  atomic_write(dir / "params.bin", payload);
  atomic_write(dir / "manifest.json", m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, std::optional<dyn::EnvKind> expected) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw ConfigError("no checkpoint at " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptPayloadError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }

  Checkpoint ck;
  auto& man = ck.manifest;
  try {
    man.version = m.at("format_version").get<int>();
    if (man.version != kCheckpointVersion) {
      throw CorruptPayloadError("checkpoint format version " + std::to_string(man.version) + ", expected " +
                                std::to_string(kCheckpointVersion));
    }
    man.env = dyn::env_from_name(m.at("env").get<std::string>());
    man.step = m.at("step").get<int>();
    man.payload_bytes = m.at("payload").at("bytes").get<std::size_t>();
    man.payload_hash = parse_hex64(m.at("payload").at("fnv1a").get<std::string>());
    man.config_hash = parse_hex64(m.at("config_hash").get<std::string>());
    man.config = m.at("config");
    for (const auto& e : m.at("tensors")) {
      man.tensors.push_back({e.at("name").get<std::string>(), e.at("shape").get<std::vector<std::size_t>>(),
                             e.at("offset").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptPayloadError("checkpoint manifest is incomplete: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw CorruptPayloadError(std::string("checkpoint manifest: ") + e.what());
  }
  if (json_hash(man.config) != man.config_hash) throw CorruptPayloadError("checkpoint config hash mismatch");
  if (expected && *expected != man.env) {
    throw EnvMismatchError("checkpoint is for " + std::string(dyn::env_name(man.env)) + ", requested " +
                           std::string(dyn::env_name(*expected)));
  }

  const std::string payload = read_file(dir / "params.bin");
  if (payload.size() != man.payload_bytes) {
    throw CorruptPayloadError("params.bin has " + std::to_string(payload.size()) + " bytes, manifest says " +
                              std::to_string(man.payload_bytes));
  }
  if (fnv(payload) != man.payload_hash) throw CorruptPayloadError("params.bin hash mismatch");

  num::Rng rng(0);
  ck.params = gnn::init_params(rng, man.env);
  const auto tensors = ck.params.tensors();
  const auto names = ck.params.tensor_names();
  if (man.tensors.size() != tensors.size()) throw CorruptPayloadError("checkpoint tensor count mismatch");
  std::size_t expected_bytes = 0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const TensorEntry& e = man.tensors[k];
    if (e.name != names[k] || e.shape != tensors[k]->shape() || e.offset != expected_bytes) {
      throw CorruptPayloadError("checkpoint tensor " + e.name + " does not match the network layout");
    }
    double* dst = tensors[k]->ptr();
    for (std::size_t i = 0; i < tensors[k]->size(); ++i) dst[i] = get_le(payload.data() + e.offset + 8 * i);
    expected_bytes += 8 * tensors[k]->size();
  }
  if (expected_bytes != payload.size()) throw CorruptPayloadError("params.bin length does not match the shapes");
  if (!ck.params.all_finite()) throw CorruptPayloadError("checkpoint holds non-finite parameters");
  return ck;
}

}  // namespace gcbf::io
