#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dodt/nn/layers.hpp"
#include "dodt/odt/policy.hpp"
#include "dodt/world/dreamer.hpp"

namespace dodt::cli {

// On disk a checkpoint is a directory holding
//   manifest.json  {"model", "schema_version", "meta", "params": [{name, shape, offset}]}
//   params.bin     little-endian float32 values, in manifest order
// Offsets are in bytes and must be ascending and non-overlapping.
inline constexpr int kCheckpointSchema = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kParamsFile = "params.bin";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParamRecord {
  std::string name;
  std::vector<std::size_t> shape;
  std::uint64_t offset = 0;
  std::vector<float> values;
};

struct Checkpoint {
  std::string model;  // "odt" or "dreamer"
  int schema_version = kCheckpointSchema;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ParamRecord> params;
};

// Packs parameter values as float32 with consecutive offsets.
Checkpoint capture(std::string model, const nn::ParamList& params, nlohmann::json meta);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Copies stored values into `params`. Names and shapes must match in order.
void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamList& params);

Checkpoint odt_checkpoint(const odt::OdtAgent& agent, const std::string& env_name);
Checkpoint dreamer_checkpoint(const world::DreamerAgent& agent, const std::string& env_name);
nn::ParamList dreamer_parameters(const world::DreamerAgent& agent);

// Rebuilds an agent from an "odt" checkpoint. The transformer shape comes
// from the checkpoint, the rest of `config` is kept. Throws CheckpointError
// when the checkpoint's dims differ from `spec`.
std::unique_ptr<odt::OdtAgent> load_odt_agent(const Checkpoint& ckpt, const env::EnvSpec& spec,
                                              odt::OdtConfig config, std::uint64_t seed);

// Throws CheckpointError unless the checkpoint is a `model` checkpoint for
// an env with these dims.
void check_compatible(const Checkpoint& ckpt, const std::string& model, const env::EnvSpec& spec);

}  // namespace dodt::cli
