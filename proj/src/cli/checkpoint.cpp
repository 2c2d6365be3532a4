#include "dodt/cli/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace dodt::cli {

namespace {

using nlohmann::json;

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
  return out + "]";
}

std::size_t count_of(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void put_le(std::string& out, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float v = 0.0f;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

json transformer_meta(const odt::TransformerConfig& c) {
  return {{"obs_dim", c.obs_dim},     {"act_dim", c.act_dim},   {"context", c.context},
          {"layers", c.layers},       {"width", c.width},       {"heads", c.heads},
          {"max_timestep", c.max_timestep}, {"rtg_scale", c.rtg_scale}};
}

}  // namespace

Checkpoint capture(std::string model, const nn::ParamList& params, nlohmann::json meta) {
  Checkpoint c;
  c.model = std::move(model);
  c.meta = std::move(meta);
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    ParamRecord r;
    r.name = p.name;
    r.shape = p.tensor.shape();
    r.offset = offset;
    for (double v : p.tensor.values()) r.values.push_back(static_cast<float>(v));
    offset += 4 * r.values.size();
    c.params.push_back(std::move(r));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  json params = json::array();
  std::string blob;
  for (const auto& p : ckpt.params) {
    if (p.offset != blob.size()) {
      throw CheckpointError("checkpoint parameter '" + p.name + "' has offset " +
                            std::to_string(p.offset) + ", expected " + std::to_string(blob.size()));
    }
    params.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", p.offset}});
    for (float v : p.values) put_le(blob, v);
  }
  const json manifest{{"model", ckpt.model},
                      {"schema_version", ckpt.schema_version},
                      {"meta", ckpt.meta},
                      {"params", params}};
  std::ofstream m(dir / kManifestFile, std::ios::binary);
  m << manifest.dump(2) << '\n';
  std::ofstream b(dir / kParamsFile, std::ios::binary);
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!m || !b) throw CheckpointError("failed to write checkpoint to " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream m(dir / kManifestFile, std::ios::binary);
  if (!m) throw CheckpointError("cannot open " + (dir / kManifestFile).string());
  std::ifstream b(dir / kParamsFile, std::ios::binary);
  if (!b) throw CheckpointError("cannot open " + (dir / kParamsFile).string());
  const std::string blob{std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>()};

  Checkpoint c;
  try {
    const json manifest = json::parse(m);
    c.model = manifest.at("model").get<std::string>();
    c.schema_version = manifest.at("schema_version").get<int>();
    c.meta = manifest.at("meta");
    if (c.schema_version != kCheckpointSchema) {
      throw CheckpointError("unsupported checkpoint schema_version " +
                            std::to_string(c.schema_version));
    }
    std::uint64_t end = 0;
    for (const auto& e : manifest.at("params")) {
      ParamRecord r;
      r.name = e.at("name").get<std::string>();
      r.shape = e.at("shape").get<std::vector<std::size_t>>();
      r.offset = e.at("offset").get<std::uint64_t>();
      if (r.offset < end || r.offset % 4 != 0) {
        throw CheckpointError("parameter '" + r.name + "' at offset " + std::to_string(r.offset) +
                              " overlaps or is misaligned (previous end " + std::to_string(end) + ")");
      }
      const std::size_t n = count_of(r.shape);
      end = r.offset + 4 * n;
      if (end > blob.size()) {
        throw CheckpointError("parameter '" + r.name + "' extends past the end of params.bin (" +
                              std::to_string(end) + " > " + std::to_string(blob.size()) + " bytes)");
      }
      const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + r.offset;
      r.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) r.values[i] = get_le(base + 4 * i);
      c.params.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("malformed " + (dir / kManifestFile).string() + ": " + e.what());
  }
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamList& params) {
  if (ckpt.params.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.params.size()) +
                          " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rec = ckpt.params[i];
    const auto& p = params[i];
    if (rec.name != p.name || rec.shape != p.tensor.shape()) {
      throw CheckpointError("parameter " + std::to_string(i) + ": checkpoint has '" + rec.name +
                            "' " + shape_text(rec.shape) + ", model expects '" + p.name + "' " +
                            shape_text(p.tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor shared = params[i].tensor;  // shares storage with the model
    auto dst = shared.values_mut();
    const auto& src = ckpt.params[i].values;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<double>(src[j]);
  }
}

Checkpoint odt_checkpoint(const odt::OdtAgent& agent, const std::string& env_name) {
  return capture("odt", agent.parameters(),
                 {{"env", env_name}, {"transformer", transformer_meta(agent.model().config())}});
}

nn::ParamList dreamer_parameters(const world::DreamerAgent& agent) {
  nn::ParamList out;
  const auto add = [&](const std::string& prefix, const nn::ParamList& ps) {
    for (const auto& p : ps) out.push_back({prefix + p.name, p.tensor});
  };
  add("world.", agent.world_parameters());
  add("actor.", agent.actor_parameters());
  add("value.", agent.value_parameters());
  return out;
}

Checkpoint dreamer_checkpoint(const world::DreamerAgent& agent, const std::string& env_name) {
  const auto& c = agent.config();
  const json world{{"obs_dim", c.model.obs_dim}, {"act_dim", c.model.act_dim},
                   {"deter", c.model.deter},     {"stoch", c.model.stoch},
                   {"hidden", c.model.hidden},   {"embed", c.model.embed}};
  return capture("dreamer", dreamer_parameters(agent),
                 {{"env", env_name},
                  {"world_model", world},
                  {"actor_hidden", c.actor_hidden},
                  {"value_hidden", c.value_hidden}});
}

void check_compatible(const Checkpoint& ckpt, const std::string& model, const env::EnvSpec& spec) {
  if (ckpt.model != model) {
    throw CheckpointError("expected a " + model + " checkpoint, found " + ckpt.model);
  }
  const json& dims = ckpt.meta.at(model == "odt" ? "transformer" : "world_model");
  const auto obs = dims.at("obs_dim").get<std::size_t>();
  const auto act = dims.at("act_dim").get<std::size_t>();
  if (obs != spec.obs_dim || act != spec.act_dim) {
    std::ostringstream msg;
    msg << "dimension mismatch: env " << spec.name << " expects obs_dim=" << spec.obs_dim
        << " act_dim=" << spec.act_dim << ", checkpoint has obs_dim=" << obs
        << " act_dim=" << act;
    throw CheckpointError(msg.str());
  }
}

std::unique_ptr<odt::OdtAgent> load_odt_agent(const Checkpoint& ckpt, const env::EnvSpec& spec,
                                              odt::OdtConfig config, std::uint64_t seed) {
  check_compatible(ckpt, "odt", spec);
  try {
    const json& t = ckpt.meta.at("transformer");
    config.model.context = t.at("context").get<std::size_t>();
    config.model.layers = t.at("layers").get<std::size_t>();
    config.model.width = t.at("width").get<std::size_t>();
    config.model.heads = t.at("heads").get<std::size_t>();
    config.model.max_timestep = t.at("max_timestep").get<std::size_t>();
    config.model.rtg_scale = t.at("rtg_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed odt checkpoint meta: ") + e.what());
  }
  auto agent = std::make_unique<odt::OdtAgent>(spec, config, seed);
  apply_checkpoint(ckpt, agent->parameters());
  return agent;
}

}  // namespace dodt::cli
