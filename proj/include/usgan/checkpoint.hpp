#pragma once

// Checkpoint directory:
//   manifest.json  config, step, epoch, seed and a parameter index
//                  name -> {shape, dtype, offset, byte_length, checksum}
//   params.bin     little-endian float32 tensors concatenated in index order
// Checksums are CRC-32 of each tensor's bytes.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "usgan/json_util.hpp"
#include "usgan/models.hpp"
#include "usgan/png_io.hpp"

namespace usgan {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kParamsFile = "params.bin";
inline constexpr int kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Config (de)serialisation

inline OrderedJson to_json(const ModelConfig& c) {
  return OrderedJson{{"generator",
                      {{"base_channels", c.generator.base_channels},
                       {"levels", c.generator.levels},
                       {"adain_sites", c.generator.adain_sites},
                       {"in_channels", c.generator.in_channels},
                       {"out_channels", c.generator.out_channels}}},
                     {"discriminator", {{"base_channels", c.discriminator.base_channels}}},
                     {"codegen",
                      {{"input_dim", c.codegen.input_dim},
                       {"hidden_layers", c.codegen.hidden_layers},
                       {"hidden_width", c.codegen.hidden_width}}}};
}

inline void read_model_config(JsonFields& f, ModelConfig& c) {
  f.section("generator", [&](JsonFields& g) {
    g.read("base_channels", c.generator.base_channels)
        .read("levels", c.generator.levels)
        .read("adain_sites", c.generator.adain_sites)
        .read("in_channels", c.generator.in_channels)
        .read("out_channels", c.generator.out_channels);
  });
  f.section("discriminator", [&](JsonFields& d) { d.read("base_channels", c.discriminator.base_channels); });
  f.section("codegen", [&](JsonFields& g) {
    g.read("input_dim", c.codegen.input_dim).read("hidden_layers", c.codegen.hidden_layers).read("hidden_width", c.codegen.hidden_width);
  });
}

inline ModelConfig model_config_from_json(const Json& j, const std::string& path = "model") {
  ModelConfig c;
  JsonFields f(j, path);
  read_model_config(f, c);
  f.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

inline std::uint32_t crc32_of(const void* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

/// Metadata stored next to the parameters.
struct CheckpointMeta {
  ModelConfig config;
  long step = 0;
  int epoch = 0;
  std::uint64_t seed = 0;
  OrderedJson extra = OrderedJson::object();  // training bookkeeping (best epoch, history, ...)
};

struct Checkpoint {
  CheckpointMeta meta;
  Networks<float> nets;
  std::string id;  // "<dirname>-<crc of params.bin>"
};

namespace detail {
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void append_params(const ParamSet<float>& ps, Bytes& blob, OrderedJson& index) {
  for (const auto& [name, v] : ps) {
    const auto& t = v.value();
    const std::size_t offset = blob.size(), bytes = t.size() * sizeof(float);
    blob.resize(offset + bytes);
    std::memcpy(blob.data() + offset, t.data(), bytes);
    index.push_back(OrderedJson{{"name", name},
                                {"shape", t.shape()},
                                {"dtype", "float32"},
                                {"offset", offset},
                                {"byte_length", bytes},
                                {"checksum", hex32(crc32_of(t.data(), bytes))}});
  }
}
}  // namespace detail

inline std::string checkpoint_id(const std::filesystem::path& dir, std::uint32_t blob_crc) {
  auto name = std::filesystem::absolute(dir).lexically_normal().filename().string();
  if (name.empty()) name = std::filesystem::absolute(dir).lexically_normal().parent_path().filename().string();
  return name + "-" + hex32(blob_crc);
}

/// Writes the networks to `dir` (created if needed) and returns the id.
inline std::string save_checkpoint(const std::filesystem::path& dir, const Networks<float>& nets, const CheckpointMeta& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  Bytes blob;
  OrderedJson index = OrderedJson::array();
  for (const auto* ps : {&nets.generator, &nets.codegen, &nets.disc_x, &nets.disc_y}) detail::append_params(*ps, blob, index);
  const std::uint32_t crc = crc32_of(blob.data(), blob.size());

  OrderedJson m;
  m["version"] = kCheckpointVersion;
  m["config"] = to_json(meta.config);
  m["step"] = meta.step;
  m["epoch"] = meta.epoch;
  m["seed"] = meta.seed;
  m["params_file"] = kParamsFile;
  m["params_checksum"] = hex32(crc);
  for (auto it = meta.extra.begin(); it != meta.extra.end(); ++it) m[it.key()] = it.value();
  m["parameters"] = std::move(index);

  write_file(dir / kParamsFile, blob);
  const std::string text = m.dump(2) + "\n";
  write_file(dir / kManifestFile, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return checkpoint_id(dir, crc);
}

inline OrderedJson read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  if (!std::filesystem::exists(path)) throw NotFoundError("no checkpoint manifest at " + path.string());
  std::ifstream in(path);
  try {
    return OrderedJson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Loads and verifies every tensor checksum. Parameters missing from the
/// file or with a mismatched shape are errors.
inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const OrderedJson m = read_manifest(dir);
  Checkpoint ck;
  try {
    ck.meta.config = model_config_from_json(Json::parse(m.at("config").dump()), "config");
    ck.meta.step = m.at("step").get<long>();
    ck.meta.epoch = m.at("epoch").get<int>();
    ck.meta.seed = m.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / kManifestFile).string() + ": " + e.what());
  }
  for (auto it = m.begin(); it != m.end(); ++it) {
    static const std::set<std::string> core{"version", "config", "step", "epoch", "seed", "params_file", "params_checksum", "parameters"};
    if (!core.count(it.key())) ck.meta.extra[it.key()] = it.value();
  }

  const Bytes blob = read_file(dir / kParamsFile);
  const std::uint32_t crc = crc32_of(blob.data(), blob.size());
  if (m.contains("params_checksum") && m["params_checksum"] != hex32(crc)) throw IoError(dir.string() + ": params.bin checksum mismatch");

  ck.nets = Networks<float>::init(ck.meta.config, 0);
  std::map<std::string, ParamSet<float>*> owners;
  for (auto* ps : {&ck.nets.generator, &ck.nets.codegen, &ck.nets.disc_x, &ck.nets.disc_y})
    for (const auto& [name, v] : *ps) owners[name] = ps;

  std::set<std::string> loaded;
  for (const auto& e : m.at("parameters")) {
    const auto name = e.at("name").get<std::string>();
    auto owner = owners.find(name);
    if (owner == owners.end()) throw IoError("checkpoint has unexpected parameter '" + name + "'");
    auto& var = (*owner->second)[name];
    const auto shape = e.at("shape").get<Shape>();
    if (shape != var.shape()) throw IoError("parameter '" + name + "' has shape " + shape_str(shape) + ", config expects " + shape_str(var.shape()));
    if (e.at("dtype") != "float32") throw IoError("parameter '" + name + "' has unsupported dtype");
    const auto offset = e.at("offset").get<std::size_t>();
    const auto bytes = e.at("byte_length").get<std::size_t>();
    if (bytes != var.value().size() * sizeof(float) || offset + bytes > blob.size()) throw IoError("parameter '" + name + "' is truncated");
    if (e.at("checksum") != hex32(crc32_of(blob.data() + offset, bytes))) throw IoError("checksum mismatch for parameter '" + name + "'");
    std::memcpy(var.mutable_value().data(), blob.data() + offset, bytes);
    loaded.insert(name);
  }
  for (const auto& [name, _] : owners)
    if (!loaded.count(name)) throw IoError("checkpoint is missing parameter '" + name + "'");
  ck.id = checkpoint_id(dir, crc);
  return ck;
}

/// Re-verifies every checksum in a checkpoint directory without building
/// the networks. Returns the number of tensors checked.
inline std::size_t verify_checkpoint(const std::filesystem::path& dir) {
  const OrderedJson m = read_manifest(dir);
  const Bytes blob = read_file(dir / kParamsFile);
  std::size_t n = 0;
  for (const auto& e : m.at("parameters")) {
    const auto offset = e.at("offset").get<std::size_t>();
    const auto bytes = e.at("byte_length").get<std::size_t>();
    if (offset + bytes > blob.size() || e.at("checksum") != hex32(crc32_of(blob.data() + offset, bytes)))
      throw IoError("checksum mismatch for parameter '" + e.at("name").get<std::string>() + "'");
    ++n;
  }
  return n;
}

}  // namespace usgan
