#pragma once

// Application config file: {"dataset": {...}, "model": {...}, "train": {...},
// "serve": {...}}. Every section is optional; unknown keys are rejected.

#include <filesystem>
#include <fstream>
#include <string>

#include "usgan/checkpoint.hpp"
#include "usgan/phantom.hpp"
#include "usgan/training.hpp"

namespace usgan {

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 4;
  int max_body_mb = 64;

  void validate() const {
    if (port < 0 || port > 65535) throw ConfigError("serve.port must lie in [0, 65535]");
    if (threads < 1) throw ConfigError("serve.threads must be >= 1");
    if (max_body_mb < 1) throw ConfigError("serve.max_body_mb must be >= 1");
  }
};

struct AppConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  ServeConfig serve;

  void validate() const {
    dataset.validate();
    model.validate();
    train.validate();
    serve.validate();
  }
};

inline OrderedJson to_json(const AppConfig& c) {
  return {{"dataset",
           {{"n_train", c.dataset.n_train},
            {"n_eval", c.dataset.n_eval},
            {"slices_per_volume", c.dataset.slices_per_volume},
            {"phantom", to_json(c.dataset.spec)}}},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"serve", {{"host", c.serve.host}, {"port", c.serve.port}, {"threads", c.serve.threads}, {"max_body_mb", c.serve.max_body_mb}}}};
}

/// Overlays `j` onto `base` and validates the result.
inline AppConfig parse_config(const Json& j, AppConfig base = {}) {
  JsonFields root(j, "");
  root.section("dataset", [&](JsonFields& d) {
    d.read("n_train", base.dataset.n_train).read("n_eval", base.dataset.n_eval).read("slices_per_volume", base.dataset.slices_per_volume);
    d.section("phantom", [&](JsonFields& p) { read_phantom_spec(p, base.dataset.spec); });
  });
  root.section("model", [&](JsonFields& m) { read_model_config(m, base.model); });
  root.section("train", [&](JsonFields& t) { read_train_config(t, base.train); });
  root.section("serve", [&](JsonFields& s) {
    s.read("host", base.serve.host).read("port", base.serve.port).read("threads", base.serve.threads).read("max_body_mb", base.serve.max_body_mb);
  });
  root.finish();
  base.validate();
  return base;
}

inline AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace usgan
