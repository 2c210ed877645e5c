#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "usgan/errors.hpp"

namespace usgan {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Strict reader for one JSON object: fields are pulled by name and any key
/// left unread is reported by finish() as an unknown key.
class JsonFields {
 public:
  JsonFields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be a JSON object");
  }

  template <typename V>
  JsonFields& read(const std::string& key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(qualified(key) + " has the wrong type (" + std::string(it->type_name()) + ")");
    }
    return *this;
  }

  /// Calls f(JsonFields&) on a nested object when present.
  template <typename F>
  JsonFields& section(const std::string& key, F&& f) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    JsonFields sub(*it, qualified(key));
    f(sub);
    sub.finish();
    return *this;
  }

  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) out.push_back(qualified(it.key()));
    return out;
  }

  void finish() const {
    const auto unknown = unknown_keys();
    if (unknown.empty()) return;
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ConfigError(msg);
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string label() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace usgan
