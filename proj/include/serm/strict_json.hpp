#pragma once

#include <set>
#include <string>

#include "serm/core.hpp"
#include "serm/errors.hpp"

namespace serm {

// Reads fields of one JSON object section, remembering which keys were
// consumed so that leftovers can be rejected as unknown.
class StrictReader {
 public:
  StrictReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected a JSON object", path_);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void optional(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("wrong type", field(key));
    }
  }

  template <typename T>
  void required(const std::string& key, T& out) {
    if (!j_.contains(key)) throw ConfigError("missing required field", field(key));
    optional(key, out);
  }

  const Json* section(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key", field(it.key()));
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace serm
