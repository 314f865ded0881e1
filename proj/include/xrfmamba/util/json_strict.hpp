#pragma once

// Small helpers for reading configuration objects that reject unknown keys.

#include <initializer_list>
#include <set>
#include <string>

#include "json.hpp"
#include "xrfmamba/errors.hpp"

namespace xrf::util {

using json = nlohmann::json;

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  require_object(j, where);
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

/// Reads j[key] into `out` when present; leaves the default otherwise.
template <typename V>
void read_opt(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace xrf::util
