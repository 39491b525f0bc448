#pragma once

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>

#include "bpa/error.hpp"

namespace bpa::detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError("", "expected an object");
  for (const auto& [key, _] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw ConfigError(key, "unknown key");
  }
}

// Reads j[key] into out when present; type errors name the key.
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(key, std::string("wrong type: ") + e.what());
  }
}

// Re-raises a nested section's ConfigError with the section name prepended to its field path.
[[noreturn]] inline void rethrow_nested(const std::string& section, const ConfigError& e) {
  std::string msg = e.what();
  if (!e.field().empty() && msg.rfind(e.field() + ": ", 0) == 0) msg.erase(0, e.field().size() + 2);
  throw ConfigError(e.field().empty() ? section : section + "." + e.field(), msg);
}

}  // namespace bpa::detail
