#pragma once

// Strict reader for one JSON object of a config document. Every key must be
// consumed by a read() call before finish(); leftovers are reported as unknown
// keys with their full dotted path.

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <type_traits>

#include "json.hpp"

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

class JsonFields {
 public:
  JsonFields(const nlohmann::json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return object_.contains(key); }

  // Leaves `out` untouched when the key is absent.
  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      out = integral<T>(key, *it);
      return;
    }
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_of(key), "wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  template <class T>
  void require(const std::string& key, T& out) {
    if (!has(key)) throw ConfigError(path_of(key), "required key missing");
    read(key, out);
  }

  // Sub-object access; marks the key as consumed.
  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_of(it.key()), "unknown key");
    }
  }

 private:
  // Rejects fractions, negatives for unsigned fields and out-of-range values
  // instead of letting them wrap or truncate.
  template <class T>
  T integral(const std::string& key, const nlohmann::json& v) const {
    if (v.is_number_unsigned()) {
      const auto u = v.get<uint64_t>();
      if (u > static_cast<uint64_t>(std::numeric_limits<T>::max())) throw ConfigError(path_of(key), "out of range");
      return static_cast<T>(u);
    }
    if (v.is_number_integer()) {
      const auto i = v.get<int64_t>();
      if (i < 0 && std::is_unsigned_v<T>) throw ConfigError(path_of(key), "must be non-negative");
      if constexpr (std::is_signed_v<T>) {
        if (i < std::numeric_limits<T>::min() || i > std::numeric_limits<T>::max()) {
          throw ConfigError(path_of(key), "out of range");
        }
      }
      return static_cast<T>(i);
    }
    throw ConfigError(path_of(key), "expected an integer (" + std::string(v.type_name()) + ")");
  }

  const nlohmann::json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace ihvrnn
