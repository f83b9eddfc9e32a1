#pragma once

#include <functional>
#include <map>
#include <string>

#include "ipa/config.hpp"
#include "ipa/errors.hpp"

namespace ipa::detail {

// Strict field binding: every key in the object must be bound, and each value
// must have the bound field's type.
class FieldReader {
 public:
  FieldReader(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j_.is_object()) throw ConfigError(scope_, "expected a JSON object");
  }

  FieldReader& size(const char* key, std::size_t& out) {
    bind(key, [this, &out, key](const json& v) {
      if (!v.is_number_integer() || v.get<long long>() < 0) fail(key, "expected a non-negative integer");
      out = v.get<std::size_t>();
    });
    return *this;
  }
  FieldReader& integer(const char* key, int& out) {
    bind(key, [this, &out, key](const json& v) {
      if (!v.is_number_integer()) fail(key, "expected an integer");
      out = v.get<int>();
    });
    return *this;
  }
  FieldReader& u64(const char* key, std::uint64_t& out) {
    bind(key, [this, &out, key](const json& v) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        fail(key, "expected a non-negative integer");
      }
      out = v.get<std::uint64_t>();
    });
    return *this;
  }
  FieldReader& real(const char* key, double& out) {
    bind(key, [this, &out, key](const json& v) {
      if (!v.is_number()) fail(key, "expected a number");
      out = v.get<double>();
    });
    return *this;
  }
  FieldReader& flag(const char* key, bool& out) {
    bind(key, [this, &out, key](const json& v) {
      if (!v.is_boolean()) fail(key, "expected true or false");
      out = v.get<bool>();
    });
    return *this;
  }

  FieldReader& text(const char* key, std::string& out) {
    bind(key, [this, &out, key](const json& v) {
      if (!v.is_string()) fail(key, "expected a string");
      out = v.get<std::string>();
    });
    return *this;
  }
  // Hands the raw value to `f` (nested objects).
  FieldReader& value(const char* key, std::function<void(const json&)> f) {
    bind(key, std::move(f));
    return *this;
  }

  void finish() const {
    for (const auto& [key, v] : j_.items()) {
      auto it = binders_.find(key);
      if (it == binders_.end()) fail(key, "unknown key");
      it->second(v);
    }
  }

 private:
  void bind(const char* key, std::function<void(const json&)> f) { binders_[key] = std::move(f); }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(scope_ + "." + key, what);
  }

  const json& j_;
  std::string scope_;
  std::map<std::string, std::function<void(const json&)>> binders_;
};

}  // namespace ipa::detail
