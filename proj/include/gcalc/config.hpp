#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace gcalc {

using json = nlohmann::json;

/// Schema violation in a JSON config, tagged with the JSON pointer of the field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& message);
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

/// Read-only view of a JSON value that remembers where it came from, so that
/// every type error names its JSON pointer.
class ConfigNode {
 public:
  ConfigNode(const json& value, std::string pointer = "") : value_(&value), pointer_(std::move(pointer)) {}

  const json& raw() const { return *value_; }
  const std::string& pointer() const { return pointer_; }
  std::string display_pointer() const { return pointer_.empty() ? "/" : pointer_; }

  bool has(std::string_view key) const;
  ConfigNode at(std::string_view key) const;
  ConfigNode at(std::size_t index) const;
  std::size_t size() const;  // arrays only

  double number() const;
  double number_or(std::string_view key, double fallback) const;
  std::int64_t integer() const;
  std::int64_t integer_or(std::string_view key, std::int64_t fallback) const;
  bool boolean_or(std::string_view key, bool fallback) const;
  std::string string() const;
  std::string string_or(std::string_view key, std::string fallback) const;
  std::vector<double> numbers() const;
  std::vector<std::string> strings() const;
  std::map<std::string, double> number_table() const;

  [[noreturn]] void fail(const std::string& message) const;

 private:
  const json* value_;
  std::string pointer_;
};

/// 64-bit FNV-1a digest rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace gcalc
