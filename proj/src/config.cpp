#include "gcalc/config.hpp"

#include <cmath>

#include <fmt/format.h>

namespace gcalc {
namespace {

std::string escape_token(std::string_view key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::string pointer, const std::string& message)
    : std::runtime_error(fmt::format("config {}: {}", pointer.empty() ? "/" : pointer, message)),
      pointer_(std::move(pointer)) {}

bool ConfigNode::has(std::string_view key) const {
  return value_->is_object() && value_->contains(std::string(key));
}

ConfigNode ConfigNode::at(std::string_view key) const {
  const std::string child = pointer_ + "/" + escape_token(key);
  if (!value_->is_object()) fail("expected an object");
  auto it = value_->find(std::string(key));
  if (it == value_->end()) throw ConfigError(child, "required field is missing");
  return ConfigNode(*it, child);
}

ConfigNode ConfigNode::at(std::size_t index) const {
  if (!value_->is_array()) fail("expected an array");
  const std::string child = fmt::format("{}/{}", pointer_, index);
  if (index >= value_->size()) throw ConfigError(child, "index out of range");
  return ConfigNode((*value_)[index], child);
}

std::size_t ConfigNode::size() const {
  if (!value_->is_array()) fail("expected an array");
  return value_->size();
}

double ConfigNode::number() const {
  if (!value_->is_number()) fail("expected a number");
  const double v = value_->get<double>();
  if (!std::isfinite(v)) fail("expected a finite number");
  return v;
}

double ConfigNode::number_or(std::string_view key, double fallback) const {
  return has(key) ? at(key).number() : fallback;
}

std::int64_t ConfigNode::integer() const {
  if (value_->is_number_integer()) return value_->get<std::int64_t>();
  if (value_->is_number_float()) {
    const double v = value_->get<double>();
    if (std::floor(v) == v && std::abs(v) < 9e15) return static_cast<std::int64_t>(v);
  }
  fail("expected an integer");
}

std::int64_t ConfigNode::integer_or(std::string_view key, std::int64_t fallback) const {
  return has(key) ? at(key).integer() : fallback;
}

bool ConfigNode::boolean_or(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  const ConfigNode n = at(key);
  if (!n.raw().is_boolean()) n.fail("expected a boolean");
  return n.raw().get<bool>();
}

std::string ConfigNode::string() const {
  if (!value_->is_string()) fail("expected a string");
  return value_->get<std::string>();
}

std::string ConfigNode::string_or(std::string_view key, std::string fallback) const {
  return has(key) ? at(key).string() : fallback;
}

std::vector<double> ConfigNode::numbers() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).number());
  return out;
}

std::vector<std::string> ConfigNode::strings() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).string());
  return out;
}

std::map<std::string, double> ConfigNode::number_table() const {
  if (!value_->is_object()) fail("expected an object of named numbers");
  std::map<std::string, double> out;
  for (auto it = value_->begin(); it != value_->end(); ++it) out[it.key()] = at(it.key()).number();
  return out;
}

void ConfigNode::fail(const std::string& message) const { throw ConfigError(pointer_, message); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace gcalc
