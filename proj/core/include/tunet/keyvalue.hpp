#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tunet {

// Ordered `key = value` entries. Blank lines and lines starting with '#' are
// ignored when parsing.
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  static KeyValues parse(const std::string& text);
  std::string format() const;

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
};

// Strict scalar parsing; errors name the key.
std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value);

std::string format_double(double v);
std::string format_size_list(const std::vector<std::size_t>& v);

}  // namespace tunet
