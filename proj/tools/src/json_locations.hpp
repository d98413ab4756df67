#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

namespace bridgeforge::cli {

/// Line numbers (1-based) of every key and array element in a JSON text,
/// keyed by JSON pointer ("/training/hidden/2").
class JsonLocations {
 public:
  JsonLocations() = default;
  /// Never throws on malformed input; positions found before the error are kept.
  static JsonLocations scan(std::string_view text);

  /// Line of the pointer, or of its closest recorded ancestor; 0 if none.
  [[nodiscard]] std::size_t line(const std::string& pointer) const;

  void record(const std::string& pointer, std::size_t line) { lines_.emplace(pointer, line); }

 private:
  std::map<std::string, std::size_t> lines_;
};

/// 1-based line containing byte offset `offset`.
[[nodiscard]] std::size_t line_of_offset(std::string_view text, std::size_t offset);

}  // namespace bridgeforge::cli
