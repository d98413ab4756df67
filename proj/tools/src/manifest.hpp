#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bridgeforge::cli {

struct Manifest {
  std::string config_sha256;
  std::uint64_t seed = 0;
  std::string command;
  std::string started_at;
  double wall_time_ms = 0.0;
  std::vector<std::string> artifact_paths;
  int workers = 1;
};

/// Lower-case hex SHA-256 of the bytes.
[[nodiscard]] std::string sha256_hex(std::string_view bytes);
/// ISO 8601 UTC with millisecond precision, e.g. 2024-05-01T12:00:00.123Z.
[[nodiscard]] std::string utc_timestamp(std::chrono::system_clock::time_point when);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace bridgeforge::cli
