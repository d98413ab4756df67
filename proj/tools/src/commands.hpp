#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace bridgeforge::cli {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 1,
  kNumericalFailure = 2,
  kAcceptanceFailure = 3,
};

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  /// Recorded verbatim in the manifest.
  std::string command_line;
};

/// Runs "train", "sample", "evaluate" or "adjoint-check", printing progress to
/// `out` and diagnostics to `err`, and maps failures to exit codes.
int run_command(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace bridgeforge::cli
