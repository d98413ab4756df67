#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bridgeforge/bridge.hpp"
#include "bridgeforge/models.hpp"
#include "bridgeforge/training.hpp"

namespace bridgeforge::cli {

/// Invalid configuration. what() holds one "file:line: message" diagnostic per line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& diagnostics) : std::runtime_error(diagnostics) {}
};

struct EndpointConfig {
  enum class Kind { fixed, circle, box };
  Kind kind = Kind::fixed;
  Vector y;
  double radius = 3.0;
  double lo = -1.0;
  double hi = 1.0;
};

struct StartRing {
  double radius = 0.0;
  int count = 0;
};

struct SamplingConfig {
  std::vector<Vector> x0;
  std::optional<StartRing> x0_circle;
  std::size_t paths_per_start = 20;
  EndpointHandling endpoint_handling = EndpointHandling::free;
  /// Endpoint fed to a conditioned network (box endpoints only).
  std::optional<Vector> y;

  /// Explicit starts followed by the ring points (angle 2 pi k / count).
  [[nodiscard]] std::vector<Vector> starts() const;
};

struct EvaluationConfig {
  bool score_mse = false;
  bool endpoint_stats = true;
  std::optional<Vector> x0;
  std::size_t n_paths = 1000;
  std::optional<double> t_cutoff;
  double hit_radius = 0.3;
};

struct AdjointCheckConfig {
  std::size_t n_paths = 100000;
  int steps = 200;
  double z_threshold = 4.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "bridgeforge_out";
  ModelSpec model{"ou", {}};
  double T = 1.0;
  int steps = 100;
  EndpointConfig endpoint;
  TrainConfig training;
  SamplingConfig sampling;
  EvaluationConfig evaluation;
  AdjointCheckConfig adjoint_check;

  /// Training settings with the model, grid, endpoint and seed filled in.
  [[nodiscard]] TrainConfig train_config(int workers) const;
  [[nodiscard]] EndpointSpec endpoint_spec() const;
  [[nodiscard]] SdeModel build_model() const;
  /// Model names with a closed-form score and adjoint identities (ou, brownian).
  [[nodiscard]] bool has_exact_score() const;
};

/// Parses and validates a config. `source_name` prefixes diagnostics.
[[nodiscard]] RunConfig parse_run_config(std::string_view text, const std::string& source_name);
/// Reads the file, then parses it. A missing file is a ConfigError.
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace bridgeforge::cli
