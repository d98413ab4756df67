#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "bridgeforge/integrator.hpp"

namespace bridgeforge::detail {

/// Paths per scheduling unit. Fixed so that batched score evaluations see the
/// same column blocks whatever the worker count.
inline constexpr std::size_t kPathChunk = 64;

/// Coefficients of one Euler-Maruyama problem. `offset` adds Sigma * score to
/// the drift; `rate` integrates d(log w) = rate dt alongside the state.
struct EulerDynamics {
  int dim = 0;
  int noise_dim = 0;
  SdeModel::VectorField drift;
  SdeModel::MatrixField diffusion;
  std::optional<double> scalar_diffusion;
  SdeModel::MatrixField sigma_sq;
  const ScoreField* offset = nullptr;
  SdeModel::ScalarField rate;
};

struct EulerOutput {
  /// [path][step][component] when keep_path, else [path][component] at t_L.
  std::vector<double> states;
  std::vector<double> log_weights;
};

/// `initial` is dim x n_paths.
[[nodiscard]] EulerOutput run_euler(const EulerDynamics& dynamics, const Matrix& initial,
                                    const TimeGrid& grid, std::uint64_t seed,
                                    const SimulationOptions& options, bool keep_path);

/// Dynamics of `model` with an optional score offset.
[[nodiscard]] EulerDynamics model_dynamics(const SdeModel& model, const ScoreField* offset);

}  // namespace bridgeforge::detail
