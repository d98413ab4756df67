#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "bridgeforge/linalg.hpp"
#include "bridgeforge/models.hpp"

namespace bridgeforge {

/// Uniform grid t0 = t_0 < t_1 < ... < t_L = T.
class TimeGrid {
 public:
  TimeGrid(double t0, double T, int steps);

  [[nodiscard]] double t0() const noexcept { return t0_; }
  [[nodiscard]] double T() const noexcept { return T_; }
  [[nodiscard]] int steps() const noexcept { return steps_; }
  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] double span() const noexcept { return T_ - t0_; }

  /// t_l; the last node is exactly T.
  [[nodiscard]] double node(int l) const noexcept {
    return l == steps_ ? T_ : t0_ + static_cast<double>(l) * dt_;
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double t0_;
  double T_;
  int steps_;
  double dt_;
};

/// N simulated paths on a grid, stored path-major as [path][step][component],
/// plus one log-weight per path (zero when the dynamics carry no weight).
struct TrajectoryBatch {
  TimeGrid grid{0.0, 1.0, 1};
  std::size_t n_paths = 0;
  int dim = 0;
  std::vector<double> states;
  std::vector<double> log_weights;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t offset(std::size_t path, int step) const noexcept {
    return (path * static_cast<std::size_t>(grid.steps() + 1) + static_cast<std::size_t>(step)) *
           static_cast<std::size_t>(dim);
  }
  [[nodiscard]] Eigen::Map<const Vector> state(std::size_t path, int step) const {
    return Eigen::Map<const Vector>(states.data() + offset(path, step), dim);
  }
  [[nodiscard]] Eigen::Map<Vector> state(std::size_t path, int step) {
    return Eigen::Map<Vector>(states.data() + offset(path, step), dim);
  }
  /// All path values at one node as a dim x n_paths matrix.
  [[nodiscard]] Matrix states_at(int step) const;
};

struct SimulationOptions {
  /// Multiplies the Brownian increments. 0 gives the deterministic Euler
  /// scheme; used by tests.
  double noise_scale = 1.0;
  /// Abort when any component of the drift offset Sigma * score exceeds this.
  double explosion_bound = 1e6;
  /// Worker threads. Output does not depend on this value.
  int workers = 1;
};

/// A vector field evaluated for a batch of states at a common time; used as
/// the score term in conditioned dynamics.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  [[nodiscard]] virtual int dim() const = 0;
  /// xs and out are dim x n.
  virtual void evaluate(double t, const Matrix& xs, Matrix& out) const = 0;
};

/// Adapts a pointwise function (t, x) -> R^d to the batched interface.
class PointwiseScore final : public ScoreField {
 public:
  using Function = std::function<Vector(double, const Vector&)>;
  PointwiseScore(int dim, Function fn) : dim_(dim), fn_(std::move(fn)) {}

  [[nodiscard]] int dim() const override { return dim_; }
  void evaluate(double t, const Matrix& xs, Matrix& out) const override;

 private:
  int dim_;
  Function fn_;
};

/// Euler-Maruyama simulation of the unconditioned model. Path n uses the
/// noise stream keyed by (seed, n).
[[nodiscard]] TrajectoryBatch simulate(const SdeModel& model, const Vector& x0, const TimeGrid& grid,
                                       std::size_t n_paths, std::uint64_t seed,
                                       const SimulationOptions& options = {});

/// Euler-Maruyama on drift f + Sigma * score with diffusion sigma. The score is
/// evaluated at t_0 .. t_{L-1}; never at t_L.
[[nodiscard]] TrajectoryBatch simulate_with_drift_offset(const SdeModel& model, const ScoreField& score,
                                                         const Vector& x0, const TimeGrid& grid,
                                                         std::size_t n_paths, std::uint64_t seed,
                                                         const SimulationOptions& options = {});

}  // namespace bridgeforge
