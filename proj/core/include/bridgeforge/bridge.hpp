#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "bridgeforge/integrator.hpp"
#include "bridgeforge/models.hpp"
#include "bridgeforge/scorenet.hpp"

namespace bridgeforge {

/// grad_x log p(t, x; T, y) for the OU process dX = -theta X dt + sigma dW,
/// componentwise:  e^{-theta tau} / v(tau) * (y - x e^{-theta tau}), with
/// tau = T - t and v(tau) = sigma^2 (1 - e^{-2 theta tau}) / (2 theta).
[[nodiscard]] Vector ou_exact_score(double theta, double sigma, double t, const Vector& x, double T,
                                    const Vector& y);

/// grad_x log p(t, x; T, y) for dX = sigma dW:  (y - x) / (sigma^2 (T - t)).
[[nodiscard]] Vector brownian_exact_score(double sigma, double t, const Vector& x, double T, const Vector& y);

struct NetworkScore {
  std::shared_ptr<const ScoreNetwork> net;
  /// Endpoint fed to a conditioned network; must be empty otherwise.
  std::optional<Vector> y;
};

struct ExactOuScore {
  double theta = 1.0;
  double sigma = 1.0;
  double T = 1.0;
  Vector y;
};

struct ExactBrownianScore {
  double sigma = 1.0;
  double T = 1.0;
  Vector y;
};

/// Learned or closed-form score s(t, x), defined for t in [0, T).
class ScoreFunction final : public ScoreField {
 public:
  using Variant = std::variant<NetworkScore, ExactOuScore, ExactBrownianScore>;

  explicit ScoreFunction(Variant impl);

  [[nodiscard]] int dim() const override;
  void evaluate(double t, const Matrix& xs, Matrix& out) const override;
  [[nodiscard]] Vector operator()(double t, const Vector& x) const;
  [[nodiscard]] const Variant& impl() const noexcept { return impl_; }

 private:
  Variant impl_;
};

enum class EndpointHandling {
  /// The last step is an ordinary Euler step using the score at t_{L-1}.
  free,
  /// X(T) is set to the fixed endpoint after the last step.
  pin,
};

/// Forward simulation of the conditioned dynamics dX = (f + Sigma s) dt + sigma dW.
/// `pin_target` is required (and only allowed) with EndpointHandling::pin.
[[nodiscard]] TrajectoryBatch sample_bridge(const SdeModel& model, const ScoreField& score, const Vector& x0,
                                            const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                            EndpointHandling handling = EndpointHandling::free,
                                            const std::optional<Vector>& pin_target = std::nullopt,
                                            const SimulationOptions& options = {});

struct ScoreErrorReport {
  /// Nodes t_0 .. t_{L-1} and the mean squared score error at each.
  std::vector<double> times;
  std::vector<double> mse;
  /// Mean of `mse` over nodes with t <= t_cutoff.
  double time_averaged_mse = 0.0;
  std::size_t n_paths = 0;
  double t_cutoff = 0.0;
};

/// Compares two score functions on the states of `eval_states` (normally
/// exact-bridge paths). The endpoint node t_L is never evaluated.
[[nodiscard]] ScoreErrorReport score_error_report(const ScoreField& learned, const ScoreField& exact,
                                                  const TrajectoryBatch& eval_states, double t_cutoff);

/// Writes `t,mse` rows.
void write_score_error_csv(std::ostream& os, const ScoreErrorReport& report);

/// Path values at `step` as a dim x N matrix (step -1 means the last node).
[[nodiscard]] Matrix endpoints(const TrajectoryBatch& batch, int step = -1);

/// Mean of | |x| - radius | over the columns.
[[nodiscard]] double mean_radius_residual(const Matrix& points, double radius);

/// Mean Euclidean distance to `target`.
[[nodiscard]] double mean_distance(const Matrix& points, const Vector& target);

/// Fraction of columns within Euclidean distance `radius` of `target`.
[[nodiscard]] double hit_fraction(const Matrix& points, const Vector& target, double radius);

}  // namespace bridgeforge
