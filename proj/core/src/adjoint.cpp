#include "bridgeforge/adjoint.hpp"

#include <cmath>
#include <utility>

#include "bridgeforge/errors.hpp"
#include "euler_engine.hpp"

namespace bridgeforge {

AdjointSystem::AdjointSystem(SdeModel base, double t0, double T) : base_(std::move(base)), t0_(t0), T_(T) {
  if (!std::isfinite(t0) || !std::isfinite(T) || !(T > t0)) {
    throw InvalidArgument("adjoint system requires t0 < T");
  }
}

Vector AdjointSystem::alpha(double s, const Vector& x) const {
  const double r = reflect(s);
  return base_.sigma_sq_div(r, x) - base_.drift(r, x);
}

Matrix AdjointSystem::sigma_tilde(double s, const Vector& x) const { return base_.diffusion(reflect(s), x); }

double AdjointSystem::c(double s, const Vector& x) const {
  const double r = reflect(s);
  return 0.5 * base_.sigma_sq_hess_trace(r, x) - base_.drift_div(r, x);
}

AdjointSystem build_adjoint(const SdeModel& model, double t0, double T) { return {model, t0, T}; }

namespace {

void check_grid(const AdjointSystem& adjoint, const TimeGrid& grid) {
  const double span = adjoint.T() - adjoint.t0();
  if (grid.t0() != 0.0 || std::abs(grid.T() - span) > 1e-12 * std::max(1.0, span)) {
    throw InvalidArgument("adjoint grid must span [0, T - t0]");
  }
}

detail::EulerDynamics adjoint_dynamics(const AdjointSystem& adjoint) {
  const double origin = adjoint.t0();
  detail::EulerDynamics dyn;
  dyn.dim = adjoint.base().dim;
  dyn.noise_dim = adjoint.base().noise_dim;
  dyn.drift = [&adjoint, origin](double u, const Vector& x) { return adjoint.alpha(origin + u, x); };
  dyn.diffusion = [&adjoint, origin](double u, const Vector& x) { return adjoint.sigma_tilde(origin + u, x); };
  dyn.scalar_diffusion = adjoint.base().scalar_diffusion;
  dyn.rate = [&adjoint, origin](double u, const Vector& x) { return adjoint.c(origin + u, x); };
  return dyn;
}

}  // namespace

TrajectoryBatch simulate_adjoint(const AdjointSystem& adjoint, const Matrix& starts, const TimeGrid& grid,
                                 std::uint64_t seed, const SimulationOptions& options) {
  check_grid(adjoint, grid);
  if (starts.rows() != adjoint.base().dim) throw InvalidArgument("adjoint start has wrong dimension");
  auto result = detail::run_euler(adjoint_dynamics(adjoint), starts, grid, seed, options, true);

  TrajectoryBatch batch;
  batch.grid = grid;
  batch.n_paths = static_cast<std::size_t>(starts.cols());
  batch.dim = adjoint.base().dim;
  batch.states = std::move(result.states);
  batch.log_weights = std::move(result.log_weights);
  batch.seed = seed;
  return batch;
}

TrajectoryBatch simulate_adjoint(const AdjointSystem& adjoint, const Vector& y, const TimeGrid& grid,
                                 std::size_t n_paths, std::uint64_t seed, const SimulationOptions& options) {
  if (n_paths == 0) throw InvalidArgument("n_paths must be at least 1");
  if (y.size() != adjoint.base().dim) throw InvalidArgument("adjoint start has wrong dimension");
  return simulate_adjoint(adjoint, Matrix(y.replicate(1, static_cast<Eigen::Index>(n_paths))), grid, seed,
                          options);
}

MonteCarloEstimate adjoint_expectation(const AdjointSystem& adjoint, const Vector& y, const TimeGrid& grid,
                                       const std::function<double(const Vector&)>& g, std::size_t n_paths,
                                       std::uint64_t seed, const SimulationOptions& options) {
  check_grid(adjoint, grid);
  if (n_paths == 0) throw InvalidArgument("n_paths must be at least 1");
  if (y.size() != adjoint.base().dim) throw InvalidArgument("adjoint start has wrong dimension");
  const Matrix starts = y.replicate(1, static_cast<Eigen::Index>(n_paths));
  const auto result = detail::run_euler(adjoint_dynamics(adjoint), starts, grid, seed, options, false);

  const int d = adjoint.base().dim;
  std::vector<double> samples(n_paths);
  for (std::size_t n = 0; n < n_paths; ++n) {
    const Eigen::Map<const Vector> end(result.states.data() + n * d, d);
    samples[n] = g(end) * std::exp(result.log_weights[n]);
  }

  double sum = 0.0;
  double carry = 0.0;
  for (const double v : samples) {
    const double next = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - next) + v : (v - next) + sum;
    sum = next;
  }
  const double mean = (sum + carry) / static_cast<double>(n_paths);
  double squares = 0.0;
  for (const double v : samples) squares += (v - mean) * (v - mean);
  const double variance = n_paths > 1 ? squares / static_cast<double>(n_paths - 1) : 0.0;
  if (!std::isfinite(mean)) throw NumericalError("non-finite adjoint expectation");
  return {mean, std::sqrt(variance / static_cast<double>(n_paths))};
}

}  // namespace bridgeforge
