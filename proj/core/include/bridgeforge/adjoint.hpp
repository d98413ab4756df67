#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "bridgeforge/integrator.hpp"
#include "bridgeforge/models.hpp"

namespace bridgeforge {

/// Reversed-dynamics coefficients of a base model on [t0, T]:
///   alpha^i(s,x) = sum_j d_j Sigma^{ij}(r,x) - f^i(r,x)
///   sigma~(s,x)  = sigma(r,x)
///   c(s,x)       = 1/2 sum_{ij} d_i d_j Sigma^{ij}(r,x) - div f(r,x)
/// with reflected time r = T + t0 - s. The pair (Y, log W) solves
///   dY = alpha dt + sigma~ dW,   d(log W) = c dt.
class AdjointSystem {
 public:
  AdjointSystem(SdeModel base, double t0, double T);

  [[nodiscard]] const SdeModel& base() const noexcept { return base_; }
  [[nodiscard]] double t0() const noexcept { return t0_; }
  [[nodiscard]] double T() const noexcept { return T_; }
  [[nodiscard]] double reflect(double s) const noexcept { return T_ + t0_ - s; }

  [[nodiscard]] Vector alpha(double s, const Vector& x) const;
  [[nodiscard]] Matrix sigma_tilde(double s, const Vector& x) const;
  [[nodiscard]] double c(double s, const Vector& x) const;

 private:
  SdeModel base_;
  double t0_;
  double T_;
};

[[nodiscard]] AdjointSystem build_adjoint(const SdeModel& model, double t0, double T);

/// Simulates N adjoint paths from Y = y. Grid nodes are elapsed adjoint time:
/// the grid must span [0, T - t0], and node u corresponds to adjoint time
/// t0 + u (forward time T - u). The final log-weight of each path is stored
/// in `log_weights`.
[[nodiscard]] TrajectoryBatch simulate_adjoint(const AdjointSystem& adjoint, const Vector& y,
                                               const TimeGrid& grid, std::size_t n_paths,
                                               std::uint64_t seed, const SimulationOptions& options = {});

/// As above with one start value per path (`starts` is dim x N).
[[nodiscard]] TrajectoryBatch simulate_adjoint(const AdjointSystem& adjoint, const Matrix& starts,
                                               const TimeGrid& grid, std::uint64_t seed,
                                               const SimulationOptions& options = {});

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Unnormalised weighted average (1/N) sum g(Y(T)) W(T), an estimate of
/// the integral of g(x) p(t0, x; T, y) dx, with its Monte Carlo standard error.
[[nodiscard]] MonteCarloEstimate adjoint_expectation(const AdjointSystem& adjoint, const Vector& y,
                                                     const TimeGrid& grid,
                                                     const std::function<double(const Vector&)>& g,
                                                     std::size_t n_paths, std::uint64_t seed,
                                                     const SimulationOptions& options = {});

}  // namespace bridgeforge
