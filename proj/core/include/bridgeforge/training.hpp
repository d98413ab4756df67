#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "bridgeforge/integrator.hpp"
#include "bridgeforge/models.hpp"
#include "bridgeforge/scorenet.hpp"

namespace bridgeforge {

/// Condition on a single endpoint y.
struct FixedEndpoint {
  Vector y;
};

/// Condition on an endpoint law pi_T. The sampler maps a seed to one draw.
struct DistributionEndpoint {
  std::string name;
  int dim = 0;
  std::function<Vector(std::uint64_t)> sampler;
  /// Support membership, used to validate draws.
  std::function<bool(const Vector&)> contains;
};

/// Learn s(t, x, y) for y uniform on the box [lo, hi]^dim; the network takes
/// y as an extra input.
struct MultiFixedEndpoint {
  double lo = -1.0;
  double hi = 1.0;
  int dim = 1;
};

using EndpointSpec = std::variant<FixedEndpoint, DistributionEndpoint, MultiFixedEndpoint>;

/// Uniform law on the circle of the given radius in the plane.
[[nodiscard]] DistributionEndpoint uniform_on_circle(double radius);

[[nodiscard]] int endpoint_dim(const EndpointSpec& spec);
[[nodiscard]] bool conditions_network(const EndpointSpec& spec);

/// Draws N endpoints (dim x N). Draw n depends only on (seed, n).
[[nodiscard]] Matrix sample_endpoints(const EndpointSpec& spec, std::size_t n, std::uint64_t seed);

enum class WeightMode { raw, normalized };
enum class MetricWeighting { plain, sigma_sq };

struct TrainConfig {
  ModelSpec model{"ou", {}};
  double T = 1.0;
  int steps = 100;
  std::size_t batch_size = 200;
  int iterations = 300;
  AdamSettings optimizer;
  std::uint64_t seed = 0;
  EndpointSpec endpoint = FixedEndpoint{Vector::Ones(1)};
  WeightMode weight_mode = WeightMode::normalized;
  MetricWeighting metric = MetricWeighting::plain;
  int time_features = 8;
  std::vector<int> hidden = {32, 32, 32, 32};
  double output_scale = 1.0;
  int workers = 1;

  /// Requires steps >= 2, batch_size >= 1, T > 0, iterations >= 0.
  void validate() const;
  /// Network shape implied by the model dimension and the endpoint mode.
  [[nodiscard]] NetworkArchitecture architecture(int state_dim) const;
};

/// One-step Euler-Maruyama approximation of grad_x log p(t, x; t2, x2):
///   Sigma(t,x)^{-1} (x2 - x - dt f(t,x)) / dt,  dt = t2 - t.
[[nodiscard]] Vector em_transition_score(const SdeModel& model, double t, const Vector& x, double t2,
                                         const Vector& x2);

struct LossResult {
  double loss = 0.0;
  std::vector<double> gradients;
};

/// Discretised score-matching loss on adjoint paths and its parameter
/// gradient:
///   (dt/N) sum_n sum_{l<L} w_n |s(t_l, Z_l [, y_n]) - g(t_l, Z_l, t_{l+1}, Z_{l+1})|_M^2
/// where Z_l is the adjoint state at elapsed time T - t_l, w_n the path
/// weight (raw, or divided by the batch mean) and M the identity or Sigma.
/// `endpoints` (dim x N) holds each path's start value y_n.
[[nodiscard]] LossResult batch_loss(const ScoreNetwork& net, const SdeModel& model,
                                    const TrajectoryBatch& adjoint_batch, const Matrix& endpoints,
                                    const TrainConfig& config);

struct TrainLogEntry {
  int iteration = 0;
  double loss = 0.0;
  double wall_time_ms = 0.0;
};

struct TrainResult {
  ScoreNetwork network;
  std::vector<TrainLogEntry> log;
};

/// Each iteration draws endpoints, simulates fresh adjoint paths, evaluates
/// batch_loss and takes one optimizer step.
[[nodiscard]] TrainResult train(const TrainConfig& config,
                                const std::function<void(const TrainLogEntry&)>& on_iteration = {});

}  // namespace bridgeforge
