#include "bridgeforge/training.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numbers>
#include <string>

#include "bridgeforge/adjoint.hpp"
#include "bridgeforge/errors.hpp"
#include "bridgeforge/random.hpp"
#include "parallel.hpp"

namespace bridgeforge {

DistributionEndpoint uniform_on_circle(double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("circle radius must be positive");
  DistributionEndpoint spec;
  spec.name = "circle";
  spec.dim = 2;
  spec.sampler = [radius](std::uint64_t seed) {
    const double angle = 2.0 * std::numbers::pi * CounterRng(seed, 0).uniform(0, 0);
    Vector y(2);
    y << radius * std::cos(angle), radius * std::sin(angle);
    return y;
  };
  spec.contains = [radius](const Vector& y) {
    return y.size() == 2 && std::abs(y.norm() - radius) <= 1e-12 * std::max(1.0, radius);
  };
  return spec;
}

int endpoint_dim(const EndpointSpec& spec) {
  return std::visit(
      [](const auto& s) -> int {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FixedEndpoint>) {
          return static_cast<int>(s.y.size());
        } else {
          return s.dim;
        }
      },
      spec);
}

bool conditions_network(const EndpointSpec& spec) { return std::holds_alternative<MultiFixedEndpoint>(spec); }

Matrix sample_endpoints(const EndpointSpec& spec, std::size_t n, std::uint64_t seed) {
  const int d = endpoint_dim(spec);
  Matrix out(d, static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    if (const auto* fixed = std::get_if<FixedEndpoint>(&spec)) {
      out.col(col) = fixed->y;
    } else if (const auto* dist = std::get_if<DistributionEndpoint>(&spec)) {
      Vector y = dist->sampler(derive_seed(seed, "endpoint", k));
      if (y.size() != d) throw InvalidArgument("endpoint sampler returned the wrong dimension");
      out.col(col) = y;
    } else {
      const auto& box = std::get<MultiFixedEndpoint>(spec);
      const CounterRng rng(seed, k);
      for (int i = 0; i < d; ++i) out(i, col) = box.lo + (box.hi - box.lo) * rng.uniform(0, i);
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("T must be positive");
  if (steps < 2) throw InvalidArgument("steps (L) must be at least 2");
  if (batch_size < 1) throw InvalidArgument("batch_size (N) must be at least 1");
  if (iterations < 0) throw InvalidArgument("iterations must be non-negative");
  if (workers < 1) throw InvalidArgument("workers must be at least 1");
  if (const auto* box = std::get_if<MultiFixedEndpoint>(&endpoint)) {
    if (!(box->lo < box->hi)) throw InvalidArgument("endpoint box requires lo < hi");
    if (box->dim < 1) throw InvalidArgument("endpoint box dimension must be positive");
  }
  if (const auto* dist = std::get_if<DistributionEndpoint>(&endpoint)) {
    if (!dist->sampler) throw InvalidArgument("endpoint distribution has no sampler");
  }
}

NetworkArchitecture TrainConfig::architecture(int state_dim) const {
  NetworkArchitecture arch;
  arch.state_dim = state_dim;
  arch.conditioned = conditions_network(endpoint);
  arch.time_features = time_features;
  arch.hidden = hidden;
  arch.horizon = T;
  arch.output_scale = output_scale;
  return arch;
}

Vector em_transition_score(const SdeModel& model, double t, const Vector& x, double t2, const Vector& x2) {
  const double dt = t2 - t;
  if (!(dt > 0.0)) throw InvalidArgument("transition score requires t2 > t");
  const Vector residual = x2 - x - dt * model.drift(t, x);
  if (model.scalar_diffusion) {
    const double variance = *model.scalar_diffusion * *model.scalar_diffusion;
    return residual / (dt * variance);
  }
  const Matrix sigma_sq = model.sigma_sq(t, x);
  const Eigen::LDLT<Matrix> factor(sigma_sq);
  const double scale = std::max(1.0, sigma_sq.cwiseAbs().maxCoeff());
  if (factor.info() != Eigen::Success || factor.vectorD().cwiseAbs().minCoeff() <= 1e-14 * scale) {
    std::string state;
    for (Eigen::Index i = 0; i < x.size(); ++i) state += (i ? ", " : "") + std::to_string(x[i]);
    throw NumericalError("singular diffusion Sigma at t=" + std::to_string(t) + ", x=(" + state + ")");
  }
  return factor.solve(residual) / dt;
}

namespace {

constexpr std::size_t kPathsPerBlock = 32;

std::vector<double> path_weights(const TrajectoryBatch& batch, WeightMode mode) {
  const std::size_t n = batch.n_paths;
  std::vector<double> weights(n);
  if (mode == WeightMode::raw) {
    for (std::size_t k = 0; k < n; ++k) weights[k] = std::exp(batch.log_weights[k]);
    return weights;
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (const double lw : batch.log_weights) peak = std::max(peak, lw);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    weights[k] = std::exp(batch.log_weights[k] - peak);
    total += weights[k];
  }
  const double mean = total / static_cast<double>(n);
  for (auto& w : weights) w /= mean;
  return weights;
}

}  // namespace

LossResult batch_loss(const ScoreNetwork& net, const SdeModel& model, const TrajectoryBatch& batch,
                      const Matrix& endpoints, const TrainConfig& config) {
  const int d = model.dim;
  const int L = batch.grid.steps();
  const std::size_t n_paths = batch.n_paths;
  const auto& arch = net.architecture();
  if (batch.dim != d || arch.state_dim != d) throw InvalidArgument("batch, model and network dimensions differ");
  if (endpoints.rows() != d || static_cast<std::size_t>(endpoints.cols()) != n_paths) {
    throw InvalidArgument("endpoints must be dim x n_paths");
  }
  if (n_paths == 0) throw InvalidArgument("empty adjoint batch");
  if (batch.grid.t0() != 0.0) throw InvalidArgument("adjoint batch grid must start at 0");

  const TimeGrid& grid = batch.grid;
  const double dt = grid.dt();
  const std::vector<double> weights = path_weights(batch, config.weight_mode);
  const double scale = dt / static_cast<double>(n_paths);

  const std::size_t n_blocks = (n_paths + kPathsPerBlock - 1) / kPathsPerBlock;
  std::vector<double> block_loss(n_blocks, 0.0);
  std::vector<std::vector<double>> block_grad(n_blocks);

  detail::parallel_for(n_blocks, config.workers, [&](std::size_t block) {
    const std::size_t first = block * kPathsPerBlock;
    const std::size_t count = std::min(kPathsPerBlock, n_paths - first);
    const auto samples = static_cast<Eigen::Index>(count * L);

    Vector ts(samples);
    Matrix xs(d, samples);
    Matrix ys(arch.conditioned ? d : 0, samples);
    Matrix targets(d, samples);
    Vector sample_weight(samples);
    std::vector<Matrix> metrics;
    if (config.metric == MetricWeighting::sigma_sq && !model.scalar_diffusion) metrics.resize(samples);

    for (std::size_t p = 0; p < count; ++p) {
      const std::size_t path = first + p;
      for (int l = 0; l < L; ++l) {
        const auto k = static_cast<Eigen::Index>(p * L + l);
        const double t = grid.node(l);
        const double t_next = grid.node(l + 1);
        // Z_l = Y(T - t_l): adjoint node L - l.
        const Vector z = batch.state(path, L - l);
        const Vector z_next = batch.state(path, L - l - 1);
        ts[k] = t;
        xs.col(k) = z;
        if (arch.conditioned) ys.col(k) = endpoints.col(static_cast<Eigen::Index>(path));
        targets.col(k) = em_transition_score(model, t, z, t_next, z_next);
        sample_weight[k] = weights[path] * scale;
        if (!metrics.empty()) metrics[k] = model.sigma_sq(t, z);
      }
    }

    ScoreNetwork::Cache cache;
    const Matrix inputs = net.features(ts, xs, arch.conditioned ? &ys : nullptr);
    const Matrix predictions = net.forward(inputs, cache);
    const Matrix residual = predictions - targets;

    Matrix weighted_residual = residual;  // M r
    if (config.metric == MetricWeighting::sigma_sq) {
      if (model.scalar_diffusion) {
        weighted_residual *= *model.scalar_diffusion * *model.scalar_diffusion;
      } else {
        for (Eigen::Index k = 0; k < samples; ++k) weighted_residual.col(k) = metrics[k] * residual.col(k);
      }
    }

    double loss = 0.0;
    Matrix upstream(d, samples);
    for (Eigen::Index k = 0; k < samples; ++k) {
      const double term = sample_weight[k] * residual.col(k).dot(weighted_residual.col(k));
      if (!std::isfinite(term)) {
        throw NumericalError("non-finite loss term", first + static_cast<std::size_t>(k) / L,
                             static_cast<std::size_t>(k) % L);
      }
      loss += term;
      upstream.col(k) = (2.0 * sample_weight[k]) * weighted_residual.col(k);
    }
    block_loss[block] = loss;
    block_grad[block].assign(net.parameter_count(), 0.0);
    net.backward(cache, upstream, block_grad[block]);
  });

  LossResult result;
  result.gradients.assign(net.parameter_count(), 0.0);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    result.loss += block_loss[b];
    for (std::size_t i = 0; i < result.gradients.size(); ++i) result.gradients[i] += block_grad[b][i];
  }
  if (!std::isfinite(result.loss)) throw NumericalError("non-finite batch loss");
  return result;
}

TrainResult train(const TrainConfig& config, const std::function<void(const TrainLogEntry&)>& on_iteration) {
  config.validate();
  const SdeModel model = ModelRegistry::builtin().make(config.model);
  if (endpoint_dim(config.endpoint) != model.dim) {
    throw InvalidArgument("endpoint dimension does not match the model dimension");
  }
  const AdjointSystem adjoint = build_adjoint(model, 0.0, config.T);
  const TimeGrid grid(0.0, config.T, config.steps);

  TrainResult result{ScoreNetwork(config.architecture(model.dim), derive_seed(config.seed, "init")), {}};
  AdamOptimizer optimizer(result.network.parameter_count(), config.optimizer);
  SimulationOptions sim;
  sim.workers = config.workers;

  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < config.iterations; ++it) {
    try {
      const Matrix ys = sample_endpoints(config.endpoint, config.batch_size, derive_seed(config.seed, "endpoints", it));
      const auto batch = simulate_adjoint(adjoint, ys, grid, derive_seed(config.seed, "adjoint", it), sim);
      const auto loss = batch_loss(result.network, model, batch, ys, config);
      optimizer.step(result.network, loss.gradients);

      const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
      result.log.push_back({it, loss.loss, elapsed.count()});
      if (on_iteration) on_iteration(result.log.back());
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  return result;
}

}  // namespace bridgeforge
