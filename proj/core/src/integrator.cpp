#include "bridgeforge/integrator.hpp"

#include <cmath>
#include <string>

#include "bridgeforge/errors.hpp"
#include "bridgeforge/random.hpp"
#include "euler_engine.hpp"
#include "parallel.hpp"

namespace bridgeforge {

TimeGrid::TimeGrid(double t0, double T, int steps) : t0_(t0), T_(T), steps_(steps), dt_(0.0) {
  if (!std::isfinite(t0) || !std::isfinite(T) || !(T > t0)) {
    throw InvalidArgument("time grid requires finite t0 < T");
  }
  if (steps < 1) throw InvalidArgument("time grid requires at least one step");
  dt_ = (T - t0) / steps;
}

Matrix TrajectoryBatch::states_at(int step) const {
  Matrix out(dim, static_cast<Eigen::Index>(n_paths));
  for (std::size_t n = 0; n < n_paths; ++n) out.col(static_cast<Eigen::Index>(n)) = state(n, step);
  return out;
}

void PointwiseScore::evaluate(double t, const Matrix& xs, Matrix& out) const {
  out.resize(dim_, xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out.col(j) = fn_(t, xs.col(j));
}

namespace detail {

namespace {

// Compensated (Neumaier) running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double value) {
    const double next = sum + value;
    carry += std::abs(sum) >= std::abs(value) ? (sum - next) + value : (value - next) + sum;
    sum = next;
  }
  [[nodiscard]] double total() const { return sum + carry; }
};

}  // namespace

EulerDynamics model_dynamics(const SdeModel& model, const ScoreField* offset) {
  EulerDynamics dyn;
  dyn.dim = model.dim;
  dyn.noise_dim = model.noise_dim;
  dyn.drift = model.drift;
  dyn.diffusion = model.diffusion;
  dyn.scalar_diffusion = model.scalar_diffusion;
  dyn.sigma_sq = model.sigma_sq;
  dyn.offset = offset;
  return dyn;
}

EulerOutput run_euler(const EulerDynamics& dyn, const Matrix& initial, const TimeGrid& grid,
                      std::uint64_t seed, const SimulationOptions& options, bool keep_path) {
  const int d = dyn.dim;
  const auto n_paths = static_cast<std::size_t>(initial.cols());
  const int steps = grid.steps();
  if (initial.rows() != d) throw InvalidArgument("initial state has wrong dimension");
  if (n_paths == 0) throw InvalidArgument("n_paths must be at least 1");
  if (dyn.offset != nullptr && dyn.offset->dim() != d) {
    throw InvalidArgument("score dimension does not match the model");
  }

  const std::size_t stride = keep_path ? static_cast<std::size_t>(steps + 1) * d : static_cast<std::size_t>(d);
  EulerOutput out;
  out.states.resize(stride * n_paths);
  out.log_weights.assign(n_paths, 0.0);

  const double dt = grid.dt();
  const double noise_step = std::sqrt(dt) * options.noise_scale;
  const std::size_t n_chunks = (n_paths + kPathChunk - 1) / kPathChunk;

  detail::parallel_for(n_chunks, options.workers, [&](std::size_t chunk) {
    const std::size_t first = chunk * kPathChunk;
    const std::size_t count = std::min(kPathChunk, n_paths - first);
    Matrix current = initial.middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
    Matrix scores;
    std::vector<CompensatedSum> rate_sums(count);
    Vector noise(dyn.noise_dim);

    auto record = [&](int step) {
      for (std::size_t p = 0; p < count; ++p) {
        double* dst = out.states.data() + (first + p) * stride +
                      (keep_path ? static_cast<std::size_t>(step) * d : 0);
        for (int i = 0; i < d; ++i) dst[i] = current(i, static_cast<Eigen::Index>(p));
      }
    };
    if (keep_path) record(0);

    for (int step = 0; step < steps; ++step) {
      const double t = grid.node(step);
      if (dyn.offset != nullptr) dyn.offset->evaluate(t, current, scores);

      for (std::size_t p = 0; p < count; ++p) {
        const std::size_t path = first + p;
        auto x = current.col(static_cast<Eigen::Index>(p));
        const Vector state = x;
        Vector velocity = dyn.drift(t, state);

        if (dyn.offset != nullptr) {
          Vector pull = dyn.scalar_diffusion
                            ? Vector((*dyn.scalar_diffusion * *dyn.scalar_diffusion) *
                                     scores.col(static_cast<Eigen::Index>(p)))
                            : Vector(dyn.sigma_sq(t, state) * scores.col(static_cast<Eigen::Index>(p)));
          const double magnitude = pull.cwiseAbs().maxCoeff();
          if (!(magnitude <= options.explosion_bound)) {
            throw NumericalError("drift offset |Sigma * score| = " + std::to_string(magnitude) +
                                     " exceeds the explosion bound",
                                 path, static_cast<std::size_t>(step));
          }
          velocity += pull;
        }
        if (dyn.rate) rate_sums[p].add(dyn.rate(t, state));

        x += velocity * dt;
        if (options.noise_scale != 0.0) {
          const CounterRng rng(seed, path);
          for (int j = 0; j < dyn.noise_dim; ++j) noise[j] = rng.normal(static_cast<std::uint64_t>(step), j);
          if (dyn.scalar_diffusion) {
            x += (*dyn.scalar_diffusion * noise_step) * noise;
          } else {
            x += dyn.diffusion(t, state) * (noise_step * noise);
          }
        }
        if (!x.allFinite()) {
          throw NumericalError("non-finite state", path, static_cast<std::size_t>(step + 1));
        }
      }
      if (keep_path) record(step + 1);
    }
    if (!keep_path) record(steps);

    if (dyn.rate) {
      for (std::size_t p = 0; p < count; ++p) {
        // Euler on d(log w) = rate dt, evaluated as span * mean(rate) so that
        // a constant rate integrates exactly.
        const double log_weight = rate_sums[p].total() / steps * grid.span();
        if (!std::isfinite(log_weight)) {
          throw NumericalError("non-finite log-weight", first + p, static_cast<std::size_t>(steps));
        }
        out.log_weights[first + p] = log_weight;
      }
    }
  });
  return out;
}

}  // namespace detail

namespace {

TrajectoryBatch run_model(const SdeModel& model, const ScoreField* offset, const Vector& x0,
                          const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& options) {
  if (x0.size() != model.dim) throw InvalidArgument("x0 dimension does not match the model");
  if (n_paths == 0) throw InvalidArgument("n_paths must be at least 1");
  const Matrix initial = x0.replicate(1, static_cast<Eigen::Index>(n_paths));
  auto result = detail::run_euler(detail::model_dynamics(model, offset), initial, grid, seed, options, true);

  TrajectoryBatch batch;
  batch.grid = grid;
  batch.n_paths = n_paths;
  batch.dim = model.dim;
  batch.states = std::move(result.states);
  batch.log_weights = std::move(result.log_weights);
  batch.seed = seed;
  return batch;
}

}  // namespace

TrajectoryBatch simulate(const SdeModel& model, const Vector& x0, const TimeGrid& grid,
                         std::size_t n_paths, std::uint64_t seed, const SimulationOptions& options) {
  return run_model(model, nullptr, x0, grid, n_paths, seed, options);
}

TrajectoryBatch simulate_with_drift_offset(const SdeModel& model, const ScoreField& score, const Vector& x0,
                                           const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                           const SimulationOptions& options) {
  return run_model(model, &score, x0, grid, n_paths, seed, options);
}

}  // namespace bridgeforge
