#include "bridgeforge/bridge.hpp"

#include <cmath>
#include <ostream>
#include <utility>

#include "bridgeforge/errors.hpp"
#include "bridgeforge/trajectory_io.hpp"

namespace bridgeforge {

namespace {

void check_before_horizon(double t, double T) {
  if (!(t < T)) throw InvalidArgument("score is undefined at t >= T");
}

}  // namespace

Vector ou_exact_score(double theta, double sigma, double t, const Vector& x, double T, const Vector& y) {
  check_before_horizon(t, T);
  if (x.size() != y.size()) throw InvalidArgument("x and y dimensions differ");
  const double tau = T - t;
  const double decay = std::exp(-theta * tau);
  const double variance = sigma * sigma * -std::expm1(-2.0 * theta * tau) / (2.0 * theta);
  return (decay / variance) * (y - decay * x);
}

Vector brownian_exact_score(double sigma, double t, const Vector& x, double T, const Vector& y) {
  check_before_horizon(t, T);
  if (x.size() != y.size()) throw InvalidArgument("x and y dimensions differ");
  return (y - x) / (sigma * sigma * (T - t));
}

ScoreFunction::ScoreFunction(Variant impl) : impl_(std::move(impl)) {
  if (const auto* net_score = std::get_if<NetworkScore>(&impl_)) {
    if (!net_score->net) throw InvalidArgument("network score without a network");
    const auto& arch = net_score->net->architecture();
    if (arch.conditioned != net_score->y.has_value()) {
      throw InvalidArgument(arch.conditioned ? "conditioned network score needs an endpoint y"
                                             : "unconditioned network score takes no endpoint");
    }
    if (net_score->y && net_score->y->size() != arch.state_dim) {
      throw InvalidArgument("network score endpoint has wrong dimension");
    }
  }
}

int ScoreFunction::dim() const {
  return std::visit(
      [](const auto& s) -> int {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, NetworkScore>) {
          return s.net->architecture().state_dim;
        } else {
          return static_cast<int>(s.y.size());
        }
      },
      impl_);
}

void ScoreFunction::evaluate(double t, const Matrix& xs, Matrix& out) const {
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, NetworkScore>) {
          if (s.y) {
            const Matrix ys = s.y->replicate(1, xs.cols());
            out = s.net->forward(s.net->features(t, xs, &ys));
          } else {
            out = s.net->forward(s.net->features(t, xs));
          }
        } else {
          out.resize(xs.rows(), xs.cols());
          for (Eigen::Index j = 0; j < xs.cols(); ++j) {
            if constexpr (std::is_same_v<S, ExactOuScore>) {
              out.col(j) = ou_exact_score(s.theta, s.sigma, t, xs.col(j), s.T, s.y);
            } else {
              out.col(j) = brownian_exact_score(s.sigma, t, xs.col(j), s.T, s.y);
            }
          }
        }
      },
      impl_);
}

Vector ScoreFunction::operator()(double t, const Vector& x) const {
  Matrix out;
  evaluate(t, x, out);
  return out.col(0);
}

TrajectoryBatch sample_bridge(const SdeModel& model, const ScoreField& score, const Vector& x0,
                              const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                              EndpointHandling handling, const std::optional<Vector>& pin_target,
                              const SimulationOptions& options) {
  if (handling == EndpointHandling::pin && !pin_target) {
    throw InvalidArgument("pin endpoint handling requires a fixed endpoint");
  }
  if (handling == EndpointHandling::free && pin_target) {
    throw InvalidArgument("a pin target is only meaningful with pin endpoint handling");
  }
  if (pin_target && pin_target->size() != model.dim) throw InvalidArgument("pin target has wrong dimension");

  auto batch = simulate_with_drift_offset(model, score, x0, grid, n_paths, seed, options);
  if (handling == EndpointHandling::pin) {
    for (std::size_t n = 0; n < batch.n_paths; ++n) batch.state(n, grid.steps()) = *pin_target;
  }
  return batch;
}

ScoreErrorReport score_error_report(const ScoreField& learned, const ScoreField& exact,
                                    const TrajectoryBatch& eval_states, double t_cutoff) {
  if (eval_states.n_paths == 0) throw InvalidArgument("score error report needs at least one state");
  if (learned.dim() != eval_states.dim || exact.dim() != eval_states.dim) {
    throw InvalidArgument("score dimension does not match the evaluation states");
  }
  const TimeGrid& grid = eval_states.grid;
  ScoreErrorReport report;
  report.n_paths = eval_states.n_paths;
  report.t_cutoff = t_cutoff;

  Matrix learned_values;
  Matrix exact_values;
  double averaged = 0.0;
  int averaged_count = 0;
  for (int l = 0; l < grid.steps(); ++l) {
    const double t = grid.node(l);
    const Matrix xs = eval_states.states_at(l);
    learned.evaluate(t, xs, learned_values);
    exact.evaluate(t, xs, exact_values);
    const double mse = (learned_values - exact_values).colwise().squaredNorm().mean();
    report.times.push_back(t);
    report.mse.push_back(mse);
    if (t <= t_cutoff) {
      averaged += mse;
      ++averaged_count;
    }
  }
  if (averaged_count == 0) throw InvalidArgument("t_cutoff excludes every grid node");
  report.time_averaged_mse = averaged / averaged_count;
  return report;
}

void write_score_error_csv(std::ostream& os, const ScoreErrorReport& report) {
  os << "t,mse\n";
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    os << format_real(report.times[i]) << ',' << format_real(report.mse[i]) << '\n';
  }
}

Matrix endpoints(const TrajectoryBatch& batch, int step) {
  return batch.states_at(step < 0 ? batch.grid.steps() : step);
}

double mean_radius_residual(const Matrix& points, double radius) {
  if (points.cols() == 0) throw InvalidArgument("no points");
  return (points.colwise().norm().array() - radius).abs().mean();
}

double mean_distance(const Matrix& points, const Vector& target) {
  if (points.cols() == 0) throw InvalidArgument("no points");
  return (points.colwise() - target).colwise().norm().mean();
}

double hit_fraction(const Matrix& points, const Vector& target, double radius) {
  if (points.cols() == 0) throw InvalidArgument("no points");
  const auto distances = (points.colwise() - target).colwise().norm().array();
  return (distances <= radius).cast<double>().mean();
}

}  // namespace bridgeforge
