#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "bridgeforge/adjoint.hpp"
#include "bridgeforge/bridge.hpp"
#include "bridgeforge/errors.hpp"
#include "bridgeforge/random.hpp"
#include "bridgeforge/trajectory_io.hpp"
#include "config.hpp"
#include "manifest.hpp"

namespace bridgeforge::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Run {
  const CommandOptions& options;
  std::ostream& out;
  RunConfig config;
  std::string config_sha256;
  fs::path dir;
  Manifest manifest;
  std::chrono::steady_clock::time_point clock_start;

  Run(const std::string& command, const CommandOptions& opts, std::ostream& os) : options(opts), out(os) {
    std::ifstream in(opts.config, std::ios::binary);
    if (!in) throw ConfigError(opts.config.string() + ": cannot open config file");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    config = parse_run_config(bytes.str(), opts.config.string());
    config_sha256 = sha256_hex(bytes.str());
    if (opts.seed) config.seed = *opts.seed;
    if (opts.workers < 1) throw ConfigError("--workers must be at least 1");
    dir = opts.out.value_or(config.output_dir);
    fs::create_directories(dir);

    manifest.config_sha256 = config_sha256;
    manifest.seed = config.seed;
    manifest.command = opts.command_line.empty() ? command : opts.command_line;
    manifest.started_at = utc_timestamp(std::chrono::system_clock::now());
    manifest.workers = opts.workers;
    clock_start = std::chrono::steady_clock::now();
  }

  fs::path artifact(const std::string& name) {
    const fs::path p = dir / name;
    manifest.artifact_paths.push_back(p.string());
    return p;
  }

  SimulationOptions simulation() const {
    SimulationOptions s;
    s.workers = options.workers;
    return s;
  }

  void finish(const std::string& manifest_name) {
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - clock_start;
    manifest.wall_time_ms = elapsed.count();
    const fs::path p = dir / manifest_name;
    write_manifest(p, manifest);
    out << "manifest: " << p.string() << '\n';
  }
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

std::vector<double> to_list(const Vector& v) { return {v.data(), v.data() + v.size()}; }

fs::path checkpoint_path(const Run& run) { return run.options.checkpoint.value_or(run.dir / "checkpoint.bin"); }

// Loads the checkpoint and checks it was trained for this config.
std::shared_ptr<const ScoreNetwork> load_network(const Run& run) {
  const fs::path path = checkpoint_path(run);
  ScoreNetwork net = [&] {
    try {
      return load_checkpoint(path);
    } catch (const InvalidArgument& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }();
  const auto& arch = net.architecture();
  const int dim = run.config.build_model().dim;
  const bool conditioned = run.config.endpoint.kind == EndpointConfig::Kind::box;
  std::string problem;
  if (arch.state_dim != dim) {
    problem = "state dimension " + std::to_string(arch.state_dim) + " but the model has dimension " + std::to_string(dim);
  } else if (arch.conditioned != conditioned) {
    problem = arch.conditioned ? "network takes an endpoint input but the config endpoint is not a box"
                               : "network takes no endpoint input but the config endpoint is a box";
  } else if (arch.horizon != run.config.T) {
    problem = "network horizon " + format_real(arch.horizon) + " differs from grid T " + format_real(run.config.T);
  }
  if (!problem.empty()) throw ConfigError(path.string() + ": checkpoint does not match the config: " + problem);
  return std::make_shared<const ScoreNetwork>(std::move(net));
}

ScoreFunction network_score(const Run& run, std::shared_ptr<const ScoreNetwork> net) {
  std::optional<Vector> y;
  if (net->architecture().conditioned) {
    if (!run.config.sampling.y) throw ConfigError(run.options.config.string() + ": /sampling/y is required for box endpoints");
    y = run.config.sampling.y;
  }
  return ScoreFunction(NetworkScore{std::move(net), y});
}

ScoreFunction exact_score(const RunConfig& cfg) {
  const auto& p = cfg.model.params;
  if (cfg.model.name == "ou") return ScoreFunction(ExactOuScore{p.theta.value_or(1.0), p.sigma.value_or(1.0), cfg.T, cfg.endpoint.y});
  return ScoreFunction(ExactBrownianScore{p.sigma.value_or(1.0), cfg.T, cfg.endpoint.y});
}

std::vector<Vector> sampling_starts(const Run& run) {
  auto starts = run.config.sampling.starts();
  if (starts.empty()) {
    throw ConfigError(run.options.config.string() + ": /sampling needs 'x0' or 'x0_circle' start points");
  }
  return starts;
}

std::optional<Vector> pin_target(const RunConfig& cfg) {
  if (cfg.sampling.endpoint_handling == EndpointHandling::pin) return cfg.endpoint.y;
  return std::nullopt;
}

int cmd_train(Run& run) {
  const TrainConfig tc = run.config.train_config(run.options.workers);
  const fs::path log_path = run.artifact("train_log.csv");
  std::ofstream log = open_output(log_path);
  log << "iteration,loss,wall_time_ms\n";
  const int every = std::max(1, tc.iterations / 10);
  const auto result = train(tc, [&](const TrainLogEntry& e) {
    log << e.iteration << ',' << format_real(e.loss) << ',' << format_real(e.wall_time_ms) << '\n';
    if (e.iteration % every == 0 || e.iteration + 1 == tc.iterations) {
      run.out << "iteration " << e.iteration << "  loss " << e.loss << '\n';
    }
  });
  log.close();
  const fs::path ckpt = run.options.checkpoint.value_or(run.dir / "checkpoint.bin");
  save_checkpoint(ckpt, result.network);
  run.manifest.artifact_paths.push_back(ckpt.string());
  run.out << "checkpoint: " << ckpt.string() << '\n';
  run.finish("train_manifest.json");
  return kSuccess;
}

int cmd_sample(Run& run) {
  const auto& cfg = run.config;
  const SdeModel model = cfg.build_model();
  const ScoreFunction score = network_score(run, load_network(run));
  const TimeGrid grid(0.0, cfg.T, cfg.steps);
  const auto starts = sampling_starts(run);
  std::ofstream csv = open_output(run.artifact("trajectories.csv"));
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const auto batch = sample_bridge(model, score, starts[k], grid, cfg.sampling.paths_per_start,
                                     derive_seed(cfg.seed, "sample", k), cfg.sampling.endpoint_handling,
                                     pin_target(cfg), run.simulation());
    write_trajectory_csv(csv, batch, k * cfg.sampling.paths_per_start, k == 0);
  }
  run.out << "sampled " << starts.size() * cfg.sampling.paths_per_start << " paths from " << starts.size()
          << " start point(s)\n";
  run.finish("sample_manifest.json");
  return kSuccess;
}

int cmd_evaluate(Run& run) {
  const auto& cfg = run.config;
  const auto& ev = cfg.evaluation;
  const SdeModel model = cfg.build_model();
  const auto net = load_network(run);
  const ScoreFunction learned = network_score(run, net);
  const TimeGrid grid(0.0, cfg.T, cfg.steps);

  if (ev.score_mse) {
    const ScoreFunction exact = exact_score(cfg);
    Vector x0 = cfg.endpoint.y;
    if (ev.x0) {
      x0 = *ev.x0;
    } else if (const auto starts = cfg.sampling.starts(); !starts.empty()) {
      x0 = starts.front();
    }
    const auto states = sample_bridge(model, exact, x0, grid, ev.n_paths, derive_seed(cfg.seed, "evaluate-exact"),
                                      EndpointHandling::free, std::nullopt, run.simulation());
    const auto report = score_error_report(learned, exact, states, ev.t_cutoff.value_or(0.95 * cfg.T));
    std::ofstream csv = open_output(run.artifact("score_error.csv"));
    write_score_error_csv(csv, report);
    json summary;
    summary["time_averaged_mse"] = report.time_averaged_mse;
    summary["n_paths"] = report.n_paths;
    summary["t_cutoff"] = report.t_cutoff;
    open_output(run.artifact("score_error.json")) << summary.dump(2) << '\n';
    run.out << "time-averaged score MSE " << report.time_averaged_mse << " (t <= " << report.t_cutoff << ", "
            << report.n_paths << " exact-bridge paths)\n";
  }

  if (ev.endpoint_stats) {
    const auto starts = sampling_starts(run);
    json groups = json::array();
    Matrix all_last;
    Matrix all_final;
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const auto batch = sample_bridge(model, learned, starts[k], grid, cfg.sampling.paths_per_start,
                                       derive_seed(cfg.seed, "evaluate-endpoint", k),
                                       cfg.sampling.endpoint_handling, pin_target(cfg), run.simulation());
      const Matrix last = endpoints(batch, grid.steps() - 1);
      const Matrix final_states = endpoints(batch);
      all_last.conservativeResize(last.rows(), all_last.cols() + last.cols());
      all_last.rightCols(last.cols()) = last;
      all_final.conservativeResize(final_states.rows(), all_final.cols() + final_states.cols());
      all_final.rightCols(final_states.cols()) = final_states;
      json g;
      g["x0"] = to_list(starts[k]);
      g["n_paths"] = batch.n_paths;
      groups.push_back(g);
    }

    auto stats = [&](const Matrix& pts) {
      json s;
      if (cfg.endpoint.kind == EndpointConfig::Kind::circle) {
        s["mean_radius_residual"] = mean_radius_residual(pts, cfg.endpoint.radius);
      } else {
        s["mean_distance"] = mean_distance(pts, cfg.endpoint.y);
        s["hit_fraction"] = hit_fraction(pts, cfg.endpoint.y, ev.hit_radius);
      }
      return s;
    };
    std::size_t offset = 0;
    for (auto& g : groups) {
      const auto n = static_cast<Eigen::Index>(g["n_paths"].get<std::size_t>());
      g["at_T"] = stats(all_final.middleCols(static_cast<Eigen::Index>(offset), n));
      g["at_last_scored_node"] = stats(all_last.middleCols(static_cast<Eigen::Index>(offset), n));
      offset += static_cast<std::size_t>(n);
    }
    json metrics;
    metrics["endpoint"] = cfg.endpoint.kind == EndpointConfig::Kind::circle ? json{{"circle_radius", cfg.endpoint.radius}}
                                                                            : json{{"y", to_list(cfg.endpoint.y)}};
    if (cfg.endpoint.kind != EndpointConfig::Kind::circle) metrics["hit_radius"] = ev.hit_radius;
    metrics["endpoint_handling"] = cfg.sampling.endpoint_handling == EndpointHandling::pin ? "pin" : "free";
    metrics["at_T"] = stats(all_final);
    metrics["at_last_scored_node"] = stats(all_last);
    metrics["starts"] = groups;
    open_output(run.artifact("endpoint_metrics.json")) << metrics.dump(2) << '\n';
    run.out << "endpoint statistics at T: " << metrics["at_T"].dump() << '\n';
  }
  run.finish("evaluate_manifest.json");
  return kSuccess;
}

struct IdentityCheck {
  std::string name;
  std::function<double(const Vector&)> g;
  double closed_form;
};

int cmd_adjoint_check(Run& run) {
  const auto& cfg = run.config;
  const std::string& source = run.options.config.string();
  if (!cfg.has_exact_score()) {
    throw ConfigError(source + ": adjoint-check has closed-form values only for the ou and brownian models, not '" +
                      cfg.model.name + "'");
  }
  if (cfg.endpoint.kind != EndpointConfig::Kind::fixed) {
    throw ConfigError(source + ": adjoint-check needs a fixed endpoint y");
  }
  const SdeModel model = cfg.build_model();
  const double T = cfg.T;
  const Vector& y = cfg.endpoint.y;
  const double d = model.dim;
  const double sigma = cfg.model.params.sigma.value_or(1.0);

  // Closed forms of the integral of g(x) p(0, x; T, y) dx.
  double mass = 1.0;
  double mean = y[0];
  double variance = sigma * sigma * T;
  if (model.name == "ou") {
    const double theta = cfg.model.params.theta.value_or(1.0);
    mass = std::exp(theta * d * T);
    mean = y[0] * std::exp(theta * T);
    variance = sigma * sigma * std::expm1(2.0 * theta * T) / (2.0 * theta);
  }
  const std::vector<IdentityCheck> checks = {
      {"g(x) = 1", [](const Vector&) { return 1.0; }, mass},
      {"g(x) = x_0", [](const Vector& x) { return x[0]; }, mass * mean},
      {"g(x) = x_0^2", [](const Vector& x) { return x[0] * x[0]; }, mass * (mean * mean + variance)},
  };

  const AdjointSystem adjoint = build_adjoint(model, 0.0, T);
  const TimeGrid grid(0.0, T, cfg.adjoint_check.steps);
  json results = json::array();
  bool all_passed = true;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const auto& check = checks[i];
    const auto mc = adjoint_expectation(adjoint, y, grid, check.g, cfg.adjoint_check.n_paths,
                                        derive_seed(cfg.seed, "adjoint-check", i), run.simulation());
    const double diff = mc.estimate - check.closed_form;
    bool passed = false;
    json entry;
    entry["g"] = check.name;
    entry["estimate"] = mc.estimate;
    entry["std_error"] = mc.std_error;
    entry["closed_form"] = check.closed_form;
    if (mc.std_error > 0.0) {
      const double z = diff / mc.std_error;
      entry["z"] = z;
      passed = std::abs(z) <= cfg.adjoint_check.z_threshold;
    } else {
      // deterministic weights and g: compare directly
      entry["z"] = nullptr;
      passed = std::abs(diff) <= 1e-6 * std::max(1.0, std::abs(check.closed_form));
    }
    entry["passed"] = passed;
    all_passed = all_passed && passed;
    run.out << check.name << ": estimate " << format_real(mc.estimate) << " +- " << format_real(mc.std_error)
            << ", closed form " << format_real(check.closed_form) << (passed ? "  PASS" : "  FAIL") << '\n';
    results.push_back(entry);
  }
  json report;
  report["model"] = model.name;
  report["T"] = T;
  report["y"] = to_list(y);
  report["n_paths"] = cfg.adjoint_check.n_paths;
  report["L"] = cfg.adjoint_check.steps;
  report["z_threshold"] = cfg.adjoint_check.z_threshold;
  report["checks"] = results;
  report["passed"] = all_passed;
  open_output(run.artifact("adjoint_check.json")) << report.dump(2) << '\n';
  run.finish("adjoint_check_manifest.json");
  return all_passed ? kSuccess : kAcceptanceFailure;
}

}  // namespace

int run_command(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    Run run(name, options, out);
    if (name == "train") return cmd_train(run);
    if (name == "sample") return cmd_sample(run);
    if (name == "evaluate") return cmd_evaluate(run);
    if (name == "adjoint-check") return cmd_adjoint_check(run);
    err << "error: unknown command '" << name << "'\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::invalid_argument& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::out_of_range& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace bridgeforge::cli
