// Acceptance suite: one PASS/FAIL line per criterion. `--only N` runs a
// single criterion; the exit status is nonzero if any selected one fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bridgeforge/adjoint.hpp"
#include "bridgeforge/bridge.hpp"
#include "bridgeforge/random.hpp"
#include "bridgeforge/trajectory_io.hpp"
#include "bridgeforge/training.hpp"
#include "oracles.hpp"

using namespace bridgeforge;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  return buffer;
}

Outcome within_budget(Outcome outcome, Clock::time_point start, double budget_seconds) {
  const double elapsed = seconds_since(start);
  outcome.detail += "; runtime " + fmt("%.1f", elapsed) + " s (budget " + fmt("%.0f", budget_seconds) + " s)";
  outcome.passed = outcome.passed && elapsed < budget_seconds;
  return outcome;
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 1e-8 ? std::abs(a - b) / scale : std::abs(a - b);
}

// ---- criterion 1 -------------------------------------------------------

// Writes the sampled coefficients so determinism can be checked on them.
std::string adjoint_coefficient_table(double& worst, bool& ou_exact) {
  std::ostringstream csv;
  csv << "model,s,point,alpha_analytic,alpha_fd,c_analytic,c_fd\n";
  worst = 0.0;
  ou_exact = true;
  std::mt19937_64 gen(20240501);
  for (const auto& model : {make_ou(1.0, 1.0, 1), make_brownian(1.0, 2), make_cell_model(0.1)}) {
    const double T = 2.0;
    const auto adj = build_adjoint(model, 0.0, T);
    std::uniform_real_distribution<double> time(0.0, T);
    for (int k = 0; k < 100; ++k) {
      const double s = time(gen);
      const Vector x = oracle::uniform_vector(gen, model.dim, -2.0, 2.0);
      const double r = adj.reflect(s);
      const Vector alpha = adj.alpha(s, x);
      const double c = adj.c(s, x);
      // independent construction: alpha_i = sum_j d Sigma_ij / dx_j - f_i,
      // c = 1/2 sum_ij d^2 Sigma_ij / dx_i dx_j - sum_i d f_i / dx_i
      Vector alpha_fd = -model.drift(r, x);
      double hess = 0.0;
      double div = 0.0;
      for (int i = 0; i < model.dim; ++i) {
        div += oracle::partial([&](const Vector& z) { return model.drift(r, z)[i]; }, x, i);
        for (int j = 0; j < model.dim; ++j) {
          alpha_fd[i] += oracle::partial([&](const Vector& z) { return model.sigma_sq(r, z)(i, j); }, x, j);
          hess += oracle::second_partial([&](const Vector& z) { return model.sigma_sq(r, z)(i, j); }, x, i, j);
        }
      }
      const double c_fd = 0.5 * hess - div;
      for (int i = 0; i < model.dim; ++i) {
        worst = std::max(worst, relative_error(alpha[i], alpha_fd[i]));
        csv << model.name << ',' << format_real(s) << ',' << k << ',' << format_real(alpha[i]) << ','
            << format_real(alpha_fd[i]) << ',' << format_real(c) << ',' << format_real(c_fd) << '\n';
      }
      worst = std::max(worst, relative_error(c, c_fd));
      if (model.name == "ou") ou_exact = ou_exact && alpha[0] == x[0] && c == 1.0;
    }
  }
  return csv.str();
}

Outcome criterion1() {
  const auto start = Clock::now();
  double worst = 0.0;
  bool ou_exact = false;
  (void)adjoint_coefficient_table(worst, ou_exact);
  Outcome o;
  o.passed = ou_exact && worst <= 1e-4;
  o.detail = std::string("OU alpha=x, c=1 exactly: ") + (ou_exact ? "yes" : "no") +
             "; max relative error analytic vs finite differences " + fmt("%.2e", worst) + " (<= 1e-4)";
  return within_budget(o, start, 5.0);
}

// ---- criterion 2 -------------------------------------------------------

struct Criterion2Data {
  MonteCarloEstimate mass;
  MonteCarloEstimate first;
  std::string csv;
};

Criterion2Data criterion2_run(int workers) {
  const auto adj = build_adjoint(make_ou(1.0, 1.0, 1), 0.0, 1.0);
  const TimeGrid grid(0.0, 1.0, 200);
  SimulationOptions options;
  options.workers = workers;
  const Vector y = Vector::Ones(1);
  Criterion2Data out;
  // The expectations are taken over one simulated batch so its end states can be written out.
  const auto batch = simulate_adjoint(adj, y, grid, 100000, 2002, options);
  auto estimate = [&](const std::function<double(double)>& g) {
    const std::size_t n = batch.n_paths;
    std::vector<double> values(n);
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      values[k] = g(batch.state(k, grid.steps())[0]) * std::exp(batch.log_weights[k]);
      mean += values[k];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    return MonteCarloEstimate{mean, std::sqrt(var / static_cast<double>(n))};
  };
  out.mass = estimate([](double) { return 1.0; });
  out.first = estimate([](double x) { return x; });
  // library estimator on its own seed, as a second reading of the same identity
  const auto library = adjoint_expectation(adj, y, grid, [](const Vector& x) { return x[0]; }, 100000, 2003, options);
  std::ostringstream csv;
  csv << "path,y_T,log_weight\n";
  for (std::size_t k = 0; k < batch.n_paths; ++k) {
    csv << k << ',' << format_real(batch.state(k, grid.steps())[0]) << ',' << format_real(batch.log_weights[k]) << '\n';
  }
  csv << "library_estimate," << format_real(library.estimate) << ',' << format_real(library.std_error) << '\n';
  out.csv = csv.str();
  return out;
}

Outcome criterion2() {
  const auto start = Clock::now();
  const auto r = criterion2_run(1);
  const double e = std::exp(1.0);
  const double e2 = std::exp(2.0);
  const double z = (r.first.estimate - e2) / r.first.std_error;
  Outcome o;
  o.passed = std::abs(r.mass.estimate - e) <= 1e-6 && std::abs(z) <= 4.0;
  o.detail = "g=1: |est - e| = " + fmt("%.2e", std::abs(r.mass.estimate - e)) + " (<= 1e-6); g=x: est " +
             fmt("%.5f", r.first.estimate) + " vs e^2 = 7.38906, z = " + fmt("%.2f", z) + " (|z| <= 4)";
  return within_budget(o, start, 30.0);
}

// ---- criterion 3 -------------------------------------------------------

struct Criterion3Data {
  double variance_mid = 0.0;
  double ou_endpoint_error = 0.0;
  std::string csv;
};

Criterion3Data criterion3_run(int workers) {
  SimulationOptions options;
  options.workers = workers;
  const TimeGrid grid(0.0, 1.0, 100);
  const ScoreFunction bm_score(ExactBrownianScore{1.0, 1.0, Vector::Zero(1)});
  const auto bm = sample_bridge(make_brownian(1.0, 1), bm_score, Vector::Zero(1), grid, 10000, 3003,
                                EndpointHandling::free, std::nullopt, options);
  const Matrix mid = endpoints(bm, 50);
  const double mean = mid.mean();
  Criterion3Data out;
  out.variance_mid = (mid.array() - mean).square().sum() / static_cast<double>(mid.cols() - 1);

  const ScoreFunction ou_score(ExactOuScore{1.0, 1.0, 1.0, Vector::Ones(1)});
  const auto ou = sample_bridge(make_ou(1.0, 1.0, 1), ou_score, Vector::Ones(1), grid, 1000, 3004,
                                EndpointHandling::free, std::nullopt, options);
  out.ou_endpoint_error = mean_distance(endpoints(ou, grid.steps() - 1), Vector::Ones(1));

  std::ostringstream csv;
  write_trajectory_csv(csv, bm);
  write_trajectory_csv(csv, ou);
  out.csv = csv.str();
  return out;
}

Outcome criterion3() {
  const auto start = Clock::now();
  const auto r = criterion3_run(1);
  Outcome o;
  const double rel = std::abs(r.variance_mid - 0.25) / 0.25;
  o.passed = rel <= 0.10 && r.ou_endpoint_error <= 0.15;
  o.detail = "Brownian bridge Var X(0.5) = " + fmt("%.4f", r.variance_mid) + " (within 10% of 0.25: " +
             fmt("%.1f", 100 * rel) + "%); OU mean |X(t_{L-1}) - y| = " + fmt("%.4f", r.ou_endpoint_error) +
             " (<= 0.15)";
  return within_budget(o, start, 30.0);
}

// ---- criteria 4 and 5 --------------------------------------------------

struct LearningRun {
  double mse = 0.0;
  bool loss_decreased = false;
};

LearningRun learn_ou(int dim, std::size_t batch_size, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.model = {"ou", {1.0, 1.0, dim}};
  cfg.T = 1.0;
  cfg.steps = 100;
  cfg.batch_size = batch_size;
  cfg.iterations = 300;
  cfg.seed = seed;
  cfg.endpoint = FixedEndpoint{Vector::Ones(dim)};
  const auto result = train(cfg);

  const auto& log = result.log;
  const std::size_t q = log.size() / 4;
  double first = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    first += log[i].loss;
    last += log[log.size() - q + i].loss;
  }

  const SdeModel model = ModelRegistry::builtin().make(cfg.model);
  const ScoreFunction exact(ExactOuScore{1.0, 1.0, 1.0, Vector::Ones(dim)});
  const ScoreFunction learned(NetworkScore{std::make_shared<const ScoreNetwork>(result.network), std::nullopt});
  const TimeGrid grid(0.0, 1.0, 100);
  const auto states = sample_bridge(model, exact, Vector::Ones(dim), grid, 1000, derive_seed(seed, "evaluation"));
  const auto report = score_error_report(learned, exact, states, 0.95);
  return {report.time_averaged_mse, last < first};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome criterion4() {
  const auto start = Clock::now();
  std::vector<double> mses;
  bool all_decreased = true;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = learn_ou(1, 200, seed);
    mses.push_back(r.mse);
    all_decreased = all_decreased && r.loss_decreased;
    per_seed += (seed ? " " : "") + fmt("%.4f", r.mse) + (r.loss_decreased ? "" : "(loss not decreasing)");
  }
  Outcome o;
  const double m = median(mses);
  o.passed = m <= 0.1 && all_decreased;
  o.detail = "median time-averaged MSE " + fmt("%.4f", m) + " (<= 0.1), per seed [" + per_seed +
             "]; final-quartile loss below first-quartile for every seed: " + (all_decreased ? "yes" : "no");
  return within_budget(o, start, 600.0);
}

Outcome criterion5() {
  std::string detail;
  bool passed = true;
  for (const int dim : {1, 2, 4}) {
    std::vector<double> mses;
    bool decreased = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = learn_ou(dim, 400, seed);
      mses.push_back(r.mse);
      decreased = decreased && r.loss_decreased;
    }
    const double m = median(mses);
    passed = passed && m <= 0.2 && decreased;
    detail += (detail.empty() ? "" : ", ") + std::string("d=") + std::to_string(dim) + ": median MSE " +
              fmt("%.4f", m) + (decreased ? "" : " (loss not decreasing)");
  }
  return {passed, detail + " (each <= 0.2)"};
}

// ---- criterion 6 -------------------------------------------------------

Outcome criterion6() {
  const auto start = Clock::now();
  TrainConfig cfg;
  cfg.model = {"brownian", {std::nullopt, 1.0, 2}};
  cfg.T = 1.0;
  cfg.steps = 100;
  cfg.endpoint = uniform_on_circle(3.0);
  cfg.optimizer.learning_rate = 1e-2;
  cfg.seed = 0;
  const auto result = train(cfg);
  const SdeModel model = ModelRegistry::builtin().make(cfg.model);
  const ScoreFunction learned(NetworkScore{std::make_shared<const ScoreNetwork>(result.network), std::nullopt});
  const TimeGrid grid(0.0, 1.0, 100);
  const int last = grid.steps() - 1;

  const auto origin = sample_bridge(model, learned, Vector::Zero(2), grid, 200, 6001);
  const double origin_residual = mean_radius_residual(endpoints(origin, last), 3.0);

  // 20 evenly spaced starts on the radius-5 circle, 10 bridges each
  Matrix ring_ends(2, 200);
  for (int k = 0; k < 20; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 20.0;
    Vector x0(2);
    x0 << 5.0 * std::cos(angle), 5.0 * std::sin(angle);
    const auto batch = sample_bridge(model, learned, x0, grid, 10, derive_seed(6002, "ring", k));
    ring_ends.middleCols(10 * k, 10) = endpoints(batch, last);
  }
  const double ring_residual = mean_radius_residual(ring_ends, 3.0);
  Outcome o;
  o.passed = origin_residual <= 0.3 && ring_residual <= 0.3;
  o.detail = "mean | |X(t_{L-1})| - 3 |: from origin " + fmt("%.4f", origin_residual) + ", from radius-5 circle " +
             fmt("%.4f", ring_residual) + " (each <= 0.3), one checkpoint";
  return within_budget(o, start, 900.0);
}

// ---- criterion 7 -------------------------------------------------------

Outcome criterion7() {
  const auto start = Clock::now();
  Vector target(2);
  target << 1.5, 0.2;
  TrainConfig cfg;
  cfg.model = {"cell", {std::nullopt, 0.1, std::nullopt}};
  cfg.T = 2.0;
  cfg.steps = 100;
  cfg.endpoint = FixedEndpoint{target};
  cfg.output_scale = 100.0;
  cfg.optimizer.learning_rate = 3e-3;
  cfg.seed = 0;
  const auto result = train(cfg);
  const SdeModel model = ModelRegistry::builtin().make(cfg.model);
  const ScoreFunction learned(NetworkScore{std::make_shared<const ScoreNetwork>(result.network), std::nullopt});
  Vector x0(2);
  x0 << 0.1, 0.1;
  const auto bridges = sample_bridge(model, learned, x0, TimeGrid(0.0, 2.0, 100), 200, 7001);
  const double hits = hit_fraction(endpoints(bridges), target, 0.3);
  Outcome o;
  o.passed = hits >= 0.8;
  o.detail = "fraction of 200 bridge endpoints within 0.3 of (1.5, 0.2): " + fmt("%.3f", hits) + " (>= 0.80)";
  return within_budget(o, start, 900.0);
}

// ---- criterion 8 -------------------------------------------------------

std::string criteria_csv(int workers) {
  double worst = 0.0;
  bool exact = false;
  // the coefficient table has no parallel stage; it is included to pin its output
  std::string all = adjoint_coefficient_table(worst, exact);
  all += criterion2_run(workers).csv;
  all += criterion3_run(workers).csv;
  return all;
}

Outcome criterion8() {
  const std::string serial = criteria_csv(1);
  const std::string serial_again = criteria_csv(1);
  const std::string threaded = criteria_csv(4);
  Outcome o;
  o.passed = serial == serial_again && serial == threaded;
  o.detail = std::string("criteria 1-3 CSV output (") + std::to_string(serial.size()) +
             " bytes): rerun identical " + (serial == serial_again ? "yes" : "no") + ", workers 1 vs 4 identical " +
             (serial == threaded ? "yes" : "no");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bridgeforge acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                          criterion5, criterion6, criterion7, criterion8};
  bool all_passed = true;
  for (int i = 1; i <= 8; ++i) {
    if (only != 0 && only != i) continue;
    Outcome outcome;
    try {
      outcome = criteria[static_cast<std::size_t>(i - 1)]();
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    std::cout << (outcome.passed ? "PASS" : "FAIL") << " criterion " << i << ": " << outcome.detail << std::endl;
    all_passed = all_passed && outcome.passed;
  }
  return all_passed ? 0 : 1;
}
