#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bridgeforge/bridge.hpp"
#include "bridgeforge/errors.hpp"
#include "oracles.hpp"

using namespace bridgeforge;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("closed-form scores") {
  CHECK(ou_exact_score(1.0, 1.0, 0.0, scalar(1.0), 1.0, scalar(1.0))[0] == doctest::Approx(0.537879).epsilon(1e-5));
  CHECK(ou_exact_score(1.0, 1.0, 0.3, scalar(0.4), 1.0, scalar(0.4 * std::exp(-0.7)))[0] ==
        doctest::Approx(0.0).scale(1.0));
  CHECK(brownian_exact_score(1.0, 0.0, scalar(0.0), 1.0, scalar(2.0))[0] == 2.0);
  CHECK(brownian_exact_score(2.0, 0.5, scalar(0.0), 1.0, scalar(1.0))[0] == 0.5);
  CHECK(brownian_exact_score(1.0, 0.2, Vector::Ones(3), 1.0, Vector::Ones(3)) == Vector::Zero(3));
  CHECK_THROWS_AS((void)ou_exact_score(1.0, 1.0, 1.0, scalar(0.0), 1.0, scalar(0.0)), InvalidArgument);
  CHECK_THROWS_AS((void)brownian_exact_score(1.0, 1.5, scalar(0.0), 1.0, scalar(0.0)), InvalidArgument);
  CHECK_THROWS_AS((void)brownian_exact_score(1.0, 0.5, scalar(0.0), 1.0, Vector::Zero(2)), InvalidArgument);
}

TEST_CASE("closed-form scores satisfy the Chapman-Kolmogorov gradient identity") {
  // grad_x log int p(t,x;s,z) p(s,z;T,y) dz by quadrature and a central difference
  const double T = 1.0;
  const double y = 0.7;
  const double theta = 1.3;
  const double sigma = 0.8;
  auto ou_pdf = [&](double x, double tau, double x2) { return oracle::ou_density(theta, sigma, x, tau, x2); };
  auto bm_pdf = [&](double x, double tau, double x2) { return oracle::gaussian_pdf(x2, x, sigma * sigma * tau); };
  auto composed_score = [&](auto pdf, double t, double x) {
    const double s = 0.5 * (t + T);
    auto log_mass = [&](double x_) {
      return std::log(oracle::simpson([&](double z) { return pdf(x_, s - t, z) * pdf(z, T - s, y); }, -12.0, 12.0, 6000));
    };
    const double h = 1e-4;
    return (log_mass(x + h) - log_mass(x - h)) / (2.0 * h);
  };
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> time(0.0, 0.8);
  std::uniform_real_distribution<double> space(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const double t = time(gen);
    const double x = space(gen);
    CAPTURE(t);
    CAPTURE(x);
    CHECK(std::abs(ou_exact_score(theta, sigma, t, scalar(x), T, scalar(y))[0] - composed_score(ou_pdf, t, x)) <= 1e-6);
    CHECK(std::abs(brownian_exact_score(sigma, t, scalar(x), T, scalar(y))[0] - composed_score(bm_pdf, t, x)) <= 1e-6);
  }
}

TEST_CASE("score function adapters") {
  const ScoreFunction ou(ExactOuScore{1.0, 1.0, 1.0, scalar(1.0)});
  CHECK(ou.dim() == 1);
  CHECK(ou(0.0, scalar(1.0))[0] == doctest::Approx(0.537879).epsilon(1e-5));
  Matrix out;
  Matrix xs(1, 3);
  xs << -1.0, 0.0, 2.0;
  ou.evaluate(0.4, xs, out);
  for (int b = 0; b < 3; ++b) CHECK(out(0, b) == ou_exact_score(1.0, 1.0, 0.4, xs.col(b), 1.0, scalar(1.0))[0]);

  NetworkArchitecture arch;
  arch.state_dim = 2;
  arch.conditioned = true;
  arch.hidden = {4};
  const auto net = std::make_shared<const ScoreNetwork>(arch, 2);
  CHECK_THROWS_AS(ScoreFunction(NetworkScore{net, std::nullopt}), InvalidArgument);
  CHECK_THROWS_AS(ScoreFunction(NetworkScore{net, scalar(1.0)}), InvalidArgument);
  const ScoreFunction cond(NetworkScore{net, Vector::Ones(2)});
  CHECK(cond(0.1, Vector::Ones(2)) == Vector::Zero(2));
}

TEST_CASE("zero score reproduces the unconditioned simulation") {
  const auto model = make_ou(0.7, 1.2, 2);
  NetworkArchitecture arch;
  arch.state_dim = 2;
  arch.hidden = {4};
  const ScoreFunction zero(NetworkScore{std::make_shared<const ScoreNetwork>(arch, 1), std::nullopt});
  const TimeGrid grid(0.0, 1.0, 40);
  const auto bridge = sample_bridge(model, zero, Vector::Ones(2), grid, 30, 12);
  const auto plain = simulate(model, Vector::Ones(2), grid, 30, 12);
  CHECK(bridge.states == plain.states);
}

TEST_CASE("pinned bridges end exactly at the target") {
  const auto model = make_brownian(1.0, 2);
  Vector y(2);
  y << 0.3, -4.0;
  const ScoreFunction exact(ExactBrownianScore{1.0, 1.0, y});
  const TimeGrid grid(0.0, 1.0, 25);
  const auto batch = sample_bridge(model, exact, Vector::Zero(2), grid, 50, 3, EndpointHandling::pin, y);
  for (std::size_t n = 0; n < batch.n_paths; ++n) CHECK(batch.state(n, 25) == y);
  const auto free = sample_bridge(model, exact, Vector::Zero(2), grid, 50, 3);
  for (int l = 0; l < 25; ++l) CHECK(free.state(7, l) == batch.state(7, l));

  CHECK_THROWS_AS((void)sample_bridge(model, exact, Vector::Zero(2), grid, 5, 3, EndpointHandling::pin), InvalidArgument);
  CHECK_THROWS_AS((void)sample_bridge(model, exact, Vector::Zero(2), grid, 5, 3, EndpointHandling::free, y),
                  InvalidArgument);
}

TEST_CASE("exact Brownian bridge has the bridge variance") {
  const auto model = make_brownian(1.0, 1);
  const ScoreFunction exact(ExactBrownianScore{1.0, 1.0, scalar(0.0)});
  const auto batch = sample_bridge(model, exact, scalar(0.0), TimeGrid(0.0, 1.0, 100), 10000, 8);
  const Matrix mid = endpoints(batch, 50);
  const double mean = mid.mean();
  const double var = (mid.array() - mean).square().sum() / static_cast<double>(mid.cols() - 1);
  CHECK(std::abs(var - 0.25) <= 0.025);
}

TEST_CASE("exact OU bridge concentrates at the endpoint") {
  const auto model = make_ou(1.0, 1.0, 1);
  const ScoreFunction exact(ExactOuScore{1.0, 1.0, 1.0, scalar(1.0)});
  const auto batch = sample_bridge(model, exact, scalar(1.0), TimeGrid(0.0, 1.0, 100), 1000, 9);
  CHECK(mean_distance(endpoints(batch, 99), scalar(1.0)) <= 0.15);
}

TEST_CASE("score error report") {
  const double T = 1.0;
  const auto model = make_ou(1.0, 1.0, 1);
  const ScoreFunction exact(ExactOuScore{1.0, 1.0, T, scalar(1.0)});
  const TimeGrid grid(0.0, T, 50);
  const auto states = sample_bridge(model, exact, scalar(1.0), grid, 20000, 10);

  const auto self = score_error_report(exact, exact, states, 0.95);
  CHECK(self.times.size() == 50);
  CHECK(self.mse.size() == 50);
  for (const double m : self.mse) CHECK(m == 0.0);
  CHECK(self.time_averaged_mse == 0.0);
  CHECK(self.n_paths == 20000);
  CHECK(self.t_cutoff == 0.95);

  NetworkArchitecture arch;
  arch.hidden = {4};
  const ScoreFunction zero(NetworkScore{std::make_shared<const ScoreNetwork>(arch, 0), std::nullopt});
  const auto report = score_error_report(zero, exact, states, 0.95);

  // bridge marginal q_t(x) proportional to p(0,1;t,x) p(t,x;T,1)
  double averaged = 0.0;
  int counted = 0;
  for (int l = 0; l < 50; ++l) {
    const double t = grid.node(l);
    CHECK(report.times[l] == t);
    double direct = 0.0;
    for (std::size_t n = 0; n < states.n_paths; ++n) {
      const double s = ou_exact_score(1.0, 1.0, t, states.state(n, l), T, scalar(1.0))[0];
      direct += s * s;
    }
    direct /= static_cast<double>(states.n_paths);
    CHECK(report.mse[l] == doctest::Approx(direct).epsilon(1e-12));
    if (t <= 0.95) {
      averaged += direct;
      ++counted;
    }
    if (l == 0 || t > 0.8) continue;
    auto weight = [&](double x) { return oracle::ou_density(1.0, 1.0, 1.0, t, x) * oracle::ou_density(1.0, 1.0, x, T - t, 1.0); };
    auto score_sq = [&](double x) {
      const double s = ou_exact_score(1.0, 1.0, t, scalar(x), T, scalar(1.0))[0];
      return s * s;
    };
    const double norm = oracle::simpson(weight, -8.0, 10.0, 4000);
    const double expected = oracle::simpson([&](double x) { return score_sq(x) * weight(x); }, -8.0, 10.0, 4000) / norm;
    CAPTURE(t);
    CAPTURE(expected);
    CAPTURE(report.mse[l]);
    CHECK(oracle::close(report.mse[l], expected, 0.06, 1e-3));
  }
  CHECK(report.time_averaged_mse == doctest::Approx(averaged / counted).epsilon(1e-12));

  std::ostringstream csv;
  write_score_error_csv(csv, self);
  CHECK(csv.str().rfind("t,mse\n0,0\n0.02,0\n", 0) == 0);

  CHECK_THROWS_AS((void)score_error_report(exact, exact, states, -0.5), InvalidArgument);
}

TEST_CASE("bridges from different starts share one score") {
  const auto model = make_brownian(1.0, 2);
  Vector y(2);
  y << 3.0, 0.0;
  const ScoreFunction exact(ExactBrownianScore{1.0, 1.0, y});
  const TimeGrid grid(0.0, 1.0, 100);
  Vector far(2);
  far << -5.0, 0.0;
  for (const Vector& start : {Vector(Vector::Zero(2)), far}) {
    const auto batch = sample_bridge(model, exact, start, grid, 200, 4);
    CHECK(mean_distance(endpoints(batch, 99), y) <= 0.3);
  }
}

TEST_CASE("endpoint summaries") {
  Matrix pts(2, 3);
  pts << 3.0, 0.0, 1.0,
         0.0, 4.0, 0.0;
  CHECK(mean_radius_residual(pts, 3.0) == doctest::Approx((0.0 + 1.0 + 2.0) / 3.0));
  CHECK(mean_distance(pts, Vector::Zero(2)) == doctest::Approx((3.0 + 4.0 + 1.0) / 3.0));
  CHECK(hit_fraction(pts, Vector::Zero(2), 3.5) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS((void)mean_distance(Matrix(2, 0), Vector::Zero(2)), InvalidArgument);
}
