#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bridgeforge/linalg.hpp"

namespace bridgeforge {

struct NetworkArchitecture {
  /// State dimension d; also the output dimension.
  int state_dim = 1;
  /// When set, the endpoint y is a second input of dimension d.
  bool conditioned = false;
  /// Number of frequencies k in the time embedding sin/cos(2^k pi t / T).
  int time_features = 8;
  std::vector<int> hidden = {32, 32, 32, 32};
  /// T in the time embedding.
  double horizon = 1.0;
  /// Fixed factor applied to the output layer. Scores scale like 1/sigma^2,
  /// so small-noise models train better with the raw output kept O(1).
  double output_scale = 1.0;

  [[nodiscard]] int input_width() const noexcept {
    return 2 * time_features + state_dim * (conditioned ? 2 : 1);
  }
  [[nodiscard]] std::size_t parameter_count() const;
  /// Throws InvalidArgument on non-positive sizes or horizon.
  void validate() const;

  friend bool operator==(const NetworkArchitecture&, const NetworkArchitecture&) = default;
};

/// Fully connected score model s(t, x[, y]) with tanh hidden layers and a
/// linear output layer multiplied by `output_scale`. Parameters live in one flat array, laid out per layer
/// as the weight matrix (column-major, out x in) followed by the bias.
class ScoreNetwork {
 public:
  /// Hidden layers get N(0, 1/fan_in) weights and zero biases; the output
  /// layer starts at zero, so the initial score is identically zero.
  ScoreNetwork(NetworkArchitecture architecture, std::uint64_t init_seed);

  /// Network with explicit parameters (size must match the architecture).
  ScoreNetwork(NetworkArchitecture architecture, std::vector<double> parameters);

  [[nodiscard]] const NetworkArchitecture& architecture() const noexcept { return arch_; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }
  [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }
  [[nodiscard]] std::span<double> parameters() noexcept { return params_; }
  /// Human-readable name such as "layer2.weight[3,1]".
  [[nodiscard]] std::string parameter_name(std::size_t index) const;

  /// Input features: the time embedding stacked over x (and y). ts has B
  /// entries, xs and ys are d x B. Pass ys only for conditioned networks.
  [[nodiscard]] Matrix features(const Vector& ts, const Matrix& xs, const Matrix* ys = nullptr) const;
  /// Same for B states sharing a single time.
  [[nodiscard]] Matrix features(double t, const Matrix& xs, const Matrix* ys = nullptr) const;

  [[nodiscard]] Vector forward(double t, const Vector& x, const Vector* y = nullptr) const;
  /// Batched evaluation on a feature matrix (input_width x B) -> d x B.
  [[nodiscard]] Matrix forward(const Matrix& inputs) const;

  /// Per-layer inputs recorded by a forward pass, needed for backward.
  struct Cache {
    std::vector<Matrix> layer_inputs;
  };
  [[nodiscard]] Matrix forward(const Matrix& inputs, Cache& cache) const;

  /// Adds d(sum upstream . output)/d(theta) for the pass recorded in `cache`
  /// to `gradients`.
  void backward(const Cache& cache, const Matrix& upstream, std::span<double> gradients) const;
  /// Gradient of sum(upstream . forward(inputs)) with respect to the parameters.
  [[nodiscard]] std::vector<double> backward(const Matrix& inputs, const Matrix& upstream) const;

 private:
  struct Layer {
    std::size_t weight_offset;
    std::size_t bias_offset;
    int in;
    int out;
  };

  [[nodiscard]] Eigen::Map<const Matrix> weight(const Layer& layer) const {
    return {params_.data() + layer.weight_offset, layer.out, layer.in};
  }
  [[nodiscard]] Eigen::Map<const Vector> bias(const Layer& layer) const {
    return {params_.data() + layer.bias_offset, layer.out};
  }
  void build_layout();
  void check_inputs(const Matrix& inputs) const;

  NetworkArchitecture arch_;
  std::vector<Layer> layers_;
  // Aligned so that vectorised products over parameter blocks always take
  // the same code path, which keeps training bitwise reproducible.
  std::vector<double, Eigen::aligned_allocator<double>> params_;
};

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, AdamSettings settings = {});

  /// Applies one update. Throws NumericalError naming the first non-finite
  /// gradient entry; the network is left untouched in that case.
  void step(ScoreNetwork& net, std::span<const double> gradients);

  [[nodiscard]] std::int64_t step_count() const noexcept { return steps_; }
  [[nodiscard]] const AdamSettings& settings() const noexcept { return settings_; }
  [[nodiscard]] std::span<const double> first_moment() const noexcept { return m_; }
  [[nodiscard]] std::span<const double> second_moment() const noexcept { return v_; }

 private:
  AdamSettings settings_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t steps_ = 0;
};

/// Binary checkpoint: magic "BFSCORE1", format version, architecture, then
/// the raw parameter array. All fields little-endian; reloading is bitwise.
void save_checkpoint(std::ostream& os, const ScoreNetwork& net);
void save_checkpoint(const std::filesystem::path& path, const ScoreNetwork& net);
[[nodiscard]] ScoreNetwork load_checkpoint(std::istream& is);
[[nodiscard]] ScoreNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace bridgeforge
