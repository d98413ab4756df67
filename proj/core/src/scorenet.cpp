#include "bridgeforge/scorenet.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <utility>

#include "bridgeforge/errors.hpp"
#include "bridgeforge/random.hpp"

namespace bridgeforge {

namespace {

// tanh through the vectorised exp kernel: tanh(z) = 1 - 2 / (exp(2z) + 1).
// Saturates cleanly to +-1 when exp overflows or underflows.
Matrix tanh_activation(const Matrix& z) {
  return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

}  // namespace

std::size_t NetworkArchitecture::parameter_count() const {
  std::size_t count = 0;
  int in = input_width();
  for (const int width : hidden) {
    count += static_cast<std::size_t>(in) * width + width;
    in = width;
  }
  return count + static_cast<std::size_t>(in) * state_dim + state_dim;
}

void NetworkArchitecture::validate() const {
  if (state_dim < 1) throw InvalidArgument("network state_dim must be at least 1");
  if (time_features < 0) throw InvalidArgument("network time_features must be non-negative");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("network horizon must be positive");
  if (!(output_scale > 0.0) || !std::isfinite(output_scale)) throw InvalidArgument("network output_scale must be positive");
  for (const int width : hidden) {
    if (width < 1) throw InvalidArgument("hidden layer widths must be positive");
  }
}

ScoreNetwork::ScoreNetwork(NetworkArchitecture architecture, std::uint64_t init_seed)
    : arch_(std::move(architecture)) {
  arch_.validate();
  build_layout();
  params_.assign(arch_.parameter_count(), 0.0);
  for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
    const Layer& layer = layers_[k];
    const CounterRng rng(init_seed, k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in));
    const auto count = static_cast<std::size_t>(layer.in) * layer.out;
    for (std::size_t i = 0; i < count; ++i) params_[layer.weight_offset + i] = scale * rng.normal(i, 0);
  }
}

ScoreNetwork::ScoreNetwork(NetworkArchitecture architecture, std::vector<double> parameters)
    : arch_(std::move(architecture)), params_(parameters.begin(), parameters.end()) {
  arch_.validate();
  build_layout();
  if (params_.size() != arch_.parameter_count()) {
    throw InvalidArgument("parameter array does not match the network architecture");
  }
}

void ScoreNetwork::build_layout() {
  layers_.clear();
  std::size_t offset = 0;
  int in = arch_.input_width();
  auto push = [&](int out) {
    const Layer layer{offset, offset + static_cast<std::size_t>(in) * out, in, out};
    layers_.push_back(layer);
    offset = layer.bias_offset + static_cast<std::size_t>(out);
    in = out;
  };
  for (const int width : arch_.hidden) push(width);
  push(arch_.state_dim);
}

std::string ScoreNetwork::parameter_name(std::size_t index) const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& layer = layers_[k];
    if (index < layer.bias_offset) {
      const std::size_t local = index - layer.weight_offset;
      return "layer" + std::to_string(k) + ".weight[" + std::to_string(local % layer.out) + "," +
             std::to_string(local / layer.out) + "]";
    }
    if (index < layer.bias_offset + static_cast<std::size_t>(layer.out)) {
      return "layer" + std::to_string(k) + ".bias[" + std::to_string(index - layer.bias_offset) + "]";
    }
  }
  throw InvalidArgument("parameter index out of range");
}

Matrix ScoreNetwork::features(const Vector& ts, const Matrix& xs, const Matrix* ys) const {
  const int d = arch_.state_dim;
  if (xs.rows() != d || xs.cols() != ts.size()) throw InvalidArgument("state batch has wrong shape");
  if (arch_.conditioned != (ys != nullptr)) {
    throw InvalidArgument(arch_.conditioned ? "conditioned network requires an endpoint input"
                                            : "unconditioned network takes no endpoint input");
  }
  if (ys != nullptr && (ys->rows() != d || ys->cols() != xs.cols())) {
    throw InvalidArgument("endpoint batch has wrong shape");
  }
  const int F = arch_.time_features;
  Matrix out(arch_.input_width(), xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const double phase = std::numbers::pi * ts[j] / arch_.horizon;
    double frequency = 1.0;
    for (int k = 0; k < F; ++k) {
      out(2 * k, j) = std::sin(frequency * phase);
      out(2 * k + 1, j) = std::cos(frequency * phase);
      frequency *= 2.0;
    }
  }
  out.middleRows(2 * F, d) = xs;
  if (ys != nullptr) out.bottomRows(d) = *ys;
  return out;
}

Matrix ScoreNetwork::features(double t, const Matrix& xs, const Matrix* ys) const {
  return features(Vector::Constant(xs.cols(), t), xs, ys);
}

Vector ScoreNetwork::forward(double t, const Vector& x, const Vector* y) const {
  if (y != nullptr) {
    const Matrix ym = *y;
    return forward(features(t, x, &ym)).col(0);
  }
  return forward(features(t, x)).col(0);
}

void ScoreNetwork::check_inputs(const Matrix& inputs) const {
  if (inputs.rows() != arch_.input_width()) throw InvalidArgument("input width does not match the network");
}

Matrix ScoreNetwork::forward(const Matrix& inputs) const {
  check_inputs(inputs);
  Matrix activation = inputs;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Matrix z = weight(layers_[k]) * activation;
    z.colwise() += bias(layers_[k]);
    if (k + 1 < layers_.size()) {
      activation = tanh_activation(z);
    } else {
      activation = arch_.output_scale * z;
    }
  }
  return activation;
}

Matrix ScoreNetwork::forward(const Matrix& inputs, Cache& cache) const {
  check_inputs(inputs);
  cache.layer_inputs.resize(layers_.size());
  cache.layer_inputs[0] = inputs;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Matrix z = weight(layers_[k]) * cache.layer_inputs[k];
    z.colwise() += bias(layers_[k]);
    if (k + 1 < layers_.size()) {
      cache.layer_inputs[k + 1] = tanh_activation(z);
    } else {
      return arch_.output_scale * z;
    }
  }
  return {};
}

void ScoreNetwork::backward(const Cache& cache, const Matrix& upstream, std::span<double> gradients) const {
  if (cache.layer_inputs.size() != layers_.size()) throw InvalidArgument("backward called without a forward cache");
  if (gradients.size() != params_.size()) throw InvalidArgument("gradient buffer has wrong size");
  if (upstream.rows() != arch_.state_dim || upstream.cols() != cache.layer_inputs[0].cols()) {
    throw InvalidArgument("upstream gradient has wrong shape");
  }
  Matrix delta = arch_.output_scale * upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& layer = layers_[k];
    const Matrix& input = cache.layer_inputs[k];
    // Products go through owned (aligned) temporaries: Eigen's reduction order
    // depends on the destination's alignment, and `gradients` may be unaligned.
    const Matrix weight_grad = delta * input.transpose();
    const Vector bias_grad = delta.rowwise().sum();
    Eigen::Map<Matrix>(gradients.data() + layer.weight_offset, layer.out, layer.in) += weight_grad;
    Eigen::Map<Vector>(gradients.data() + layer.bias_offset, layer.out) += bias_grad;
    if (k > 0) {
      // tanh'(z) = 1 - tanh(z)^2, and `input` holds tanh(z) of the layer below.
      Matrix back = weight(layer).transpose() * delta;
      delta = (back.array() * (1.0 - input.array().square())).matrix();
    }
  }
}

std::vector<double> ScoreNetwork::backward(const Matrix& inputs, const Matrix& upstream) const {
  Cache cache;
  (void)forward(inputs, cache);
  std::vector<double> gradients(params_.size(), 0.0);
  backward(cache, upstream, gradients);
  return gradients;
}

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, AdamSettings settings)
    : settings_(settings), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(settings.learning_rate > 0.0) || !(settings.beta1 >= 0.0 && settings.beta1 < 1.0) ||
      !(settings.beta2 >= 0.0 && settings.beta2 < 1.0) || !(settings.epsilon > 0.0)) {
    throw InvalidArgument("invalid optimizer settings");
  }
}

void AdamOptimizer::step(ScoreNetwork& net, std::span<const double> gradients) {
  if (gradients.size() != m_.size() || net.parameter_count() != m_.size()) {
    throw InvalidArgument("gradient size does not match the optimizer state");
  }
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    if (!std::isfinite(gradients[i])) {
      throw NumericalError("non-finite gradient for parameter " + net.parameter_name(i));
    }
  }
  ++steps_;
  const auto t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(settings_.beta1, t);
  const double correction2 = 1.0 - std::pow(settings_.beta2, t);
  auto params = net.parameters();
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    const double g = gradients[i];
    m_[i] = settings_.beta1 * m_[i] + (1.0 - settings_.beta1) * g;
    v_[i] = settings_.beta2 * v_[i] + (1.0 - settings_.beta2) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= settings_.learning_rate * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
  }
}

namespace {

constexpr std::array<char, 8> kMagic = {'B', 'F', 'S', 'C', 'O', 'R', 'E', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kActivationTanh = 1;

template <class T>
void put(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>(bits & 0xFFu);
    bits >>= 8;
  }
  os.write(bytes.data(), bytes.size());
}

template <class T>
T get(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<char, sizeof(U)> bytes{};
  if (!is.read(bytes.data(), bytes.size())) throw InvalidArgument("checkpoint is truncated");
  U bits = 0;
  for (std::size_t i = sizeof(U); i-- > 0;) bits = (bits << 8) | static_cast<unsigned char>(bytes[i]);
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_checkpoint(std::ostream& os, const ScoreNetwork& net) {
  const auto& arch = net.architecture();
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.state_dim));
  put<std::uint32_t>(os, arch.conditioned ? 1u : 0u);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.time_features));
  put<double>(os, arch.horizon);
  put<double>(os, arch.output_scale);
  put<std::uint32_t>(os, kActivationTanh);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.hidden.size()));
  for (const int width : arch.hidden) put<std::uint32_t>(os, static_cast<std::uint32_t>(width));
  put<std::uint64_t>(os, net.parameter_count());
  for (const double p : net.parameters()) put<double>(os, p);
  if (!os) throw InvalidArgument("failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const ScoreNetwork& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open checkpoint for writing: " + path.string());
  save_checkpoint(os, net);
}

ScoreNetwork load_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw InvalidArgument("not a score network checkpoint");
  if (const auto version = get<std::uint32_t>(is); version != kFormatVersion) {
    throw InvalidArgument("unsupported checkpoint version " + std::to_string(version));
  }
  NetworkArchitecture arch;
  arch.state_dim = static_cast<int>(get<std::uint32_t>(is));
  arch.conditioned = get<std::uint32_t>(is) != 0;
  arch.time_features = static_cast<int>(get<std::uint32_t>(is));
  arch.horizon = get<double>(is);
  arch.output_scale = get<double>(is);
  if (get<std::uint32_t>(is) != kActivationTanh) throw InvalidArgument("unknown activation in checkpoint");
  const auto n_hidden = get<std::uint32_t>(is);
  if (n_hidden > 1024) throw InvalidArgument("corrupt checkpoint header");
  arch.hidden.resize(n_hidden);
  for (auto& width : arch.hidden) width = static_cast<int>(get<std::uint32_t>(is));
  arch.validate();
  const auto n_params = get<std::uint64_t>(is);
  if (n_params != arch.parameter_count()) throw InvalidArgument("checkpoint parameter count mismatch");
  std::vector<double> params(n_params);
  for (auto& p : params) p = get<double>(is);
  return {std::move(arch), std::move(params)};
}

ScoreNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open checkpoint: " + path.string());
  return load_checkpoint(is);
}

}  // namespace bridgeforge
