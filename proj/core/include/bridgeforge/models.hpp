#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bridgeforge/linalg.hpp"

namespace bridgeforge {

/// A d-dimensional SDE dX = f(t,X)dt + sigma(t,X)dW driven by m-dimensional
/// noise, together with the derivative information the adjoint construction
/// consumes. All derivatives are supplied analytically.
///
/// Immutable after construction; safe to share between threads.
struct SdeModel {
  using VectorField = std::function<Vector(double, const Vector&)>;
  using MatrixField = std::function<Matrix(double, const Vector&)>;
  using ScalarField = std::function<double(double, const Vector&)>;

  std::string name;
  int dim = 0;
  int noise_dim = 0;

  VectorField drift;
  MatrixField diffusion;
  /// Sigma = sigma * sigma^T.
  MatrixField sigma_sq;
  /// i-th entry: sum_j d Sigma^{ij} / d x^j.
  VectorField sigma_sq_div;
  /// sum_{i,j} d^2 Sigma^{ij} / d x^i d x^j.
  ScalarField sigma_sq_hess_trace;
  /// sum_i d f^i / d x^i.
  ScalarField drift_div;

  bool time_homogeneous = true;

  /// Set when sigma is a constant multiple of the identity; lets hot loops
  /// skip the matrix products.
  std::optional<double> scalar_diffusion;
};

/// Ornstein-Uhlenbeck process dX = -theta X dt + sigma dW in `dim` dimensions.
[[nodiscard]] SdeModel make_ou(double theta, double sigma, int dim);

/// Scaled Brownian motion dX = sigma dW in `dim` dimensions.
[[nodiscard]] SdeModel make_brownian(double sigma, int dim);

/// Two-dimensional cell differentiation model
///   f_i = x_i^4 / (2^-4 + x_i^4) + 2^-4 / (2^-4 + x_j^4) - x_i,  j != i,
/// with diffusion sigma * I. Each coordinate has its own noise channel.
[[nodiscard]] SdeModel make_cell_model(double sigma);

/// Optional parameters for registry construction. Unset fields take the
/// registry defaults of the named model.
struct ModelParams {
  std::optional<double> theta;
  std::optional<double> sigma;
  std::optional<int> dim;
};

struct ModelSpec {
  std::string name;
  ModelParams params;
};

/// Named catalog of the built-in models: "ou" (theta=1, sigma=1, dim=1),
/// "brownian" (sigma=1, dim=1), "cell" (sigma=0.1, dim fixed at 2).
class ModelRegistry {
 public:
  using Factory = std::function<SdeModel(const ModelParams&)>;

  /// Registry preloaded with the built-in models.
  [[nodiscard]] static const ModelRegistry& builtin();

  void add(std::string name, Factory factory);
  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] std::vector<std::string> names() const;

  /// Throws UnknownModel for names not in the registry.
  [[nodiscard]] SdeModel make(const std::string& name, const ModelParams& params = {}) const;
  [[nodiscard]] SdeModel make(const ModelSpec& spec) const { return make(spec.name, spec.params); }

 private:
  std::map<std::string, Factory, std::less<>> factories_;
};

}  // namespace bridgeforge
