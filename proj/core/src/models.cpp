#include "bridgeforge/models.hpp"

#include <cmath>
#include <utility>

#include "bridgeforge/errors.hpp"

namespace bridgeforge {

namespace {

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidArgument(std::string(what) + " must be a positive finite number");
  }
}

void require_dim(int dim) {
  if (dim < 1) throw InvalidArgument("dim must be at least 1");
}

// Fills in the diffusion fields for sigma * I, which has vanishing derivatives.
void set_scalar_diffusion(SdeModel& model, double sigma) {
  const int d = model.dim;
  model.noise_dim = d;
  model.scalar_diffusion = sigma;
  model.diffusion = [sigma, d](double, const Vector&) -> Matrix {
    return sigma * Matrix::Identity(d, d);
  };
  const double variance = sigma * sigma;
  model.sigma_sq = [variance, d](double, const Vector&) -> Matrix {
    return variance * Matrix::Identity(d, d);
  };
  model.sigma_sq_div = [d](double, const Vector&) -> Vector { return Vector::Zero(d); };
  model.sigma_sq_hess_trace = [](double, const Vector&) { return 0.0; };
}

constexpr double kCellScale = 1.0 / 16.0;  // 2^-4

}  // namespace

SdeModel make_ou(double theta, double sigma, int dim) {
  require_positive(theta, "theta");
  require_positive(sigma, "sigma");
  require_dim(dim);

  SdeModel model;
  model.name = "ou";
  model.dim = dim;
  model.drift = [theta](double, const Vector& x) -> Vector { return -theta * x; };
  model.drift_div = [theta, dim](double, const Vector&) { return -theta * dim; };
  set_scalar_diffusion(model, sigma);
  return model;
}

SdeModel make_brownian(double sigma, int dim) {
  require_positive(sigma, "sigma");
  require_dim(dim);

  SdeModel model;
  model.name = "brownian";
  model.dim = dim;
  model.drift = [dim](double, const Vector&) -> Vector { return Vector::Zero(dim); };
  model.drift_div = [](double, const Vector&) { return 0.0; };
  set_scalar_diffusion(model, sigma);
  return model;
}

SdeModel make_cell_model(double sigma) {
  require_positive(sigma, "sigma");

  SdeModel model;
  model.name = "cell";
  model.dim = 2;
  model.drift = [](double, const Vector& x) -> Vector {
    const double p0 = std::pow(x[0], 4);
    const double p1 = std::pow(x[1], 4);
    Vector out(2);
    out[0] = p0 / (kCellScale + p0) + kCellScale / (kCellScale + p1) - x[0];
    out[1] = p1 / (kCellScale + p1) + kCellScale / (kCellScale + p0) - x[1];
    return out;
  };
  // d/dx [x^4 / (a + x^4)] = 4 a x^3 / (a + x^4)^2; the cross term does not
  // depend on the diagonal coordinate.
  model.drift_div = [](double, const Vector& x) {
    double div = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double denom = kCellScale + std::pow(x[i], 4);
      div += 4.0 * kCellScale * std::pow(x[i], 3) / (denom * denom) - 1.0;
    }
    return div;
  };
  set_scalar_diffusion(model, sigma);
  return model;
}

const ModelRegistry& ModelRegistry::builtin() {
  static const ModelRegistry registry = [] {
    ModelRegistry r;
    r.add("ou", [](const ModelParams& p) {
      return make_ou(p.theta.value_or(1.0), p.sigma.value_or(1.0), p.dim.value_or(1));
    });
    r.add("brownian", [](const ModelParams& p) {
      if (p.theta) throw InvalidArgument("model 'brownian' takes no theta parameter");
      return make_brownian(p.sigma.value_or(1.0), p.dim.value_or(1));
    });
    r.add("cell", [](const ModelParams& p) {
      if (p.theta) throw InvalidArgument("model 'cell' takes no theta parameter");
      if (p.dim && *p.dim != 2) throw InvalidArgument("model 'cell' has fixed dimension 2");
      return make_cell_model(p.sigma.value_or(0.1));
    });
    return r;
  }();
  return registry;
}

void ModelRegistry::add(std::string name, Factory factory) {
  factories_.insert_or_assign(std::move(name), std::move(factory));
}

bool ModelRegistry::contains(const std::string& name) const { return factories_.contains(name); }

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(factories_.size());
  for (const auto& [name, factory] : factories_) out.push_back(name);
  return out;
}

SdeModel ModelRegistry::make(const std::string& name, const ModelParams& params) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw UnknownModel(name);
  return it->second(params);
}

}  // namespace bridgeforge
