#include "config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bridgeforge/errors.hpp"
#include "json_locations.hpp"

namespace bridgeforge::cli {

namespace {

using json = nlohmann::json;

// Walks the parsed document, collecting every problem with its line before
// giving up, so one run reports all typos at once.
class Reader {
 public:
  Reader(const JsonLocations& locations, std::string source)
      : locations_(locations), source_(std::move(source)) {}

  void error(const std::string& pointer, const std::string& message) {
    const std::size_t line = locations_.line(pointer);
    std::ostringstream os;
    os << source_ << ':';
    if (line > 0) os << line << ':';
    os << ' ' << (pointer.empty() ? std::string("<root>") : pointer) << ": " << message;
    errors_.push_back(os.str());
  }

  void finish() const {
    if (errors_.empty()) return;
    std::string all;
    for (const auto& e : errors_) all += e + '\n';
    all.pop_back();
    throw ConfigError(all);
  }

  /// Checks that `node` is an object and has only `allowed` keys.
  bool object(const json& node, const std::string& pointer, std::initializer_list<std::string_view> allowed) {
    if (!node.is_object()) {
      error(pointer, "expected an object");
      return false;
    }
    const std::set<std::string_view> keys(allowed);
    for (const auto& [key, value] : node.items()) {
      if (!keys.contains(key)) {
        std::string hint;
        for (const auto k : allowed) hint += (hint.empty() ? "" : ", ") + std::string(k);
        error(pointer + "/" + key, "unknown key '" + key + "' (allowed: " + hint + ")");
      }
    }
    return true;
  }

  const json* child(const json& node, std::string_view key) const {
    const auto it = node.find(key);
    return it == node.end() ? nullptr : &*it;
  }

  double number(const json& node, const std::string& pointer, std::string_view key, double fallback,
                bool positive = false) {
    const json* v = child(node, key);
    if (v == nullptr) return fallback;
    const std::string p = pointer + "/" + std::string(key);
    if (!v->is_number()) {
      error(p, "expected a number");
      return fallback;
    }
    const double x = v->get<double>();
    if (!std::isfinite(x)) {
      error(p, "must be finite");
      return fallback;
    }
    if (positive && !(x > 0.0)) {
      error(p, "must be positive");
      return fallback;
    }
    return x;
  }

  std::optional<double> optional_number(const json& node, const std::string& pointer, std::string_view key,
                                        bool positive = false) {
    if (child(node, key) == nullptr) return std::nullopt;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double x = number(node, pointer, key, nan, positive);
    if (std::isnan(x)) return std::nullopt;
    return x;
  }

  std::int64_t integer(const json& node, const std::string& pointer, std::string_view key, std::int64_t fallback,
                       std::int64_t min_value) {
    const json* v = child(node, key);
    if (v == nullptr) return fallback;
    const std::string p = pointer + "/" + std::string(key);
    if (!v->is_number_integer()) {
      error(p, "expected an integer");
      return fallback;
    }
    if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      error(p, "integer out of range");
      return fallback;
    }
    const auto x = v->get<std::int64_t>();
    if (x < min_value) {
      error(p, "must be at least " + std::to_string(min_value));
      return fallback;
    }
    return x;
  }

  std::string choice(const json& node, const std::string& pointer, std::string_view key, std::string fallback,
                     std::initializer_list<std::string_view> options) {
    const json* v = child(node, key);
    if (v == nullptr) return fallback;
    const std::string p = pointer + "/" + std::string(key);
    if (!v->is_string()) {
      error(p, "expected a string");
      return fallback;
    }
    const auto s = v->get<std::string>();
    for (const auto o : options) {
      if (s == o) return s;
    }
    std::string hint;
    for (const auto o : options) hint += (hint.empty() ? "" : ", ") + std::string(o);
    error(p, "unknown value '" + s + "' (expected one of: " + hint + ")");
    return fallback;
  }

  std::optional<Vector> vector(const json& v, const std::string& p) {
    if (!v.is_array() || v.empty()) {
      error(p, "expected a non-empty array of numbers");
      return std::nullopt;
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        error(p + "/" + std::to_string(i), "expected a finite number");
        return std::nullopt;
      }
      out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
  }

  std::optional<Vector> vector(const json& node, const std::string& pointer, std::string_view key) {
    const json* v = child(node, key);
    if (v == nullptr) return std::nullopt;
    return vector(*v, pointer + "/" + std::string(key));
  }

 private:
  const JsonLocations& locations_;
  std::string source_;
  std::vector<std::string> errors_;
};

// Returns false when no model can be built, since later blocks need its dimension.
bool read_model(Reader& r, const json& root, RunConfig& cfg) {
  const json* node = r.child(root, "model");
  if (node == nullptr) {
    r.error("", "missing required key 'model'");
    return false;
  }
  if (!r.object(*node, "/model", {"name", "theta", "sigma", "dim"})) return false;
  const json* name = r.child(*node, "name");
  if (name == nullptr || !name->is_string()) {
    r.error("/model", "'name' is required and must be a string");
    return false;
  }
  cfg.model.name = name->get<std::string>();
  cfg.model.params.theta = r.optional_number(*node, "/model", "theta", true);
  cfg.model.params.sigma = r.optional_number(*node, "/model", "sigma", true);
  if (r.child(*node, "dim") != nullptr) {
    cfg.model.params.dim = static_cast<int>(r.integer(*node, "/model", "dim", 1, 1));
  }
  const auto& registry = ModelRegistry::builtin();
  if (!registry.contains(cfg.model.name)) {
    std::string known;
    for (const auto& n : registry.names()) known += (known.empty() ? "" : ", ") + n;
    r.error("/model/name", "unknown model '" + cfg.model.name + "' (known: " + known + ")");
    return false;
  }
  try {
    (void)registry.make(cfg.model);
  } catch (const InvalidArgument& e) {
    r.error("/model", e.what());
    return false;
  }
  return true;
}

void read_grid(Reader& r, const json& root, RunConfig& cfg) {
  const json* node = r.child(root, "grid");
  if (node == nullptr || !r.object(*node, "/grid", {"T", "L"})) return;
  cfg.T = r.number(*node, "/grid", "T", cfg.T, true);
  cfg.steps = static_cast<int>(r.integer(*node, "/grid", "L", cfg.steps, 2));
}

void read_endpoint(Reader& r, const json& root, RunConfig& cfg, int model_dim) {
  const json* node = r.child(root, "endpoint");
  if (node == nullptr) {
    r.error("", "missing required key 'endpoint'");
    return;
  }
  if (!r.object(*node, "/endpoint", {"type", "y", "radius", "lo", "hi"})) return;
  const auto type = r.choice(*node, "/endpoint", "type", "fixed", {"fixed", "circle", "box"});
  auto& ep = cfg.endpoint;
  auto forbid = [&](std::initializer_list<std::string_view> keys) {
    for (const auto k : keys) {
      if (r.child(*node, k) != nullptr) {
        r.error("/endpoint/" + std::string(k), "not used by endpoint type '" + type + "'");
      }
    }
  };
  if (type == "fixed") {
    ep.kind = EndpointConfig::Kind::fixed;
    forbid({"radius", "lo", "hi"});
    const auto y = r.vector(*node, "/endpoint", "y");
    if (!y) {
      if (r.child(*node, "y") == nullptr) r.error("/endpoint", "fixed endpoint requires 'y'");
      ep.y = Vector::Zero(model_dim);
    } else {
      ep.y = *y;
      if (y->size() != model_dim) {
        r.error("/endpoint/y", "has " + std::to_string(y->size()) + " entries but the model dimension is " +
                                   std::to_string(model_dim));
      }
    }
  } else if (type == "circle") {
    ep.kind = EndpointConfig::Kind::circle;
    forbid({"y", "lo", "hi"});
    ep.radius = r.number(*node, "/endpoint", "radius", ep.radius, true);
    if (model_dim != 2) r.error("/endpoint/type", "circle endpoints need a 2-dimensional model");
  } else {
    ep.kind = EndpointConfig::Kind::box;
    forbid({"y", "radius"});
    ep.lo = r.number(*node, "/endpoint", "lo", ep.lo);
    ep.hi = r.number(*node, "/endpoint", "hi", ep.hi);
    if (!(ep.lo < ep.hi)) r.error("/endpoint", "box endpoint requires lo < hi");
  }
}

void read_training(Reader& r, const json& root, RunConfig& cfg) {
  auto& t = cfg.training;
  const json* node = r.child(root, "training");
  if (node == nullptr) return;
  const std::string p = "/training";
  if (!r.object(*node, p, {"batch_size", "iterations", "learning_rate", "beta1", "beta2", "epsilon", "weighting",
                           "metric", "time_features", "hidden", "output_scale"})) {
    return;
  }
  t.batch_size = static_cast<std::size_t>(r.integer(*node, p, "batch_size", static_cast<std::int64_t>(t.batch_size), 1));
  t.iterations = static_cast<int>(r.integer(*node, p, "iterations", t.iterations, 0));
  t.optimizer.learning_rate = r.number(*node, p, "learning_rate", t.optimizer.learning_rate, true);
  t.optimizer.beta1 = r.number(*node, p, "beta1", t.optimizer.beta1);
  t.optimizer.beta2 = r.number(*node, p, "beta2", t.optimizer.beta2);
  t.optimizer.epsilon = r.number(*node, p, "epsilon", t.optimizer.epsilon, true);
  for (const auto& [key, value] : {std::pair{"beta1", t.optimizer.beta1}, std::pair{"beta2", t.optimizer.beta2}}) {
    if (!(value >= 0.0 && value < 1.0)) r.error(p + "/" + key, "must lie in [0, 1)");
  }
  t.weight_mode = r.choice(*node, p, "weighting", "normalized", {"normalized", "raw"}) == "raw" ? WeightMode::raw
                                                                                                 : WeightMode::normalized;
  t.metric = r.choice(*node, p, "metric", "identity", {"identity", "sigma_sq"}) == "sigma_sq"
                 ? MetricWeighting::sigma_sq
                 : MetricWeighting::plain;
  t.time_features = static_cast<int>(r.integer(*node, p, "time_features", t.time_features, 0));
  t.output_scale = r.number(*node, p, "output_scale", t.output_scale, true);
  if (const json* hidden = r.child(*node, "hidden")) {
    if (!hidden->is_array()) {
      r.error(p + "/hidden", "expected an array of layer widths");
    } else {
      t.hidden.clear();
      for (std::size_t i = 0; i < hidden->size(); ++i) {
        const auto& w = (*hidden)[i];
        if (!w.is_number_integer() || w.get<std::int64_t>() < 1) {
          r.error(p + "/hidden/" + std::to_string(i), "layer width must be a positive integer");
        } else {
          t.hidden.push_back(static_cast<int>(w.get<std::int64_t>()));
        }
      }
    }
  }
}

void read_sampling(Reader& r, const json& root, RunConfig& cfg, int model_dim) {
  auto& s = cfg.sampling;
  const json* node = r.child(root, "sampling");
  if (node == nullptr) return;
  const std::string p = "/sampling";
  if (!r.object(*node, p, {"x0", "x0_circle", "paths_per_start", "endpoint_handling", "y"})) return;
  if (const json* x0 = r.child(*node, "x0")) {
    if (!x0->is_array()) {
      r.error(p + "/x0", "expected an array of start points");
    } else {
      for (std::size_t i = 0; i < x0->size(); ++i) {
        const std::string q = p + "/x0/" + std::to_string(i);
        if (const auto v = r.vector((*x0)[i], q)) {
          if (v->size() != model_dim) r.error(q, "start point dimension differs from the model dimension");
          s.x0.push_back(*v);
        }
      }
    }
  }
  if (const json* ring = r.child(*node, "x0_circle")) {
    const std::string q = p + "/x0_circle";
    if (r.object(*ring, q, {"radius", "count"})) {
      StartRing start_ring;
      start_ring.radius = r.number(*ring, q, "radius", 1.0, true);
      start_ring.count = static_cast<int>(r.integer(*ring, q, "count", 1, 1));
      if (r.child(*ring, "radius") == nullptr || r.child(*ring, "count") == nullptr) {
        r.error(q, "requires both 'radius' and 'count'");
      }
      if (model_dim != 2) r.error(q, "circle start points need a 2-dimensional model");
      s.x0_circle = start_ring;
    }
  }
  s.paths_per_start = static_cast<std::size_t>(r.integer(*node, p, "paths_per_start", static_cast<std::int64_t>(s.paths_per_start), 1));
  s.endpoint_handling = r.choice(*node, p, "endpoint_handling", "free", {"free", "pin"}) == "pin"
                            ? EndpointHandling::pin
                            : EndpointHandling::free;
  if (s.endpoint_handling == EndpointHandling::pin && cfg.endpoint.kind != EndpointConfig::Kind::fixed) {
    r.error(p + "/endpoint_handling", "pin needs a fixed endpoint");
  }
  s.y = r.vector(*node, p, "y");
  if (s.y && s.y->size() != model_dim) r.error(p + "/y", "dimension differs from the model dimension");
}

void read_evaluation(Reader& r, const json& root, RunConfig& cfg, int model_dim) {
  auto& e = cfg.evaluation;
  const bool fixed = cfg.endpoint.kind == EndpointConfig::Kind::fixed;
  e.score_mse = cfg.has_exact_score() && fixed;
  e.endpoint_stats = cfg.endpoint.kind != EndpointConfig::Kind::box;
  const json* node = r.child(root, "evaluation");
  if (node == nullptr) return;
  const std::string p = "/evaluation";
  if (!r.object(*node, p, {"metrics", "x0", "n_paths", "t_cutoff", "hit_radius"})) return;
  if (const json* metrics = r.child(*node, "metrics")) {
    if (!metrics->is_array()) {
      r.error(p + "/metrics", "expected an array of metric names");
    } else {
      e.score_mse = false;
      e.endpoint_stats = false;
      for (std::size_t i = 0; i < metrics->size(); ++i) {
        const std::string q = p + "/metrics/" + std::to_string(i);
        const auto& m = (*metrics)[i];
        if (m == "score_mse") {
          if (!cfg.has_exact_score()) {
            r.error(q, "score_mse needs a closed-form score; model '" + cfg.model.name + "' has none");
          } else if (!fixed) {
            r.error(q, "score_mse needs a fixed endpoint");
          } else {
            e.score_mse = true;
          }
        } else if (m == "endpoint") {
          if (cfg.endpoint.kind == EndpointConfig::Kind::box) {
            r.error(q, "endpoint statistics are not defined for box endpoints");
          } else {
            e.endpoint_stats = true;
          }
        } else {
          r.error(q, "unknown metric (expected score_mse or endpoint)");
        }
      }
    }
  }
  e.x0 = r.vector(*node, p, "x0");
  if (e.x0 && e.x0->size() != model_dim) r.error(p + "/x0", "dimension differs from the model dimension");
  e.n_paths = static_cast<std::size_t>(r.integer(*node, p, "n_paths", static_cast<std::int64_t>(e.n_paths), 1));
  e.t_cutoff = r.optional_number(*node, p, "t_cutoff", true);
  if (e.t_cutoff && !(*e.t_cutoff < cfg.T)) r.error(p + "/t_cutoff", "must be below T");
  e.hit_radius = r.number(*node, p, "hit_radius", e.hit_radius, true);
}

void read_adjoint_check(Reader& r, const json& root, RunConfig& cfg) {
  auto& a = cfg.adjoint_check;
  const json* node = r.child(root, "adjoint_check");
  if (node == nullptr) return;
  const std::string p = "/adjoint_check";
  if (!r.object(*node, p, {"n_paths", "L", "z_threshold"})) return;
  a.n_paths = static_cast<std::size_t>(r.integer(*node, p, "n_paths", static_cast<std::int64_t>(a.n_paths), 2));
  a.steps = static_cast<int>(r.integer(*node, p, "L", a.steps, 1));
  a.z_threshold = r.number(*node, p, "z_threshold", a.z_threshold, true);
}

}  // namespace

std::vector<Vector> SamplingConfig::starts() const {
  std::vector<Vector> out = x0;
  if (x0_circle) {
    for (int k = 0; k < x0_circle->count; ++k) {
      const double angle = 2.0 * std::numbers::pi * k / x0_circle->count;
      Vector v(2);
      v << x0_circle->radius * std::cos(angle), x0_circle->radius * std::sin(angle);
      out.push_back(v);
    }
  }
  return out;
}

bool RunConfig::has_exact_score() const { return model.name == "ou" || model.name == "brownian"; }

SdeModel RunConfig::build_model() const { return ModelRegistry::builtin().make(model); }

EndpointSpec RunConfig::endpoint_spec() const {
  switch (endpoint.kind) {
    case EndpointConfig::Kind::fixed:
      return FixedEndpoint{endpoint.y};
    case EndpointConfig::Kind::circle:
      return uniform_on_circle(endpoint.radius);
    case EndpointConfig::Kind::box:
      break;
  }
  return MultiFixedEndpoint{endpoint.lo, endpoint.hi, build_model().dim};
}

TrainConfig RunConfig::train_config(int workers) const {
  TrainConfig t = training;
  t.model = model;
  t.T = T;
  t.steps = steps;
  t.seed = seed;
  t.endpoint = endpoint_spec();
  t.workers = workers;
  return t;
}

RunConfig parse_run_config(std::string_view text, const std::string& source_name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = e.byte == 0 ? 0 : e.byte - 1;
    std::string message = e.what();
    if (const auto pos = message.find("parse error"); pos != std::string::npos) message = message.substr(pos);
    throw ConfigError(source_name + ":" + std::to_string(line_of_offset(text, offset)) + ": " + message);
  }

  const auto locations = JsonLocations::scan(text);
  Reader r(locations, source_name);
  RunConfig cfg;
  if (!r.object(root, "", {"seed", "output_dir", "model", "grid", "endpoint", "training", "sampling", "evaluation",
                           "adjoint_check"})) {
    r.finish();
  }
  if (const json* seed = r.child(root, "seed")) {
    if (!seed->is_number_unsigned()) {
      r.error("/seed", "expected a non-negative integer");
    } else {
      cfg.seed = seed->get<std::uint64_t>();
    }
  }
  if (const json* out = r.child(root, "output_dir")) {
    if (!out->is_string() || out->get<std::string>().empty()) {
      r.error("/output_dir", "expected a non-empty path string");
    } else {
      cfg.output_dir = out->get<std::string>();
    }
  }
  if (!read_model(r, root, cfg)) {
    r.finish();
  }
  const int dim = cfg.build_model().dim;
  read_grid(r, root, cfg);
  read_endpoint(r, root, cfg, dim);
  read_training(r, root, cfg);
  read_sampling(r, root, cfg, dim);
  read_evaluation(r, root, cfg, dim);
  read_adjoint_check(r, root, cfg);
  r.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

}  // namespace bridgeforge::cli
