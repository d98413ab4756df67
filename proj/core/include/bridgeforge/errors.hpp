#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace bridgeforge {

/// Invalid argument or configuration supplied by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Lookup of a model name that is not in the registry.
class UnknownModel : public std::out_of_range {
 public:
  explicit UnknownModel(const std::string& name)
      : std::out_of_range("unknown model '" + name + "'"), name_(name) {}
  [[nodiscard]] const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// A simulation, loss evaluation, or optimizer step produced a non-finite or
/// exploding value. Carries the path and step index when known.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<std::size_t> path = std::nullopt,
                          std::optional<std::size_t> step = std::nullopt)
      : std::runtime_error(decorate(what, path, step)), path_(path), step_(step) {}

  [[nodiscard]] std::optional<std::size_t> path() const noexcept { return path_; }
  [[nodiscard]] std::optional<std::size_t> step() const noexcept { return step_; }

 private:
  static std::string decorate(const std::string& what, std::optional<std::size_t> path,
                              std::optional<std::size_t> step) {
    std::string out = what;
    if (path) out += " (path " + std::to_string(*path);
    if (step) out += (path ? ", step " : " (step ") + std::to_string(*step);
    if (path || step) out += ")";
    return out;
  }

  std::optional<std::size_t> path_;
  std::optional<std::size_t> step_;
};

}  // namespace bridgeforge
