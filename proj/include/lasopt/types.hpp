#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace lasopt {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Raised when a configuration document fails validation. `field` names the
// offending entry so the CLI can report it verbatim.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error("config error: field '" + field + "': " + message),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Raised when a linear solve fails to converge. Carries the final residual.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what + " (relative residual " +
                           std::to_string(residual) + " after " +
                           std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

}  // namespace lasopt
