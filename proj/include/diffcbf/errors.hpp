#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace diffcbf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shape, pose, chain or configuration value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Requested derivative order or method is not defined for the shape class.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// The linearized KKT system is (numerically) singular.
class SingularKktError : public Error {
 public:
  SingularKktError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// No control satisfies the stacked constraint rows.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::vector<double> margins)
      : Error(what), margins_(std::move(margins)) {}
  /// a_i^T u - b_i evaluated at the least-violating point found.
  const std::vector<double>& margins() const { return margins_; }

 private:
  std::vector<double> margins_;
};

}  // namespace diffcbf
