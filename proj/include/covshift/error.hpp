#pragma once

#include <stdexcept>
#include <string>

namespace covshift {

/// Broad failure categories; the CLI maps them to exit codes.
enum class ErrorKind {
  Usage,
  Data,
  Numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error data_error(const std::string& what) { return Error(ErrorKind::Data, what); }
inline Error usage_error(const std::string& what) { return Error(ErrorKind::Usage, what); }
inline Error numerical_error(const std::string& what) {
  return Error(ErrorKind::Numerical, what);
}

/// Raised by the graphical-lasso solver when it runs out of sweeps.
class ConvergenceError : public Error {
 public:
  ConvergenceError(int iterations, double residual, const std::string& what)
      : Error(ErrorKind::Numerical, what), iterations_(iterations), residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

}  // namespace covshift
