#pragma once

#include <stdexcept>
#include <string>

namespace qlmpa {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite integrand value met during quadrature.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, std::size_t triangle)
      : Error(what + " (triangle " + std::to_string(triangle) + ")"), triangle_(triangle) {}
  std::size_t triangle() const { return triangle_; }

 private:
  std::size_t triangle_;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (relative residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Argument outside the range where a series evaluation is trusted.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// t -> T(t v) stayed positive up to the doubling cap.
class NoSignChangeError : public Error {
 public:
  using Error::Error;
};

/// No stepsize above the stall threshold satisfies the descent inequality.
class StalledStepError : public Error {
 public:
  using Error::Error;
};

}  // namespace qlmpa
