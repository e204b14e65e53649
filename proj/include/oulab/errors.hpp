#ifndef OULAB_ERRORS_HPP
#define OULAB_ERRORS_HPP

#include <stdexcept>
#include <cstdio>
#include <string>

namespace oulab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: malformed triplet, bad grid, inconsistent config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A theorem hypothesis or operation precondition does not hold; the
/// operation refuses rather than returning a meaningless number.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (quadrature that did not reach tolerance, cf that does
/// not decay before the cutoff, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public NumericalError {
 public:
  QuadratureError(const std::string& what, double achieved)
      : NumericalError(what + " (achieved error estimate " + format(achieved) + ")"),
        achieved_(achieved) {}

  double achieved_tolerance() const noexcept { return achieved_; }

 private:
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }

  double achieved_;
};

}  // namespace oulab

#endif
