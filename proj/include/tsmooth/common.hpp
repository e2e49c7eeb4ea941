#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsmooth {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model violates a structural invariant (non-PSD noise, singular R, ...).
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// Operation requires a capability the model does not have (e.g. linear tags).
class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

/// Transition covariance is singular and regularization is disabled.
class DegenerateKernel : public Error {
 public:
  using Error::Error;
};

/// Propagation produced non-finite values; carries the failing step index.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Both fused beliefs carry no usable information.
class IllPosed : public Error {
 public:
  using Error::Error;
};

/// Vanishing normalizer: zero overlap, zero post-selection probability, ...
class Degenerate : public Error {
 public:
  using Error::Error;
};

/// Grid density became identically zero.
class Collapse : public Error {
 public:
  using Error::Error;
};

/// Explicit stepping violates its stability bound.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Inputs that must agree (grids, timestamps, artifact sets) do not.
class Mismatch : public Error {
 public:
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace tsmooth
