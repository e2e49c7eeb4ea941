#pragma once

// Classical system/observation models in Ito form:
//
//   dx = A(x,t) dt + B(x,t) dW,   <dW dW^T> = Q dt
//   dy = C(x,t) dt + dV,          <dV dV^T> = R dt,  <dW dV^T> = S dt
//
// plus the decorrelated form used by the grid recursions and the
// Euler-Maruyama simulator that produces measurement records.

#include "tsmooth/common.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace tsmooth {

using StateFn = std::function<Vec(const Vec& x, double t)>;
using StateMatFn = std::function<Mat(const Vec& x, double t)>;
using TimeMatFn = std::function<Mat(double t)>;

/// Present when A = J x, C = K x and B does not depend on x.
struct LinearTags {
  TimeMatFn J;
  TimeMatFn K;
};

struct StateSpaceModel {
  int dim_x = 0;
  int dim_y = 0;
  int dim_w = 0;
  StateFn drift;           // A
  StateMatFn diffusion;    // B, dim_x x dim_w
  StateFn observation;     // C
  TimeMatFn Q;             // dim_w x dim_w
  TimeMatFn R;             // dim_y x dim_y
  TimeMatFn S;             // dim_w x dim_y
  std::optional<LinearTags> linear;
  // Q, R, S, A, B, C carry no explicit time dependence.
  bool time_invariant = false;

  /// Checks the model invariants at time t; throws InvalidModel.
  void validate(double t = 0.0) const;

  bool is_linear() const { return linear.has_value(); }

  /// Constant-matrix linear model.
  static StateSpaceModel linear_time_invariant(const Mat& J, const Mat& B, const Mat& K,
                                               const Mat& Q, const Mat& R, const Mat& S);

  /// Linear model with time-dependent matrices; B(t) is state independent.
  static StateSpaceModel linear_time_varying(TimeMatFn J, TimeMatFn B, TimeMatFn K,
                                             TimeMatFn Q, TimeMatFn R, TimeMatFn S,
                                             int dim_x, int dim_w, int dim_y);
};

/// Time-indexed observation increments; truth is optional.
struct MeasurementRecord {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Vec> increments;
  std::vector<Vec> truth;

  std::size_t steps() const { return increments.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double horizon() const { return time(steps()); }
  bool has_truth() const { return !truth.empty(); }

  /// dt > 0 and truth.size() == increments.size() + 1 when truth is present.
  void validate() const;

  /// Same increments in reverse order (truth reversed as well).
  MeasurementRecord reversed() const;
};

/// Options for building transition kernels from a decorrelated model.
struct KernelOptions {
  bool regularize = true;
  // Jitter added to a singular B Q_eff B^T dt, relative to its mean diagonal.
  double jitter_rel = 1e-12;
};

/// Mean and covariance of P(x_{t+dt} | x_t, dy_t).
struct TransitionParams {
  Vec mean;
  Mat cov;
  bool regularized = false;
};

/// The model rewritten so that system and observation noises are independent:
///   dx = A dt + D (dy - C dt) + B dU,  <dU dU^T> = (Q - S R^-1 S^T) dt,
/// with D = B S R^-1.
class DecorrelatedModel {
 public:
  explicit DecorrelatedModel(StateSpaceModel base);

  const StateSpaceModel& base() const { return base_; }
  int dim_x() const { return base_.dim_x; }

  Mat gain(const Vec& x, double t) const;  // D
  Mat q_eff(double t) const;               // Q - S R^-1 S^T
  /// True when S vanishes at t, i.e. the kernel does not depend on dy.
  bool uncorrelated(double t) const;

  TransitionParams transition(const Vec& x_from, const Vec& dy, double t, double dt,
                              const KernelOptions& opts = {}) const;

 private:
  StateSpaceModel base_;
};

DecorrelatedModel decorrelate(const StateSpaceModel& model);

/// Gaussian density of x_to under P(x_{t+dt} | x_from, dy).
double transition_density(const DecorrelatedModel& dmodel, const Vec& x_from, const Vec& x_to,
                          const Vec& dy, double t, double dt, const KernelOptions& opts = {});

/// Gaussian density of dy with mean C(x,t) dt and covariance R dt.
double observation_likelihood(const StateSpaceModel& model, const Vec& x, const Vec& dy, double t,
                              double dt);
double observation_log_likelihood(const StateSpaceModel& model, const Vec& x, const Vec& dy,
                                  double t, double dt);

/// log N(x; mean, cov); cov must be positive definite.
double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& cov);

using PriorSampler = std::function<Vec(std::mt19937_64&)>;

/// Draws jointly Gaussian (dW, dV) with covariance [[Q, S], [S^T, R]] dt.
class NoiseSampler {
 public:
  NoiseSampler(const Mat& Q, const Mat& R, const Mat& S, double dt);
  void draw(std::mt19937_64& rng, Vec& dW, Vec& dV);

 private:
  Mat factor_;
  int dim_w_;
  std::normal_distribution<double> normal_;
};

/// Euler-Maruyama trajectory and record; deterministic given the seed.
MeasurementRecord simulate(const StateSpaceModel& model, const PriorSampler& prior, double dt,
                           double horizon, std::uint64_t seed, double t0 = 0.0);

/// Number of steps of size dt in horizon; throws if horizon is not a multiple of dt.
std::size_t step_count(double horizon, double dt);

/// Eigenvalue floor used for PSD checks: -tol * max(1, |largest eigenvalue|).
bool is_psd(const Mat& m, double tol = 1e-10);

}  // namespace tsmooth
