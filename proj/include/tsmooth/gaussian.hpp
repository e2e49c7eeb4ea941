#pragma once

// Linear-Gaussian two-filter smoothing.
//
// The recursions are the exact conditioning steps for the Euler-Maruyama
// discretization of the linear model,
//
//   x_{k+1} = (I + J dt) x_k + B dW_k,   dy_k = K x_k dt + dV_k,
//
// which reduce to the continuous Kalman-Bucy/Riccati equations to first
// order in dt. The forward belief at t_k conditions on dy_0 .. dy_{k-1}; the
// backward likelihood at t_k covers dy_k .. dy_{N-1}.

#include "tsmooth/common.hpp"
#include "tsmooth/model.hpp"

#include <vector>

namespace tsmooth::gauss {

struct GaussianBelief {
  double t = 0.0;
  Vec mean;
  Mat cov;

  /// Symmetric and PSD with eigenvalues >= -1e-10 * scale.
  void validate() const;
};

/// Likelihood in information form: exp(-x^T L x / 2 + nu^T x).
struct InformationBelief {
  double t = 0.0;
  Mat info_matrix;
  Vec info_vector;

  static InformationBelief flat(double t, int dim);
  void validate() const;
};

/// One-step-at-a-time Kalman filter; the PLL closed loop drives it online.
class KalmanStepper {
 public:
  KalmanStepper(const StateSpaceModel& model, GaussianBelief prior, double dt);

  const GaussianBelief& belief() const { return belief_; }
  std::size_t step_index() const { return k_; }

  /// Conditions on dy_k and propagates to t_{k+1}; returns the innovation
  /// dy_k - K x' dt evaluated before the update.
  Vec step(const Vec& dy);

 private:
  const StateSpaceModel* model_;
  GaussianBelief belief_;
  double dt_;
  std::size_t k_ = 0;
};

struct KalmanRun {
  std::vector<GaussianBelief> beliefs;  // t_0 .. t_N
  std::vector<Vec> innovations;         // one per step
};

KalmanRun kalman_filter_run(const StateSpaceModel& model, const MeasurementRecord& record,
                            const GaussianBelief& prior);

std::vector<GaussianBelief> kalman_filter(const StateSpaceModel& model,
                                          const MeasurementRecord& record,
                                          const GaussianBelief& prior);

/// Backward information filter from the flat final condition at T.
std::vector<InformationBelief> backward_information_filter(const StateSpaceModel& model,
                                                           const MeasurementRecord& record);

/// Pi = (Sigma^-1 + Lambda)^-1, mean = Pi (Sigma^-1 x' + nu), evaluated as
/// (I + Sigma Lambda)^-1 [Sigma, x' + Sigma nu] so neither Sigma nor Lambda
/// is inverted.
GaussianBelief mfp_combine(const GaussianBelief& filtered, const InformationBelief& backward);

/// Fuses a backward likelihood with the a priori belief at the same time.
GaussianBelief retrodict_with_prior(const InformationBelief& backward,
                                    const GaussianBelief& prior);
/// Prior given in information form (Lambda = 0 is the flat prior).
GaussianBelief retrodict_with_prior(const InformationBelief& backward,
                                    const InformationBelief& prior);

std::vector<GaussianBelief> mfp_smooth(const std::vector<GaussianBelief>& filtered,
                                       const std::vector<InformationBelief>& backward);

/// Covariance-form (Rauch-Tung-Striebel) smoother from the same prior. It
/// stays finite when the backward information grows without bound, e.g. for a
/// state that the record determines exactly through an unstable map.
std::vector<GaussianBelief> rts_smooth(const StateSpaceModel& model, const MeasurementRecord& record,
                                       const GaussianBelief& prior);

struct SmoothingRun {
  std::vector<GaussianBelief> filtered;
  std::vector<InformationBelief> backward;
  std::vector<GaussianBelief> smoothed;
  std::vector<Vec> innovations;
};

SmoothingRun smooth(const StateSpaceModel& model, const MeasurementRecord& record,
                    const GaussianBelief& prior);

}  // namespace tsmooth::gauss
