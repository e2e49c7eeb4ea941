#pragma once

// Homodyne phase-locked loop for a displaced squeezed beam.
//
// The OPO quadratures (q, p) and the phase process x (phi = x_1) form an
// augmented classical state z = (q, p, x). The quadrature noises are written
// in a basis rotated by theta = phi - phi', so the observation noise is the
// first rotated component and the cross-covariance S is constant:
//
//   dq = (chi - gamma/2) q dt + sqrt(gamma/2) (sin th du + cos th dv)
//   dp = (-chi - gamma/2) p dt + sqrt(gamma/2) (cos th du - sin th dv)
//   dy = [2b sin th + sqrt(2 gamma)(q sin th + p cos th)] dt - du
//
// which is the same law as the unrotated vacuum increments (da, db).

#include "tsmooth/gaussian.hpp"
#include "tsmooth/grid.hpp"
#include "tsmooth/grid_smoother.hpp"
#include "tsmooth/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsmooth::pll {

/// Linear-Gaussian phase process dx = J x dt + B dW, Cov dW = Q dt.
struct PhaseModel {
  Mat J;
  Mat B;
  Mat Q;

  int dim() const { return static_cast<int>(J.rows()); }
  void validate() const;

  static PhaseModel wiener(double q);
  static PhaseModel ornstein_uhlenbeck(double rate, double q);
};

enum class Estimator { linearized_kalman, grid };

struct PLLConfig {
  double b = 10.0;
  double gamma = 1e3;
  double chi = 0.0;
  PhaseModel phase = PhaseModel::wiener(1.0);
  Vec phase_mean = Vec::Zero(1);
  Mat phase_cov = Mat::Zero(1, 1);
  double dt = 1e-5;
  std::size_t steps = 10000;
  std::uint64_t seed = 1;
  Estimator estimator = Estimator::linearized_kalman;
  /// max |phi - phi'| above which the linearization is flagged.
  double residual_threshold = 0.5;
  /// Phase grid for the grid estimator, one axis per phase dimension.
  std::vector<grid::Axis> phase_grid;
  kernels::Exec exec = kernels::Exec::parallel;

  /// gamma > 0, |chi| < gamma/2, b >= 0, consistent dimensions; throws InvalidModel.
  void validate() const;
  int dim() const { return 2 + phase.dim(); }
};

/// Stationary quadrature variances gamma / (4 (gamma/2 -+ chi)).
double stationary_var_q(const PLLConfig& cfg);
double stationary_var_p(const PLLConfig& cfg);

/// Full augmented model with the exact trigonometric observation; lo(t) is
/// the local-oscillator phase schedule.
StateSpaceModel build_equivalent_model(const PLLConfig& cfg, std::function<double(double)> lo);

/// Model linearized at phi = phi': sin th -> th, cos th -> 1. Its increments
/// are dy + 2b phi' dt.
StateSpaceModel linearized_model(const PLLConfig& cfg);

/// Initial belief over z: stationary quadratures and the phase prior.
gauss::GaussianBelief augmented_prior(const PLLConfig& cfg);

struct PLLRunResult {
  /// Raw increments dy_k; truth holds z_0 .. z_N.
  MeasurementRecord record;
  std::vector<double> truth_phase;   // phi_0 .. phi_N
  std::vector<double> lo_phase;      // phi'_0 .. phi'_{N-1}
  std::vector<double> filtered_mean; // t_0 .. t_N
  std::vector<double> filtered_var;
  std::vector<double> smoothed_mean;
  std::vector<double> smoothed_var;
  std::vector<double> innovations;
  /// Grid estimator only: filtered phase densities t_0 .. t_N.
  std::vector<grid::GridDensity> grid_filtered;
  double mse_filter = 0.0;
  double mse_smooth = 0.0;
  double residual_max = 0.0;
  std::vector<std::string> warnings;
  bool smoothed = false;
};

/// Simulates the truth while the filter steers phi' to its current phase mean.
PLLRunResult run_closed_loop(const PLLConfig& cfg);

/// Backward pass over the recorded loop and fusion with the filter.
void smooth_phase(const PLLConfig& cfg, PLLRunResult& run);

/// Both in one call.
PLLRunResult run(const PLLConfig& cfg);

struct QuadratureStats {
  double var_q = 0.0;
  double var_p = 0.0;
  double cov_qp = 0.0;
  std::size_t samples = 0;
};

/// Streams the quadrature part of the equivalent model for `steps` steps
/// from the stationary state.
QuadratureStats quadrature_statistics(const PLLConfig& cfg, std::size_t steps, std::uint64_t seed);

enum class SweepParam { b, chi, phase_noise, seed };

struct Sweep {
  SweepParam param = SweepParam::seed;
  /// Parameter values; phase_noise scales Q. Ignored for a seed-only sweep.
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
};

struct SweepRow {
  double param = 0.0;
  std::uint64_t seed = 0;
  double mse_filter = 0.0;
  double mse_smooth = 0.0;
  double resid_max = 0.0;
};

struct SweepSummary {
  double param = 0.0;
  std::size_t n = 0;
  double mse_filter_mean = 0.0;
  double mse_filter_se = 0.0;
  double mse_smooth_mean = 0.0;
  double mse_smooth_se = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;
};

/// Runs every (value, seed) pair; seeds execute concurrently.
SweepResult evaluate(const PLLConfig& cfg, const Sweep& sweep);

/// `param,seed,mse_filter,mse_smooth,resid_max`.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
/// `param,n,mse_filter_mean,mse_filter_se,mse_smooth_mean,mse_smooth_se`.
void write_summary_csv(std::ostream& os, const std::vector<SweepSummary>& summary);
/// `t,phi,phi_lo,filtered_mean,filtered_var,smoothed_mean,smoothed_var`.
void write_run_csv(std::ostream& os, const PLLRunResult& run);

}  // namespace tsmooth::pll
