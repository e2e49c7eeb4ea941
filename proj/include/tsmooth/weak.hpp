#pragma once

// Weak values and smoothing quasiprobabilities for a pre-selected operator f
// and a post-selected effect g on a truncated oscillator.
//
// Phase-space functions live on a 2D grid with axes (q, p), q = (a + a^dag)/sqrt(2).
// The Wigner transform is evaluated from its defining integral over the
// off-diagonal coordinate; W_f W_g integrates to tr[g f] / 2pi.

#include "tsmooth/grid.hpp"
#include "tsmooth/kernels/sparse_kernel.hpp"

#include <string>
#include <vector>

namespace tsmooth::weak {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

CVec fock_ket(int dim, int n);
/// Truncated coherent state, renormalized after truncation.
CVec coherent_ket(int dim, cplx alpha);
CMat projector(const CVec& ket);

struct PrePostPair {
  CMat f;
  CMat g;

  int dim() const { return static_cast<int>(f.rows()); }
  /// Square, equal dimensions, Hermitian to tol and PSD to tol * norm; throws InvalidModel.
  void validate(double tol = 1e-12) const;
};

/// tr[g O f] / tr[g f]; throws Degenerate when the denominator vanishes.
cplx weak_value(const PrePostPair& pair, const CMat& O);

enum class Role { f, g };

struct GaussianWignerState {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity() * 0.5;
  Role role = Role::f;

  void validate() const;
  double density(double q, double p) const;
};

/// Product of two Gaussian Wigner functions, renormalized: precisions add.
GaussianWignerState smoothing_quasiprob(const GaussianWignerState& f, const GaussianWignerState& g);

enum class Representation { position, momentum };

struct WignerOptions {
  /// Integrand weight exp(-damping u^2/8); zero gives the Wigner function,
  /// a positive value smooths it along the conjugate axis with variance damping/4.
  double damping = 0.0;
  /// Basis in which the off-diagonal integral runs. Both give the same
  /// Wigner function; damping blurs p (position) or q (momentum).
  Representation rep = Representation::position;
  /// Integration step; 0 picks one that resolves the truncated space on this grid.
  double step = 0.0;
  /// Warn when more than this fraction of |W| sits on the boundary or the
  /// grid integral misses tr[op] by more than this relative amount.
  double boundary_tol = 1e-6;
  kernels::Exec exec = kernels::Exec::parallel;
};

struct WignerGrid {
  grid::GridSpec grid;
  Vec values;
  double op_trace = 0.0;
  double boundary_fraction = 0.0;
  std::vector<std::string> warnings;

  double integral() const;
};

/// Checks a 2D (q, p) grid; throws InvalidModel otherwise.
void validate_phase_grid(const grid::GridSpec& grid);

/// Wigner function of a Hermitian operator. A multiple c of the identity is
/// taken as the untruncated identity and maps to the flat value c/(2pi).
WignerGrid wigner_transform(const CMat& op, const grid::GridSpec& grid, const WignerOptions& opts = {});

WignerGrid sample(const GaussianWignerState& s, const grid::GridSpec& grid);

struct Quasiprobability {
  grid::GridSpec grid;
  /// g f / int g f. Negative values are kept.
  Vec values;
  /// int g f over the grid.
  double overlap = 0.0;
  double min_value = 0.0;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
};

/// Pointwise product normalized on the grid; throws Mismatch for different
/// grids and Degenerate for a vanishing overlap.
Quasiprobability smoothing_quasiprob(const WignerGrid& f, const WignerGrid& g);

/// Moments of tabulated (possibly signed) unit-mass values on a 2D grid.
void phase_moments(const grid::GridSpec& grid, const Vec& values, Vec2& mean, Mat2& cov);

struct WeakMeasurementSetup {
  /// Inverse noise variances of the position and momentum readouts.
  double eps_q = 1.0;
  double eps_p = 1.0;
  /// Outcome grid over (y_q, y_p).
  grid::GridSpec y_grid;
  /// Phase-space grid over (q, p) for the quasiprobability.
  grid::GridSpec phase_grid;
  /// Largest allowed |P - blur(P~)| before a warning.
  double consistency_tol = 1e-6;
  kernels::Exec exec = kernels::Exec::parallel;

  void validate() const;
};

struct JointDensity {
  /// Sequential q-then-p readout density from the Gaussian Kraus operators.
  Vec P;
  /// Quasiprobability whose Gaussian blur is P.
  Vec P_tilde;
  /// P~ blurred with variances 1/eps_q, 1/eps_p onto the outcome grid.
  Vec blurred;
  grid::GridSpec y_grid;
  grid::GridSpec phase_grid;
  /// tr[D_p(g) D_q(f)] with D_q, D_p the dephasings of the two readouts; tends to tr[g f] as eps -> 0.
  double normalizer = 0.0;
  double mass = 0.0;
  double min_P = 0.0;
  double min_P_tilde = 0.0;
  /// max |P - blurred|.
  double consistency = 0.0;
  std::vector<std::string> warnings;
};

/// Readout density on the outcome grid only; throws Degenerate when its normalizer vanishes.
Vec kraus_density(const PrePostPair& pair, double eps_q, double eps_p, const grid::GridSpec& y_grid,
                  kernels::Exec exec = kernels::Exec::parallel);

/// P~ on the phase grid; tends to the smoothing quasiprobability as eps -> 0.
Vec blurred_quasiprob(const PrePostPair& pair, double eps_q, double eps_p, const grid::GridSpec& phase_grid,
                      kernels::Exec exec = kernels::Exec::parallel);

JointDensity weak_joint_density(const PrePostPair& pair, const WeakMeasurementSetup& setup);

/// Polynomial extrapolation of vals(eps) to eps = 0 through every point (Neville).
double extrapolate_to_zero(const std::vector<double>& eps, const std::vector<double>& vals);

struct WeakLimitReport {
  std::vector<double> eps;
  /// int |P~_eps - h| over the phase grid.
  std::vector<double> l1;
  bool monotone = false;
  double extrapolated = 0.0;
  /// Mass and minimum of the readout density at each eps (when computed).
  std::vector<double> P_mass;
  std::vector<double> P_min;
};

/// Runs the eps ladder with eps_q = eps_p = eps. When check_readout is set the
/// readout density is also computed on an outcome grid widened by 8/sqrt(eps).
WeakLimitReport weak_limit(const PrePostPair& pair, const grid::GridSpec& phase_grid,
                           const std::vector<double>& ladder = {1.0, 0.5, 0.25, 0.125},
                           bool check_readout = true, std::size_t readout_points = 81,
                           kernels::Exec exec = kernels::Exec::parallel);

}  // namespace tsmooth::weak
