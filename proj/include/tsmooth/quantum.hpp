#pragma once

// Hybrid classical-quantum fields: a Hermitian matrix on a truncated Hilbert
// space at every node of a classical grid, and the discrete superoperators
// that propagate them.
//
// One forward step is K J: the measurement map rho -> M rho M^dag followed by
// the dynamics 1 + dt L, where L combines the Hamiltonian commutator, Lindblad
// dissipators and an upwind finite-volume transport of the classical variable.
// The backward step applies the Hilbert-Schmidt adjoints in reverse order.

#include "tsmooth/grid.hpp"
#include "tsmooth/kernels/sparse_kernel.hpp"
#include "tsmooth/model.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsmooth::quantum {

enum class HilbertKind { qubit, oscillator };

struct HilbertSpec {
  HilbertKind kind = HilbertKind::qubit;
  int dim = 2;

  static HilbertSpec qubit() { return {HilbertKind::qubit, 2}; }
  static HilbertSpec oscillator(int dim = 30) { return {HilbertKind::oscillator, dim}; }

  void validate() const;

  CMat identity() const { return CMat::Identity(dim, dim); }
  /// Ladder operator a with a|n> = sqrt(n)|n-1>.
  CMat annihilation() const;
  /// (a + a^dag)/sqrt(2) and (a - a^dag)/(i sqrt(2)).
  CMat position() const;
  CMat momentum() const;
  /// max |([q,p] - i)_{jk}| over the levels below the top one.
  double commutator_defect() const;
};

CMat pauli_x();
CMat pauli_y();
CMat pauli_z();

enum class Role { density, effect };

struct HybridOperatorField {
  grid::GridSpec grid;
  std::vector<CMat> ops;
  double t = 0.0;
  double log_scale = 0.0;

  static HybridOperatorField uniform(const grid::GridSpec& grid, const CMat& op, double t = 0.0);
  /// rho(x) = p(x) rho_q.
  static HybridOperatorField product(const grid::GridSpec& grid,
                                     const std::function<double(const Vec&)>& p, const CMat& rho_q,
                                     double t = 0.0);

  int dim() const { return ops.empty() ? 0 : static_cast<int>(ops[0].rows()); }
  /// Real part of tr op(x) at every node.
  Vec traces() const;
  /// Trapezoid integral of tr op(x).
  double total_trace() const;
  /// Hermitian and PSD up to tol at every node, positive total trace for densities.
  void validate(Role role, double tol = 1e-10) const;
};

/// Hilbert-Schmidt pairing sum_x w(x) tr[a(x)^dag b(x)].
cplx inner(const HybridOperatorField& a, const HybridOperatorField& b);

struct HybridModel {
  HilbertSpec hilbert;
  /// Classical variable: drift, diffusion and Q are used. Its S must vanish.
  StateSpaceModel classical;
  CMat H0;
  std::vector<CMat> lindblad;
  /// x-dependent coupling Hamiltonian H_I(x); may be empty.
  std::function<CMat(const Vec& x)> coupling;
  /// Measurement operators C_mu(x, t).
  std::function<std::vector<CMat>(const Vec& x, double t)> measurement;
  Mat R;
  /// C does not depend on t (enables per-node caching).
  bool time_invariant = true;

  int dim_y() const { return static_cast<int>(R.rows()); }
  void validate(const grid::GridSpec& grid) const;

  static std::function<std::vector<CMat>(const Vec&, double)> constant_measurement(std::vector<CMat> c);
};

enum class Direction { forward, backward };

struct StepReport {
  /// max over nodes of ||(1/2) sum_mu C_mu (R^-1 dy)_mu||, which must be << 1.
  double measurement_norm = 0.0;
};

/// Precomputed per-node operators and classical transport for a fixed dt.
class HybridPropagator {
 public:
  HybridPropagator(const HybridModel& model, const grid::GridSpec& grid, double dt,
                   kernels::Exec exec = kernels::Exec::parallel);

  const grid::GridSpec& grid() const { return grid_; }
  double dt() const { return dt_; }

  /// rho -> M rho M^dag (forward) or E -> M^dag E M (backward), unscaled.
  HybridOperatorField measure_raw(const HybridOperatorField& f, const Vec& dy, double t, Direction dir,
                                  StepReport* report = nullptr) const;
  /// 1 + dt L (forward) or 1 + dt L* (backward), unscaled.
  HybridOperatorField evolve_raw(const HybridOperatorField& f, Direction dir) const;

  /// Unscaled composites: forward K J, backward J* K*.
  HybridOperatorField forward_raw(const HybridOperatorField& f, const Vec& dy, double t,
                                  StepReport* report = nullptr) const;
  HybridOperatorField backward_raw(const HybridOperatorField& g, const Vec& dy, double t) const;

  /// Classical transport as a row-stochastic kernel on node masses.
  const kernels::TransitionKernel& transport() const { return transport_; }
  /// Largest dt * (outflow rate) over nodes; at most 1 by construction.
  double cfl() const { return cfl_; }

 private:
  std::vector<CMat> ops_at(std::size_t i, double t) const;

  const HybridModel* model_;
  grid::GridSpec grid_;
  double dt_;
  kernels::Exec exec_;
  Vec weights_;
  Mat Rinv_;
  std::vector<CMat> hamiltonian_;            // H0 + H_I(x)
  CMat dissipator_;                          // sum L^dag L
  std::vector<std::vector<CMat>> c_cache_;   // C_mu(x) when time invariant
  std::vector<CMat> n_cache_;                // sum C_mu^dag Rinv_{mu nu} C_nu
  kernels::TransitionKernel transport_;
  double cfl_ = 0.0;
};

/// Rescaled single steps: measurement keeps the total trace and moves the
/// factor into log_scale; dynamics is trace preserving.
HybridOperatorField measurement_update(const HybridModel& model, const HybridOperatorField& f,
                                       const Vec& dy, double dt, Direction dir,
                                       kernels::Exec exec = kernels::Exec::parallel);
HybridOperatorField dynamics_step(const HybridModel& model, const HybridOperatorField& f, double dt,
                                  Direction dir, kernels::Exec exec = kernels::Exec::parallel);

/// Binary dump: the grid header, u32 hilbert_dim, then for every node the
/// matrix entries row-major with interleaved f64 (re, im), little-endian.
void write_binary(const std::string& path, const HybridOperatorField& f);
HybridOperatorField read_binary(const std::string& path);

}  // namespace tsmooth::quantum
