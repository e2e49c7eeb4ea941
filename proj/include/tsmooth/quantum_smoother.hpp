#pragma once

// Hybrid smoothing: forward density fields f_k, backward effect fields g_k
// from g_N = 1, and the classical smoothing density h_k = tr[g_k f_k] / int.
//
// f_k has absorbed dy_0 .. dy_{k-1}; g_k absorbs dy_k .. dy_{N-1}. Because the
// backward step is the exact adjoint of the forward one, int tr[g_k f_k] is
// the same at every k up to roundoff.

#include "tsmooth/grid.hpp"
#include "tsmooth/model.hpp"
#include "tsmooth/quantum.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tsmooth::quantum {

struct QuantumSmootherOptions {
  kernels::Exec exec = kernels::Exec::parallel;
  /// Keep every g_k as an operator field (the traces are always kept).
  bool keep_backward_fields = false;
  /// Oscillator truncation is flagged when the top Fock level carries more population.
  double truncation_threshold = 1e-6;
  /// First-order measurement operator is flagged above this norm.
  double measurement_norm_threshold = 0.1;
};

struct QuantumDiagnostics {
  std::vector<std::string> warnings;
  /// Largest ||(1/2) sum C_mu (R^-1 dy)_mu|| over steps and nodes.
  double max_measurement_norm = 0.0;
  /// Largest top-level population of the normalized forward field (oscillators only).
  double max_top_population = 0.0;
  double cfl = 0.0;
  /// max_k |<g_k, f_k> / <g_N, f_N> - 1| with scale factors restored.
  double conservation_drift = 0.0;
};

struct QuantumSmoothingRun {
  /// f_0 .. f_N, unit total trace.
  std::vector<HybridOperatorField> forward;
  /// g_0 .. g_N when requested, unit maximum node trace.
  std::vector<HybridOperatorField> backward;
  /// tr f_k(x), unit mass.
  std::vector<grid::GridDensity> filtered;
  /// tr g_k(x), unit maximum.
  std::vector<grid::GridDensity> backward_traces;
  /// h_k(x), unit mass. Not clipped: tiny negative values expose roundoff.
  std::vector<grid::GridDensity> smoothed;
  QuantumDiagnostics diagnostics;
};

QuantumSmoothingRun smooth(const HybridModel& model, const MeasurementRecord& record,
                           const HybridOperatorField& prior, const QuantumSmootherOptions& opts = {});

/// Pointwise Re tr[g(x) f(x)] normalized over x; throws Degenerate when the overlap vanishes.
grid::GridDensity combine(const HybridOperatorField& f, const HybridOperatorField& g);

/// Filtered tr[O f]/tr[f] and weak Re tr[g O f]/tr[g f], both aggregated over x.
std::pair<double, double> expectations(const HybridOperatorField& f, const HybridOperatorField& g,
                                       const CMat& observable);

/// Top-level population of a field, int <d-1|f|d-1> / int tr f.
double top_level_population(const HybridOperatorField& f);

struct HybridTrajectory {
  /// Increments dy_k and the classical path in truth.
  MeasurementRecord record;
  /// Normalized conditional quantum state at t_0 .. t_N.
  std::vector<CMat> rho;
};

/// Euler-Maruyama classical path with a conditioned quantum state driven by
/// H0 + H_I(x); dy_k ~ N(tr[(C + C^dag) rho]/2 dt, R dt).
HybridTrajectory simulate_hybrid(const HybridModel& model, const PriorSampler& prior_x,
                                 const CMat& rho0, double dt, std::size_t steps, std::uint64_t seed,
                                 double t0 = 0.0);

}  // namespace tsmooth::quantum
