#pragma once

// Forward (filtering) and backward (retrodictive likelihood) recursions on a
// fixed grid, and their pointwise combination into the smoothing density.
//
//   f_{k+1}(x') = int P(x' | x, dy_k) P(dy_k | x) f_k(x) dx
//   g_k(x)      = P(dy_k | x) int P(x' | x, dy_k) g_{k+1}(x') dx',   g_N = 1
//   h_k         = f_k g_k / int f_k g_k
//
// The backward kernel application is the exact adjoint of the forward one, so
// int g_k f_k is the same at every k up to roundoff.

#include "tsmooth/grid.hpp"
#include "tsmooth/kernels/sparse_kernel.hpp"
#include "tsmooth/model.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <vector>

namespace tsmooth::grid {

/// One discrete-time step of a grid model: an observation log-likelihood and
/// a transition kernel per step.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual const GridSpec& grid() const = 0;
  virtual std::size_t steps() const = 0;
  virtual double time(std::size_t k) const = 0;
  /// log P(dy_k | x) at every node, up to a constant that may depend on k.
  virtual Vec log_likelihood(std::size_t k) const = 0;
  /// Kernel for t_k -> t_{k+1}; may depend on dy_k.
  virtual std::shared_ptr<const kernels::TransitionKernel> kernel(std::size_t k) const = 0;
};

struct GridSmootherOptions {
  kernels::GaussianKernelOptions kernel;
  KernelOptions transition;
  /// Reuse one kernel for every step when S = 0 and the model is time invariant.
  bool cache_kernel = false;
  double boundary_threshold = 1e-6;
  kernels::Exec exec = kernels::Exec::parallel;
  std::size_t grid_cap = GridSpec::kDefaultCap;
};

/// Gaussian transition and observation kernels of a decorrelated model over a
/// measurement record.
class GaussianKernelSteps : public StepModel {
 public:
  GaussianKernelSteps(DecorrelatedModel dmodel, const MeasurementRecord& record, GridSpec grid,
                      GridSmootherOptions opts = {});

  const GridSpec& grid() const override { return grid_; }
  std::size_t steps() const override { return record_->steps(); }
  double time(std::size_t k) const override { return record_->time(k); }
  Vec log_likelihood(std::size_t k) const override;
  std::shared_ptr<const kernels::TransitionKernel> kernel(std::size_t k) const override;

  /// True once any kernel needed jitter to become non-degenerate.
  bool regularized() const { return regularized_.load(); }
  bool cached() const { return cacheable_; }

 private:
  std::shared_ptr<const kernels::TransitionKernel> build(std::size_t k) const;

  DecorrelatedModel dmodel_;
  const MeasurementRecord* record_;
  GridSpec grid_;
  GridSmootherOptions opts_;
  std::vector<Vec> nodes_;
  std::vector<Vec> drift_rate_;  // C(x) per node when time invariant
  bool cacheable_ = false;
  mutable std::shared_ptr<const kernels::TransitionKernel> cache_;
  mutable std::atomic<bool> regularized_{false};
};

struct Diagnostics {
  std::vector<std::string> warnings;
  double max_boundary_fraction = 0.0;
  bool regularized = false;
};

struct PassResult {
  std::vector<GridDensity> densities;
  Diagnostics diagnostics;
};

/// Single steps; forward output has unit trapezoid mass, backward output has
/// unit maximum, with the factor folded into log_scale.
GridDensity forward_step(const StepModel& model, std::size_t k, const GridDensity& f,
                         kernels::Exec exec = kernels::Exec::parallel);
GridDensity backward_step(const StepModel& model, std::size_t k, const GridDensity& g_next,
                          kernels::Exec exec = kernels::Exec::parallel);

PassResult forward_pass(const StepModel& model, const GridDensity& prior,
                        kernels::Exec exec = kernels::Exec::parallel,
                        double boundary_threshold = 1e-6);
PassResult backward_pass(const StepModel& model, kernels::Exec exec = kernels::Exec::parallel);

PassResult forward_pass(const DecorrelatedModel& dmodel, const MeasurementRecord& record,
                        const GridDensity& prior, const GridSmootherOptions& opts = {});
PassResult backward_pass(const DecorrelatedModel& dmodel, const MeasurementRecord& record,
                         const GridSpec& grid, const GridSmootherOptions& opts = {});

/// h = f g / int f g on matching grids and times.
GridDensity combine(const GridDensity& f, const GridDensity& g);

/// max_k |<g,f>_k / <g,f>_N - 1| with log_scale factors restored.
double conservation_check(const std::vector<GridDensity>& fs, const std::vector<GridDensity>& gs);

struct GridSmoothingRun {
  std::vector<GridDensity> filtered;
  std::vector<GridDensity> backward;
  std::vector<GridDensity> smoothed;
  Diagnostics diagnostics;
};

GridSmoothingRun smooth(const StepModel& model, const GridDensity& prior,
                        kernels::Exec exec = kernels::Exec::parallel,
                        double boundary_threshold = 1e-6);
GridSmoothingRun smooth(const DecorrelatedModel& dmodel, const MeasurementRecord& record,
                        const GridDensity& prior, const GridSmootherOptions& opts = {});

}  // namespace tsmooth::grid
