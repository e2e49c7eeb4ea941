#pragma once

// Oracles for hybrid smoothing on a 1D classical grid: a classical product
// chain for diagonal models, and exhaustive path enumeration for tiny ones.

#include "tsmooth/grid_smoother.hpp"
#include "tsmooth/quantum.hpp"

#include <memory>
#include <vector>

namespace tsmooth::testing {

/// Upwind rates to the left and right neighbor of every node of a 1D grid.
struct UpwindRates {
  std::vector<double> left, right;
};
UpwindRates upwind_rates(const quantum::HybridModel& model, const grid::GridSpec& g);

/// x-by-level chain for models whose operators are all diagonal. The level
/// axis has nodes 0..d-1; level_rates(i, j) is the population rate i -> j.
class ProductSteps : public grid::StepModel {
 public:
  ProductSteps(const quantum::HybridModel& model, const grid::GridSpec& xgrid, const Mat& level_rates,
               const MeasurementRecord& record);

  const grid::GridSpec& grid() const override { return grid_; }
  std::size_t steps() const override { return record_.steps(); }
  double time(std::size_t k) const override { return record_.time(k); }
  Vec log_likelihood(std::size_t k) const override;
  std::shared_ptr<const kernels::TransitionKernel> kernel(std::size_t) const override { return kernel_; }

  /// Populations of a diagonal field as a density on the product grid.
  grid::GridDensity to_density(const quantum::HybridOperatorField& f) const;
  /// Node masses of a product density summed over levels, per x node.
  Vec x_masses(const grid::GridDensity& d) const;

 private:
  const quantum::HybridModel* model_;
  grid::GridSpec xgrid_;
  grid::GridSpec grid_;
  MeasurementRecord record_;
  std::shared_ptr<const kernels::TransitionKernel> kernel_;
};

/// Smoothed node masses w_x h_k(x) by summing every classical path x_0..x_N,
/// each carrying its own operator through the measurement and step maps.
std::vector<Vec> enumerate_hybrid(const quantum::HybridModel& model, const quantum::HybridOperatorField& prior,
                                  const MeasurementRecord& record);

}  // namespace tsmooth::testing
