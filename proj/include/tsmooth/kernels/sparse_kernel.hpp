#pragma once

// Row-stochastic transition kernels on a grid, stored as CSR in both
// orientations. Every parallel routine computes each output element inside a
// single thread with a fixed summation order, so the serial and OpenMP paths
// produce bitwise-identical results.

#include "tsmooth/common.hpp"
#include "tsmooth/grid.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace tsmooth::kernels {

enum class Exec { serial, parallel };

struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> ptr;  // rows + 1
  std::vector<std::uint32_t> idx;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }
};

/// p(i -> j): `by_source` rows are sources (each row sums to 1), `by_dest` is
/// its transpose.
struct TransitionKernel {
  Csr by_source;
  Csr by_dest;

  std::size_t size() const { return by_source.rows; }
};

Csr transpose(const Csr& a);
TransitionKernel from_dense(const Mat& p);
Mat to_dense(const Csr& a);

/// y_r = sum_k val_rk x_{idx_rk}.
void gather(const Csr& a, const double* x, double* y, Exec exec);

/// Density update out_j = (1/w_j) sum_i p_ij w_i in_i.
void apply_forward(const TransitionKernel& k, const Vec& w, const Vec& in, Vec& out, Exec exec);
/// Adjoint out_i = sum_j p_ij in_j.
void apply_adjoint(const TransitionKernel& k, const Vec& in, Vec& out, Exec exec);

struct GaussianKernelOptions {
  /// Half-width of the per-source support box in standard deviations;
  /// infinity keeps every node (dense).
  double cutoff_sigmas = 12.0;
  /// Upper bound on stored entries.
  std::size_t max_nnz = 200'000'000;
};

/// Mean and covariance of the destination for source node i.
using SourceGaussian = std::function<void(std::size_t i, Vec& mean, Mat& cov)>;

/// Gaussian transition kernel on the grid: for each source node, weights
/// proportional to w_j exp(-Mahalanobis^2/2) over the support box, normalized
/// to sum to 1. Mass that would leave the grid is kept on it (zero-flux
/// boundary). The support box always contains the nodes bracketing the mean,
/// so a kernel narrower than the spacing collapses onto the nearest nodes.
TransitionKernel build_gaussian_kernel(const grid::GridSpec& grid, const SourceGaussian& source,
                                       const GaussianKernelOptions& opts, Exec exec);

}  // namespace tsmooth::kernels
