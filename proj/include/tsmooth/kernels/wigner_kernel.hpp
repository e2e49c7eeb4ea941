#pragma once

// Phase-space quadrature kernels for truncated-oscillator operators. Rows are
// independent and each is computed inside one thread with a fixed summation
// order.

#include "tsmooth/common.hpp"
#include "tsmooth/kernels/sparse_kernel.hpp"

namespace tsmooth::kernels {

/// Normalized Hermite functions psi_0 .. psi_{n-1} at x.
void hermite_functions(double x, int n, double* out);

/// Table with one row per point and one column per level.
Mat hermite_table(const Vec& xs, int n);

/// out(i, j) = (1/2pi) sum_k uw_k exp(-damping u_k^2 / 8)
///             Re[ psi(a_i - s u_k/2)^T C psi(a_i + s u_k/2) exp(i b_j u_k) ]
/// with s = sign. out is resized to a.size() x b.size().
void wigner_rows(const CMat& coeff, const Vec& a, const Vec& b, const Vec& u, const Vec& uw,
                 double damping, int sign, Mat& out, Exec exec);

}  // namespace tsmooth::kernels
