#pragma once

// Kernel applications on operator-valued fields. Same conventions as
// sparse_kernel.hpp: one output node per thread, fixed summation order.

#include "tsmooth/common.hpp"
#include "tsmooth/kernels/sparse_kernel.hpp"

#include <vector>

namespace tsmooth::kernels {

/// out_j = (1/w_j) sum_i p_ij w_i in_i.
void transport_forward(const TransitionKernel& k, const Vec& w, const std::vector<CMat>& in,
                       std::vector<CMat>& out, Exec exec);
/// out_i = sum_j p_ij in_j.
void transport_adjoint(const TransitionKernel& k, const std::vector<CMat>& in,
                       std::vector<CMat>& out, Exec exec);

}  // namespace tsmooth::kernels
