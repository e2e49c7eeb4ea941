#pragma once

#include "tsmooth/kernels/sparse_kernel.hpp"

#include <exception>
#include <mutex>

namespace tsmooth::kernels {

/// Runs fn(i) for i in [0, n), with OpenMP when exec is parallel. The first
/// exception thrown by any iteration is rethrown after the loop.
template <class Fn>
void parallel_for(std::size_t n, Exec exec, Fn&& fn) {
  std::exception_ptr err;
  std::mutex mu;
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace tsmooth::kernels
