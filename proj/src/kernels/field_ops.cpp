#include "tsmooth/kernels/field_ops.hpp"

#include "tsmooth/kernels/parallel.hpp"

namespace tsmooth::kernels {

void transport_forward(const TransitionKernel& k, const Vec& w, const std::vector<CMat>& in,
                       std::vector<CMat>& out, Exec exec) {
  const Csr& a = k.by_dest;
  out.resize(in.size());
  parallel_for(a.rows, exec, [&](std::size_t j) {
    CMat acc = CMat::Zero(in[j].rows(), in[j].cols());
    for (std::size_t e = a.ptr[j]; e < a.ptr[j + 1]; ++e) {
      const std::size_t i = a.idx[e];
      acc += (a.val[e] * w(static_cast<Eigen::Index>(i))) * in[i];
    }
    out[j] = acc / w(static_cast<Eigen::Index>(j));
  });
}

void transport_adjoint(const TransitionKernel& k, const std::vector<CMat>& in,
                       std::vector<CMat>& out, Exec exec) {
  const Csr& a = k.by_source;
  out.resize(in.size());
  parallel_for(a.rows, exec, [&](std::size_t i) {
    CMat acc = CMat::Zero(in[i].rows(), in[i].cols());
    for (std::size_t e = a.ptr[i]; e < a.ptr[i + 1]; ++e) acc += a.val[e] * in[a.idx[e]];
    out[i] = acc;
  });
}

}  // namespace tsmooth::kernels
