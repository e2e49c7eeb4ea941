#include "tsmooth/kernels/sparse_kernel.hpp"

#include "tsmooth/kernels/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsmooth::kernels {

Csr transpose(const Csr& a) {
  Csr t;
  t.rows = a.cols;
  t.cols = a.rows;
  t.ptr.assign(t.rows + 1, 0);
  for (auto j : a.idx) ++t.ptr[j + 1];
  for (std::size_t r = 0; r < t.rows; ++r) t.ptr[r + 1] += t.ptr[r];
  t.idx.resize(a.nnz());
  t.val.resize(a.nnz());
  std::vector<std::size_t> next(t.ptr.begin(), t.ptr.end() - 1);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = a.ptr[i]; k < a.ptr[i + 1]; ++k) {
      const std::size_t dst = next[a.idx[k]]++;
      t.idx[dst] = static_cast<std::uint32_t>(i);
      t.val[dst] = a.val[k];
    }
  }
  return t;
}

TransitionKernel from_dense(const Mat& p) {
  Csr a;
  a.rows = static_cast<std::size_t>(p.rows());
  a.cols = static_cast<std::size_t>(p.cols());
  a.ptr.push_back(0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) != 0.0) {
        a.idx.push_back(static_cast<std::uint32_t>(j));
        a.val.push_back(p(i, j));
      }
    }
    a.ptr.push_back(a.val.size());
  }
  TransitionKernel k{a, transpose(a)};
  return k;
}

Mat to_dense(const Csr& a) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = a.ptr[i]; k < a.ptr[i + 1]; ++k) {
      m(static_cast<Eigen::Index>(i), a.idx[k]) = a.val[k];
    }
  }
  return m;
}

void gather(const Csr& a, const double* x, double* y, Exec exec) {
  parallel_for(a.rows, exec, [&](std::size_t r) {
    double s = 0.0;
    for (std::size_t k = a.ptr[r]; k < a.ptr[r + 1]; ++k) s += a.val[k] * x[a.idx[k]];
    y[r] = s;
  });
}

void apply_forward(const TransitionKernel& k, const Vec& w, const Vec& in, Vec& out, Exec exec) {
  const Vec weighted = w.cwiseProduct(in);
  out.resize(in.size());
  gather(k.by_dest, weighted.data(), out.data(), exec);
  out = out.cwiseQuotient(w);
}

void apply_adjoint(const TransitionKernel& k, const Vec& in, Vec& out, Exec exec) {
  out.resize(in.size());
  gather(k.by_source, in.data(), out.data(), exec);
}

namespace {

struct SourceBox {
  Vec mean;
  Mat precision;
  std::size_t lo[grid::GridSpec::kMaxDims];
  std::size_t hi[grid::GridSpec::kMaxDims];
  std::size_t count = 0;
};

std::size_t clamp_index(double v, std::size_t n) {
  if (!(v > 0.0)) return 0;
  if (v >= static_cast<double>(n - 1)) return n - 1;
  return static_cast<std::size_t>(v);
}

}  // namespace

TransitionKernel build_gaussian_kernel(const grid::GridSpec& g, const SourceGaussian& source,
                                       const GaussianKernelOptions& opts, Exec exec) {
  g.validate();
  const std::size_t n = g.size();
  const int dims = g.dims();
  const Vec w = g.weights();
  const Vec logw = w.array().log().matrix();
  const bool dense = !std::isfinite(opts.cutoff_sigmas);

  std::vector<SourceBox> boxes(n);
  parallel_for(n, exec, [&](std::size_t i) {
    SourceBox& b = boxes[i];
    Mat cov;
    source(i, b.mean, cov);
    if (b.mean.size() != dims || cov.rows() != dims || !b.mean.allFinite() || !cov.allFinite()) {
      throw NumericalFailure("transition kernel parameters are invalid at node " + std::to_string(i), 0);
    }
    Eigen::LDLT<Mat> ldlt(cov);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
      throw DegenerateKernel("transition covariance is not positive definite at node " + std::to_string(i));
    }
    b.precision = ldlt.solve(Mat::Identity(dims, dims));
    b.count = 1;
    for (int d = 0; d < dims; ++d) {
      const auto& ax = g.axes[static_cast<std::size_t>(d)];
      const double h = ax.step();
      const double rel = (b.mean(d) - ax.min) / h;
      std::size_t lo = clamp_index(std::floor(rel), ax.n);
      std::size_t hi = std::min(lo + 1, ax.n - 1);
      if (rel >= static_cast<double>(ax.n - 1)) lo = hi = ax.n - 1;
      if (dense) {
        lo = 0;
        hi = ax.n - 1;
      } else {
        const double half = opts.cutoff_sigmas * std::sqrt(cov(d, d)) / h;
        lo = std::min(lo, clamp_index(std::floor(rel - half), ax.n));
        hi = std::max(hi, clamp_index(std::ceil(rel + half), ax.n));
      }
      b.lo[d] = lo;
      b.hi[d] = hi;
      b.count *= hi - lo + 1;
    }
  });

  Csr a;
  a.rows = a.cols = n;
  a.ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) a.ptr[i + 1] = a.ptr[i] + boxes[i].count;
  if (a.ptr[n] > opts.max_nnz) {
    throw InvalidModel("transition kernel needs " + std::to_string(a.ptr[n]) +
                       " entries, above the limit of " + std::to_string(opts.max_nnz) +
                       "; reduce the grid or the support cutoff");
  }
  a.idx.resize(a.ptr[n]);
  a.val.resize(a.ptr[n]);

  parallel_for(n, exec, [&](std::size_t i) {
    const SourceBox& b = boxes[i];
    std::size_t pos = a.ptr[i];
    std::size_t cur[grid::GridSpec::kMaxDims];
    for (int d = 0; d < dims; ++d) cur[d] = b.lo[d];
    Vec diff(dims);
    double lmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < b.count; ++c) {
      std::size_t f = 0;
      for (int d = 0; d < dims; ++d) {
        const auto& ax = g.axes[static_cast<std::size_t>(d)];
        f = f * ax.n + cur[d];
        diff(d) = ax.coord(cur[d]) - b.mean(d);
      }
      const double l = -0.5 * diff.dot(b.precision * diff) + logw(static_cast<Eigen::Index>(f));
      a.idx[pos + c] = static_cast<std::uint32_t>(f);
      a.val[pos + c] = l;
      lmax = std::max(lmax, l);
      for (int d = dims - 1; d >= 0; --d) {
        if (++cur[d] <= b.hi[d]) break;
        cur[d] = b.lo[d];
      }
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < b.count; ++c) {
      a.val[pos + c] = std::exp(a.val[pos + c] - lmax);
      sum += a.val[pos + c];
    }
    for (std::size_t c = 0; c < b.count; ++c) a.val[pos + c] /= sum;
  });

  TransitionKernel k;
  k.by_dest = transpose(a);
  k.by_source = std::move(a);
  return k;
}

}  // namespace tsmooth::kernels
