#include "tsmooth/kernels/wigner_kernel.hpp"

#include "tsmooth/kernels/parallel.hpp"

#include <cmath>
#include <vector>

namespace tsmooth::kernels {

void hermite_functions(double x, int n, double* out) {
  if (n <= 0) return;
  out[0] = std::pow(kPi, -0.25) * std::exp(-0.5 * x * x);
  if (n == 1) return;
  out[1] = std::sqrt(2.0) * x * out[0];
  for (int k = 1; k + 1 < n; ++k) {
    out[k + 1] = std::sqrt(2.0 / (k + 1)) * x * out[k] - std::sqrt(static_cast<double>(k) / (k + 1)) * out[k - 1];
  }
}

Mat hermite_table(const Vec& xs, int n) {
  Mat t(xs.size(), n);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    hermite_functions(xs(i), n, row.data());
    for (int k = 0; k < n; ++k) t(i, k) = row[static_cast<std::size_t>(k)];
  }
  return t;
}

void wigner_rows(const CMat& coeff, const Vec& a, const Vec& b, const Vec& u, const Vec& uw,
                 double damping, int sign, Mat& out, Exec exec) {
  const int n = static_cast<int>(coeff.rows());
  const Eigen::Index nu = u.size();
  const Eigen::Index nb = b.size();
  out.resize(a.size(), nb);

  Vec wdamp(nu);
  for (Eigen::Index k = 0; k < nu; ++k) wdamp(k) = uw(k) * std::exp(-damping * u(k) * u(k) / 8.0) / (2.0 * kPi);
  Mat cosb(nb, nu), sinb(nb, nu);
  for (Eigen::Index j = 0; j < nb; ++j) {
    for (Eigen::Index k = 0; k < nu; ++k) {
      cosb(j, k) = std::cos(b(j) * u(k));
      sinb(j, k) = std::sin(b(j) * u(k));
    }
  }
  const double s = sign >= 0 ? 1.0 : -1.0;

  parallel_for(static_cast<std::size_t>(a.size()), exec, [&](std::size_t i) {
    const double ai = a(static_cast<Eigen::Index>(i));
    std::vector<double> left(static_cast<std::size_t>(n)), right(static_cast<std::size_t>(n));
    Vec re(nu), im(nu);
    CVec tmp(n);
    for (Eigen::Index k = 0; k < nu; ++k) {
      hermite_functions(ai - 0.5 * s * u(k), n, left.data());
      hermite_functions(ai + 0.5 * s * u(k), n, right.data());
      const Eigen::Map<const Vec> l(left.data(), n), r(right.data(), n);
      tmp.noalias() = coeff * r.cast<cplx>();
      const cplx v = l.cast<cplx>().dot(tmp);  // dot conjugates the real left factor only
      re(k) = wdamp(k) * v.real();
      im(k) = wdamp(k) * v.imag();
    }
    for (Eigen::Index j = 0; j < nb; ++j) {
      out(static_cast<Eigen::Index>(i), j) = cosb.row(j).dot(re) - sinb.row(j).dot(im);
    }
  });
}

}  // namespace tsmooth::kernels
