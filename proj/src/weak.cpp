#include "tsmooth/weak.hpp"

#include "tsmooth/kernels/parallel.hpp"
#include "tsmooth/kernels/wigner_kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsmooth::weak {
namespace {

cplx ipow(int n) {
  switch (((n % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

double max_abs(const CMat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void check_hermitian(const CMat& m, const char* name, double tol) {
  if (m.rows() == 0 || m.rows() != m.cols()) throw InvalidModel(std::string(name) + " must be a non-empty square matrix");
  if (!m.allFinite()) throw InvalidModel(std::string(name) + " has non-finite entries");
  if (max_abs(m - m.adjoint()) > tol * std::max(1.0, max_abs(m))) {
    throw InvalidModel(std::string(name) + " is not Hermitian");
  }
}

/// op = c * I up to roundoff.
bool identity_multiple(const CMat& op, double& c) {
  c = op.trace().real() / static_cast<double>(op.rows());
  const CMat diff = op - c * CMat::Identity(op.rows(), op.cols());
  return max_abs(diff) <= 1e-12 * std::max(1.0, max_abs(op));
}

/// Levels above the last one touched by any of the operators are dropped.
int effective_dim(const CMat& a, const CMat* b = nullptr) {
  const double scale = std::max(max_abs(a), b ? max_abs(*b) : 0.0);
  int keep = 1;
  for (int k = static_cast<int>(a.rows()) - 1; k > 0; --k) {
    double m = std::max(a.row(k).cwiseAbs().maxCoeff(), a.col(k).cwiseAbs().maxCoeff());
    if (b) m = std::max({m, b->row(k).cwiseAbs().maxCoeff(), b->col(k).cwiseAbs().maxCoeff()});
    if (m > 1e-16 * scale) {
      keep = k + 1;
      break;
    }
  }
  return keep;
}

/// Beyond this radius every psi_n with n < levels is below ~1e-20.
double support_radius(int levels) { return std::sqrt(2.0 * levels + 1.0) + 7.0; }

Vec axis_coords(const grid::Axis& a) {
  Vec x(static_cast<Eigen::Index>(a.n));
  for (std::size_t i = 0; i < a.n; ++i) x(static_cast<Eigen::Index>(i)) = a.coord(i);
  return x;
}

Vec axis_weights(const grid::Axis& a) {
  Vec w = Vec::Constant(static_cast<Eigen::Index>(a.n), a.step());
  w(0) *= 0.5;
  w(w.size() - 1) *= 0.5;
  return w;
}

double weighted_sum(const grid::GridSpec& grid, const Vec& v) { return grid.weights().dot(v); }

/// Symmetric uniform grid [-r, r] with the given maximum step.
Vec centered_grid(double r, double max_step, double& step) {
  const long half = static_cast<long>(std::ceil(r / max_step));
  step = r / static_cast<double>(half);
  Vec x(2 * half + 1);
  for (long k = -half; k <= half; ++k) x(k + half) = static_cast<double>(k) * step;
  return x;
}

Vec gaussian_readout(const Vec& xs, double y, double eps) {
  const double amp = std::pow(eps / (2.0 * kPi), 0.25);
  return (-(eps / 4.0) * (xs.array() - y).square()).exp() * amp;
}

Mat blur_matrix(const grid::Axis& y, const grid::Axis& x, double var) {
  const Vec ys = axis_coords(y), xs = axis_coords(x), w = axis_weights(x);
  const double norm = 1.0 / std::sqrt(2.0 * kPi * var);
  Mat b(ys.size(), xs.size());
  for (Eigen::Index i = 0; i < ys.size(); ++i) {
    for (Eigen::Index j = 0; j < xs.size(); ++j) {
      const double d = ys(i) - xs(j);
      b(i, j) = w(j) * norm * std::exp(-0.5 * d * d / var);
    }
  }
  return b;
}

Mat as_matrix(const grid::GridSpec& g, const Vec& v) {
  const auto n0 = static_cast<Eigen::Index>(g.axes[0].n), n1 = static_cast<Eigen::Index>(g.axes[1].n);
  Mat m(n0, n1);
  for (Eigen::Index i = 0; i < n0; ++i)
    for (Eigen::Index j = 0; j < n1; ++j) m(i, j) = v(i * n1 + j);
  return m;
}

Vec as_values(const Mat& m) {
  Vec v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(i * m.cols() + j) = m(i, j);
  return v;
}

}  // namespace

CVec fock_ket(int dim, int n) {
  if (dim < 1 || n < 0 || n >= dim) throw InvalidModel("fock_ket: level outside the truncated space");
  CVec k = CVec::Zero(dim);
  k(n) = 1.0;
  return k;
}

CVec coherent_ket(int dim, cplx alpha) {
  if (dim < 1) throw InvalidModel("coherent_ket: dim must be positive");
  CVec k(dim);
  k(0) = std::exp(-0.5 * std::norm(alpha));
  for (int n = 1; n < dim; ++n) k(n) = k(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  return k / k.norm();
}

CMat projector(const CVec& ket) { return ket * ket.adjoint(); }

void PrePostPair::validate(double tol) const {
  check_hermitian(f, "f", tol);
  check_hermitian(g, "g", tol);
  if (f.rows() != g.rows()) throw InvalidModel("f and g have different dimensions");
  for (const CMat* m : {&f, &g}) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (*m + m->adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, max_abs(*m))) {
      throw InvalidModel(std::string(m == &f ? "f" : "g") + " is not positive semidefinite");
    }
  }
}

cplx weak_value(const PrePostPair& pair, const CMat& O) {
  pair.validate();
  check_hermitian(O, "observable", 1e-12);
  if (O.rows() != pair.f.rows()) throw InvalidModel("observable dimension differs from the pair");
  const cplx den = (pair.g * pair.f).trace();
  if (std::abs(den) <= 1e-14 * pair.g.norm() * pair.f.norm()) {
    throw Degenerate("degenerate post-selection: tr[g f] vanishes");
  }
  return (pair.g * O * pair.f).trace() / den;
}

void GaussianWignerState::validate() const {
  if (!mean.allFinite() || !cov.allFinite()) throw InvalidModel("Gaussian Wigner state has non-finite entries");
  if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * cov.cwiseAbs().maxCoeff()) {
    throw InvalidModel("Gaussian Wigner covariance is not symmetric");
  }
  if (cov(0, 0) <= 0.0 || cov.determinant() <= 0.0) throw InvalidModel("Gaussian Wigner covariance is not positive definite");
}

double GaussianWignerState::density(double q, double p) const {
  const Vec2 d(q - mean(0), p - mean(1));
  return std::exp(-0.5 * d.dot(cov.inverse() * d)) / (2.0 * kPi * std::sqrt(cov.determinant()));
}

GaussianWignerState smoothing_quasiprob(const GaussianWignerState& f, const GaussianWignerState& g) {
  f.validate();
  g.validate();
  const Mat2 lf = f.cov.inverse(), lg = g.cov.inverse();
  GaussianWignerState h;
  h.cov = (lf + lg).inverse();
  h.cov = 0.5 * (h.cov + h.cov.transpose()).eval();
  h.mean = h.cov * (lf * f.mean + lg * g.mean);
  h.role = Role::f;
  return h;
}

double WignerGrid::integral() const { return weighted_sum(grid, values); }

void validate_phase_grid(const grid::GridSpec& grid) {
  grid.validate();
  if (grid.dims() != 2) throw InvalidModel("phase-space grid must have axes (q, p)");
}

WignerGrid wigner_transform(const CMat& op, const grid::GridSpec& grid, const WignerOptions& opts) {
  validate_phase_grid(grid);
  check_hermitian(op, "operator", 1e-10);
  if (opts.damping < 0.0) throw InvalidModel("wigner_transform: damping must be nonnegative");

  WignerGrid w;
  w.grid = grid;
  w.op_trace = op.trace().real();

  double c = 0.0;
  if (identity_multiple(op, c)) {
    w.values = Vec::Constant(static_cast<Eigen::Index>(grid.size()), c / (2.0 * kPi));
    return w;
  }

  const int n = effective_dim(op);
  CMat coeff = op.topLeftCorner(n, n);
  const Vec qs = axis_coords(grid.axes[0]), ps = axis_coords(grid.axes[1]);
  const bool pos = opts.rep == Representation::position;
  if (!pos) {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) coeff(a, b) *= std::conj(ipow(a)) * ipow(b);
  }
  const Vec& outer = pos ? qs : ps;
  const Vec& inner = pos ? ps : qs;

  const double r = support_radius(n);
  const double bmax = inner.cwiseAbs().maxCoeff();
  const double max_step = opts.step > 0.0 ? opts.step : 2.0 * kPi / (r + bmax + 4.0);
  double h = 0.0;
  const Vec u = centered_grid(2.0 * r, max_step, h);
  Vec uw = Vec::Constant(u.size(), h);
  uw(0) *= 0.5;
  uw(uw.size() - 1) *= 0.5;

  Mat out;
  kernels::wigner_rows(coeff, outer, inner, u, uw, opts.damping, pos ? 1 : -1, out, opts.exec);
  w.values = as_values(pos ? out : Mat(out.transpose()));

  const Vec absval = w.values.cwiseAbs();
  const double total_abs = weighted_sum(grid, absval);
  w.boundary_fraction = total_abs > 0.0 ? grid::boundary_mass_fraction(grid, absval) : 0.0;
  if (w.boundary_fraction > opts.boundary_tol) {
    std::ostringstream os;
    os << "phase grid too small: boundary carries " << w.boundary_fraction << " of |W|";
    w.warnings.push_back(os.str());
  }
  const double missing = std::abs(w.integral() - w.op_trace);
  if (missing > opts.boundary_tol * std::max(std::abs(w.op_trace), max_abs(op))) {
    std::ostringstream os;
    os << "phase grid misses " << missing << " of tr[op] = " << w.op_trace;
    w.warnings.push_back(os.str());
  }
  return w;
}

namespace {

/// C = tr[D_p(g) D_q(f)], where D_q, D_p are the dephasings left by the
/// position and momentum readouts. Their Wigner functions are the damped
/// transforms, so C is 2 pi times their overlap on a grid covering the support.
double readout_normalizer(const PrePostPair& pair, double eps_q, double eps_p, kernels::Exec exec) {
  double cf = 0.0, cg = 0.0;
  const bool flat_f = identity_multiple(pair.f, cf);
  const bool flat_g = identity_multiple(pair.g, cg);
  if (flat_f && flat_g) throw Degenerate("tr[g f] diverges for two flat operators");
  if (flat_g) return cg * pair.f.trace().real();
  if (flat_f) return cf * pair.g.trace().real();
  const int n = effective_dim(pair.f, &pair.g);
  const double r = support_radius(n) + 4.0 * std::sqrt(std::max(eps_q, eps_p));
  double h = 0.0;
  const Vec xs = centered_grid(r, kPi / (r + 4.0), h);
  const grid::Axis axis{xs(0), xs(xs.size() - 1), static_cast<std::size_t>(xs.size())};
  const grid::GridSpec g2(std::vector<grid::Axis>{axis, axis});
  WignerOptions of;
  of.damping = eps_q;
  of.exec = exec;
  WignerOptions og = of;
  og.damping = eps_p;
  og.rep = Representation::momentum;
  const Vec wf = wigner_transform(pair.f, g2, of).values;
  const Vec wg = wigner_transform(pair.g, g2, og).values;
  return 2.0 * kPi * g2.weights().dot(wf.cwiseProduct(wg));
}

}  // namespace

WignerGrid sample(const GaussianWignerState& s, const grid::GridSpec& grid) {
  validate_phase_grid(grid);
  s.validate();
  WignerGrid w;
  w.grid = grid;
  w.op_trace = 1.0;
  w.values.resize(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec x = grid.point(i);
    w.values(static_cast<Eigen::Index>(i)) = s.density(x(0), x(1));
  }
  return w;
}

void phase_moments(const grid::GridSpec& grid, const Vec& values, Vec2& mean, Mat2& cov) {
  const Vec w = grid.weights();
  const double mass = w.dot(values);
  mean.setZero();
  cov.setZero();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec x = grid.point(i);
    mean += w(static_cast<Eigen::Index>(i)) * values(static_cast<Eigen::Index>(i)) * Vec2(x(0), x(1));
  }
  mean /= mass;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec x = grid.point(i);
    const Vec2 d = Vec2(x(0), x(1)) - mean;
    cov += w(static_cast<Eigen::Index>(i)) * values(static_cast<Eigen::Index>(i)) * d * d.transpose();
  }
  cov /= mass;
}

Quasiprobability smoothing_quasiprob(const WignerGrid& f, const WignerGrid& g) {
  if (!(f.grid == g.grid)) throw Mismatch("smoothing_quasiprob: f and g live on different grids");
  validate_phase_grid(f.grid);
  const Vec prod = f.values.cwiseProduct(g.values);
  const double overlap = weighted_sum(f.grid, prod);
  const double scale = weighted_sum(f.grid, prod.cwiseAbs());
  if (!(std::abs(overlap) > 1e-12 * scale) || overlap == 0.0) {
    throw Degenerate("smoothing_quasiprob: overlap of f and g vanishes");
  }
  Quasiprobability h;
  h.grid = f.grid;
  h.overlap = overlap;
  h.values = prod / overlap;
  h.min_value = h.values.minCoeff();
  phase_moments(h.grid, h.values, h.mean, h.cov);
  return h;
}

void WeakMeasurementSetup::validate() const {
  if (!(eps_q > 0.0) || !(eps_p > 0.0) || !std::isfinite(eps_q) || !std::isfinite(eps_p)) {
    throw InvalidModel("measurement strengths eps_q, eps_p must be positive");
  }
  y_grid.validate();
  if (y_grid.dims() != 2) throw InvalidModel("outcome grid must have axes (y_q, y_p)");
  validate_phase_grid(phase_grid);
}

Vec kraus_density(const PrePostPair& pair, double eps_q, double eps_p, const grid::GridSpec& y_grid,
                  kernels::Exec exec) {
  pair.validate();
  if (!(eps_q > 0.0) || !(eps_p > 0.0)) throw InvalidModel("measurement strengths must be positive");
  y_grid.validate();
  if (y_grid.dims() != 2) throw InvalidModel("outcome grid must have axes (y_q, y_p)");

  double cf = 0.0, cg = 0.0;
  if (identity_multiple(pair.f, cf)) throw UnsupportedModel("readout density needs a normalizable f");
  const bool flat_g = identity_multiple(pair.g, cg);
  // A multiple of the identity stands for the untruncated identity.
  const double norm = readout_normalizer(pair, eps_q, eps_p, exec);
  if (!(norm > 1e-300)) throw Degenerate("inconsistent pre/post pair: readout normalizer <= 0");

  const int n = flat_g ? effective_dim(pair.f) : effective_dim(pair.f, &pair.g);
  const CMat f = pair.f.topLeftCorner(n, n);
  CMat g = pair.g.topLeftCorner(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) g(a, b) *= std::conj(ipow(a)) * ipow(b);

  // Exact Fourier kernel <p|q> on a grid that resolves every psi_n, n < levels.
  const double r = support_radius(n);
  double h = 0.0;
  const Vec xs = centered_grid(r, 2.0 * kPi / (2.0 * r + 4.0), h);
  const Eigen::Index nx = xs.size();
  const Mat psi = kernels::hermite_table(xs, n);
  CMat fourier(nx, nx);
  const double c = h / std::sqrt(2.0 * kPi);
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < nx; ++j) fourier(i, j) = std::polar(c, -xs(i) * xs(j));

  const Vec yq = axis_coords(y_grid.axes[0]), yp = axis_coords(y_grid.axes[1]);
  std::vector<Mat> mp(static_cast<std::size_t>(yp.size()));
  for (Eigen::Index j = 0; j < yp.size(); ++j) {
    mp[static_cast<std::size_t>(j)] = (gaussian_readout(xs, yp(j), eps_p).asDiagonal() * psi).transpose();
  }

  Vec out(static_cast<Eigen::Index>(y_grid.size()));
  kernels::parallel_for(static_cast<std::size_t>(yq.size()), exec, [&](std::size_t iq) {
    const Mat weighted = gaussian_readout(xs, yq(static_cast<Eigen::Index>(iq)), eps_q).asDiagonal() * psi;
    const CMat x = fourier * weighted.cast<cplx>();  // <p_i| M_q |m>
    for (Eigen::Index jp = 0; jp < yp.size(); ++jp) {
      const Eigen::Index k = static_cast<Eigen::Index>(iq) * yp.size() + jp;
      if (flat_g) {
        // tr[M_p^2 M_q f M_q] as a p-integral.
        const Vec m2 = gaussian_readout(xs, yp(jp), eps_p).array().square().matrix();
        const CMat xf = x * f;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < nx; ++i) acc += h * m2(i) * xf.row(i).dot(x.row(i)).real();
        out(k) = cg * acc / norm;
      } else {
        const CMat t = h * (mp[static_cast<std::size_t>(jp)].cast<cplx>() * x);  // <l| M_p M_q |m> up to i^l
        const CMat a = t * f;
        const CMat b = g * t;
        out(k) = (b.conjugate().cwiseProduct(a)).sum().real() / norm;
      }
    }
  });
  return out;
}

Vec blurred_quasiprob(const PrePostPair& pair, double eps_q, double eps_p, const grid::GridSpec& phase_grid,
                      kernels::Exec exec) {
  pair.validate();
  if (!(eps_q >= 0.0) || !(eps_p >= 0.0)) throw InvalidModel("measurement strengths must be nonnegative");
  const double norm = readout_normalizer(pair, eps_q, eps_p, exec);
  if (!(norm > 1e-300)) throw Degenerate("inconsistent pre/post pair: readout normalizer <= 0");

  WignerOptions of;
  of.damping = eps_q;
  of.rep = Representation::position;
  of.exec = exec;
  WignerOptions og = of;
  og.damping = eps_p;
  og.rep = Representation::momentum;
  const WignerGrid wf = wigner_transform(pair.f, phase_grid, of);
  const WignerGrid wg = wigner_transform(pair.g, phase_grid, og);
  return (2.0 * kPi / norm) * wf.values.cwiseProduct(wg.values);
}

JointDensity weak_joint_density(const PrePostPair& pair, const WeakMeasurementSetup& setup) {
  setup.validate();
  JointDensity out;
  out.y_grid = setup.y_grid;
  out.phase_grid = setup.phase_grid;
  out.normalizer = readout_normalizer(pair, setup.eps_q, setup.eps_p, setup.exec);
  out.P = kraus_density(pair, setup.eps_q, setup.eps_p, setup.y_grid, setup.exec);
  out.P_tilde = blurred_quasiprob(pair, setup.eps_q, setup.eps_p, setup.phase_grid, setup.exec);

  const Mat bq = blur_matrix(setup.y_grid.axes[0], setup.phase_grid.axes[0], 1.0 / setup.eps_q);
  const Mat bp = blur_matrix(setup.y_grid.axes[1], setup.phase_grid.axes[1], 1.0 / setup.eps_p);
  out.blurred = as_values(bq * as_matrix(setup.phase_grid, out.P_tilde) * bp.transpose());

  out.mass = weighted_sum(setup.y_grid, out.P);
  out.min_P = out.P.minCoeff();
  out.min_P_tilde = out.P_tilde.minCoeff();
  out.consistency = (out.P - out.blurred).cwiseAbs().maxCoeff();
  if (out.consistency > setup.consistency_tol) {
    std::ostringstream os;
    os << "readout density and blurred quasiprobability differ by " << out.consistency;
    out.warnings.push_back(os.str());
  }
  if (std::abs(out.mass - 1.0) > setup.consistency_tol) {
    std::ostringstream os;
    os << "outcome grid holds mass " << out.mass << " of the readout density";
    out.warnings.push_back(os.str());
  }
  return out;
}

double extrapolate_to_zero(const std::vector<double>& eps, const std::vector<double>& vals) {
  if (eps.size() != vals.size() || eps.empty()) throw InvalidModel("extrapolate_to_zero: size mismatch");
  std::vector<double> p(vals);
  const std::size_t n = p.size();
  for (std::size_t m = 1; m < n; ++m) {
    for (std::size_t i = 0; i + m < n; ++i) {
      p[i] = (-eps[i + m] * p[i] + eps[i] * p[i + 1]) / (eps[i] - eps[i + m]);
    }
  }
  return p[0];
}

WeakLimitReport weak_limit(const PrePostPair& pair, const grid::GridSpec& phase_grid,
                           const std::vector<double>& ladder, bool check_readout, std::size_t readout_points,
                           kernels::Exec exec) {
  validate_phase_grid(phase_grid);
  if (ladder.empty()) throw InvalidModel("weak_limit: empty eps ladder");
  WignerOptions opts;
  opts.exec = exec;
  WignerOptions optg = opts;
  optg.rep = Representation::momentum;
  const Quasiprobability h = smoothing_quasiprob(wigner_transform(pair.f, phase_grid, opts),
                                                 wigner_transform(pair.g, phase_grid, optg));
  const Vec w = phase_grid.weights();

  WeakLimitReport rep;
  rep.eps = ladder;
  for (double eps : ladder) {
    const Vec pt = blurred_quasiprob(pair, eps, eps, phase_grid, exec);
    rep.l1.push_back(w.dot((pt - h.values).cwiseAbs()));
    if (check_readout) {
      const double pad = 8.0 / std::sqrt(eps);
      std::vector<grid::Axis> axes;
      for (const auto& a : phase_grid.axes) axes.push_back({a.min - pad, a.max + pad, readout_points});
      const grid::GridSpec yg(axes);
      const Vec P = kraus_density(pair, eps, eps, yg, exec);
      rep.P_mass.push_back(weighted_sum(yg, P));
      rep.P_min.push_back(P.minCoeff());
    }
  }
  rep.monotone = true;
  for (std::size_t i = 1; i < rep.l1.size(); ++i) rep.monotone = rep.monotone && rep.l1[i] < rep.l1[i - 1];
  rep.extrapolated = extrapolate_to_zero(rep.eps, rep.l1);
  return rep;
}

}  // namespace tsmooth::weak
