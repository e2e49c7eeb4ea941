#include "tsmooth/quantum.hpp"

#include "tsmooth/kernels/field_ops.hpp"
#include "tsmooth/kernels/parallel.hpp"
#include "tsmooth/record_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace tsmooth::quantum {

namespace {

const cplx kI(0.0, 1.0);

double hermitian_defect(const CMat& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

}  // namespace

void HilbertSpec::validate() const {
  if (dim < 2) throw InvalidModel("Hilbert dimension must be at least 2");
  if (kind == HilbertKind::qubit && dim != 2) throw InvalidModel("a qubit has dimension 2");
}

CMat HilbertSpec::annihilation() const {
  CMat a = CMat::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

CMat HilbertSpec::position() const {
  const CMat a = annihilation();
  return (a + a.adjoint()) / std::sqrt(2.0);
}

CMat HilbertSpec::momentum() const {
  const CMat a = annihilation();
  return (a - a.adjoint()) / (kI * std::sqrt(2.0));
}

double HilbertSpec::commutator_defect() const {
  const CMat q = position(), p = momentum();
  const CMat c = q * p - p * q - kI * CMat::Identity(dim, dim);
  return c.topLeftCorner(dim - 1, dim - 1).cwiseAbs().maxCoeff();
}

CMat pauli_x() {
  CMat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

CMat pauli_y() {
  CMat m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}

CMat pauli_z() {
  CMat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

HybridOperatorField HybridOperatorField::uniform(const grid::GridSpec& g, const CMat& op, double t) {
  g.validate();
  return HybridOperatorField{g, std::vector<CMat>(g.size(), op), t, 0.0};
}

HybridOperatorField HybridOperatorField::product(const grid::GridSpec& g,
                                                 const std::function<double(const Vec&)>& p,
                                                 const CMat& rho_q, double t) {
  g.validate();
  HybridOperatorField f{g, {}, t, 0.0};
  f.ops.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) f.ops.push_back(p(g.point(i)) * rho_q);
  return f;
}

Vec HybridOperatorField::traces() const {
  Vec t(static_cast<Eigen::Index>(ops.size()));
  for (std::size_t i = 0; i < ops.size(); ++i) t(static_cast<Eigen::Index>(i)) = ops[i].trace().real();
  return t;
}

double HybridOperatorField::total_trace() const { return grid.weights().dot(traces()); }

void HybridOperatorField::validate(Role role, double tol) const {
  if (ops.size() != grid.size()) throw InvalidModel("field size does not match its grid");
  const int d = dim();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const CMat& m = ops[i];
    if (m.rows() != d || m.cols() != d) throw InvalidModel("field operators have mixed shapes");
    if (!m.allFinite()) throw InvalidModel("field has non-finite entries at node " + std::to_string(i));
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (hermitian_defect(m) > tol * scale) {
      throw InvalidModel("field operator is not Hermitian at node " + std::to_string(i));
    }
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol * scale) {
      throw InvalidModel("field operator is not PSD at node " + std::to_string(i));
    }
  }
  if (role == Role::density && !(total_trace() > 0.0)) throw InvalidModel("density field has zero trace");
}

cplx inner(const HybridOperatorField& a, const HybridOperatorField& b) {
  if (!(a.grid == b.grid) || a.ops.size() != b.ops.size()) throw Mismatch("fields live on different grids");
  const Vec w = a.grid.weights();
  cplx s = 0.0;
  for (std::size_t i = 0; i < a.ops.size(); ++i) {
    s += w(static_cast<Eigen::Index>(i)) * (a.ops[i].adjoint() * b.ops[i]).trace();
  }
  return s;
}

void HybridModel::validate(const grid::GridSpec& g) const {
  hilbert.validate();
  g.validate();
  const int d = hilbert.dim;
  if (classical.dim_x != g.dims()) throw Mismatch("classical model and grid dimensions differ");
  if (!classical.time_invariant) throw UnsupportedModel("hybrid classical dynamics must be time invariant");
  if (classical.dim_y > 0 && classical.S && classical.S(0.0).cwiseAbs().maxCoeff() != 0.0) {
    throw InvalidModel("hybrid models require S = 0 for the classical variable");
  }
  if (H0.rows() != d || H0.cols() != d || hermitian_defect(H0) > 1e-12 * std::max(1.0, H0.norm())) {
    throw InvalidModel("H0 must be a Hermitian matrix of the Hilbert dimension");
  }
  for (const auto& L : lindblad) {
    if (L.rows() != d || L.cols() != d) throw InvalidModel("Lindblad operator has wrong shape");
  }
  if (R.rows() != R.cols() || R.rows() < 1) throw InvalidModel("R must be a square matrix");
  Eigen::LLT<Mat> llt(R);
  if (llt.info() != Eigen::Success) throw InvalidModel("R must be positive definite");
  if (!measurement) throw InvalidModel("hybrid model has no measurement operators");
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec x = g.point(i);
    const auto c = measurement(x, 0.0);
    if (static_cast<int>(c.size()) != R.rows()) throw InvalidModel("number of measurement operators differs from dim R");
    for (const auto& m : c) {
      if (m.rows() != d || m.cols() != d || !m.allFinite()) throw InvalidModel("measurement operator is invalid");
    }
    if (coupling) {
      const CMat h = coupling(x);
      if (h.rows() != d || hermitian_defect(h) > 1e-12 * std::max(1.0, h.norm())) {
        throw InvalidModel("coupling Hamiltonian must be Hermitian");
      }
    }
  }
}

std::function<std::vector<CMat>(const Vec&, double)> HybridModel::constant_measurement(std::vector<CMat> c) {
  return [c = std::move(c)](const Vec&, double) { return c; };
}

HybridPropagator::HybridPropagator(const HybridModel& model, const grid::GridSpec& g, double dt,
                                   kernels::Exec exec)
    : model_(&model), grid_(g), dt_(dt), exec_(exec) {
  model.validate(g);
  if (!(dt > 0.0)) throw InvalidModel("dt must be positive");
  weights_ = g.weights();
  Rinv_ = model.R.inverse();
  const int d = model.hilbert.dim;
  const std::size_t n = g.size();

  dissipator_ = CMat::Zero(d, d);
  for (const auto& L : model.lindblad) dissipator_ += L.adjoint() * L;
  hamiltonian_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    hamiltonian_[i] = model.H0;
    if (model.coupling) hamiltonian_[i] += model.coupling(g.point(i));
  }
  if (model.time_invariant) {
    c_cache_.resize(n);
    n_cache_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      c_cache_[i] = model.measurement(g.point(i), 0.0);
      CMat N = CMat::Zero(d, d);
      for (std::size_t mu = 0; mu < c_cache_[i].size(); ++mu) {
        for (std::size_t nu = 0; nu < c_cache_[i].size(); ++nu) {
          N += Rinv_(static_cast<Eigen::Index>(mu), static_cast<Eigen::Index>(nu)) *
               c_cache_[i][mu].adjoint() * c_cache_[i][nu];
        }
      }
      n_cache_[i] = N;
    }
  }

  // Upwind finite-volume transport on node masses, zero flux at the boundary.
  const auto& cm = model.classical;
  const int dims = g.dims();
  kernels::Csr a;
  a.rows = a.cols = n;
  a.ptr.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = g.point(i);
    const Vec A = cm.drift(x, 0.0);
    Mat D = Mat::Zero(dims, dims);
    if (cm.dim_w > 0) {
      const Mat B = cm.diffusion(x, 0.0);
      D = B * cm.Q(0.0) * B.transpose();
    }
    const Mat off = D - Mat(D.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, D.cwiseAbs().maxCoeff())) {
      throw UnsupportedModel("hybrid classical transport supports diagonal diffusion only");
    }
    const auto idx = g.unflat(i);
    std::vector<std::pair<std::size_t, double>> row;
    double out_rate = 0.0;
    double worst_ratio = 0.0;
    for (int k = 0; k < dims; ++k) {
      const auto& ax = g.axes[static_cast<std::size_t>(k)];
      const double h = ax.step();
      const double diff = 0.5 * D(k, k) / (h * h);
      worst_ratio = std::max(worst_ratio, dt * D(k, k) / (h * h));
      if (idx[static_cast<std::size_t>(k)] > 0) {
        const double r = diff + std::max(-A(k), 0.0) / h;
        row.emplace_back(i - g.stride(k), r);
        out_rate += r;
      }
      if (idx[static_cast<std::size_t>(k)] + 1 < ax.n) {
        const double r = diff + std::max(A(k), 0.0) / h;
        row.emplace_back(i + g.stride(k), r);
        out_rate += r;
      }
    }
    if (dt * out_rate > 1.0) {
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "explicit transport step is unstable at node %zu: dt*rate=%.3g > 1 "
                    "(dt*D/dx^2=%.3g); reduce dt or coarsen the grid",
                    i, dt * out_rate, worst_ratio);
      throw StabilityError(buf);
    }
    cfl_ = std::max(cfl_, dt * out_rate);
    row.emplace_back(i, 1.0 - dt * out_rate);
    std::sort(row.begin(), row.end());
    for (const auto& [j, r] : row) {
      if (j == i || r != 0.0) {
        a.idx.push_back(static_cast<std::uint32_t>(j));
        a.val.push_back(j == i ? r : dt * r);
      }
    }
    a.ptr.push_back(a.val.size());
  }
  transport_.by_dest = kernels::transpose(a);
  transport_.by_source = std::move(a);
}

std::vector<CMat> HybridPropagator::ops_at(std::size_t i, double t) const {
  if (!c_cache_.empty()) return c_cache_[i];
  return model_->measurement(grid_.point(i), t);
}

HybridOperatorField HybridPropagator::measure_raw(const HybridOperatorField& f, const Vec& dy,
                                                  double t, Direction dir, StepReport* report) const {
  if (dy.size() != Rinv_.rows()) throw Mismatch("dy dimension differs from the number of measurement operators");
  if (!(f.grid == grid_)) throw Mismatch("field grid differs from the propagator grid");
  const Vec a = Rinv_ * dy;
  const int d = f.dim();
  HybridOperatorField out{f.grid, std::vector<CMat>(f.ops.size()), f.t, f.log_scale};
  std::vector<double> norms(f.ops.size(), 0.0);
  kernels::parallel_for(f.ops.size(), exec_, [&](std::size_t i) {
    const std::vector<CMat> c = ops_at(i, t);
    CMat lin = CMat::Zero(d, d);
    for (std::size_t mu = 0; mu < c.size(); ++mu) lin += (0.5 * a(static_cast<Eigen::Index>(mu))) * c[mu];
    CMat N;
    if (!n_cache_.empty()) {
      N = n_cache_[i];
    } else {
      N = CMat::Zero(d, d);
      for (std::size_t mu = 0; mu < c.size(); ++mu)
        for (std::size_t nu = 0; nu < c.size(); ++nu)
          N += Rinv_(static_cast<Eigen::Index>(mu), static_cast<Eigen::Index>(nu)) * c[mu].adjoint() * c[nu];
    }
    const CMat M = CMat::Identity(d, d) + lin - (dt_ / 8.0) * N;
    norms[i] = lin.operatorNorm();
    out.ops[i] = dir == Direction::forward ? CMat(M * f.ops[i] * M.adjoint())
                                           : CMat(M.adjoint() * f.ops[i] * M);
  });
  if (report) {
    for (double v : norms) report->measurement_norm = std::max(report->measurement_norm, v);
  }
  return out;
}

HybridOperatorField HybridPropagator::evolve_raw(const HybridOperatorField& f, Direction dir) const {
  if (!(f.grid == grid_)) throw Mismatch("field grid differs from the propagator grid");
  HybridOperatorField out{f.grid, {}, f.t, f.log_scale};
  if (dir == Direction::forward) {
    kernels::transport_forward(transport_, weights_, f.ops, out.ops, exec_);
    out.t = f.t + dt_;
  } else {
    kernels::transport_adjoint(transport_, f.ops, out.ops, exec_);
    out.t = f.t - dt_;
  }
  const auto& L = model_->lindblad;
  kernels::parallel_for(f.ops.size(), exec_, [&](std::size_t i) {
    const CMat& r = f.ops[i];
    const CMat& H = hamiltonian_[i];
    CMat gen;
    if (dir == Direction::forward) {
      gen = -kI * (H * r - r * H) - 0.5 * (dissipator_ * r + r * dissipator_);
      for (const auto& l : L) gen += l * r * l.adjoint();
    } else {
      gen = kI * (H * r - r * H) - 0.5 * (dissipator_ * r + r * dissipator_);
      for (const auto& l : L) gen += l.adjoint() * r * l;
    }
    out.ops[i] += dt_ * gen;
  });
  return out;
}

HybridOperatorField HybridPropagator::forward_raw(const HybridOperatorField& f, const Vec& dy,
                                                  double t, StepReport* report) const {
  return evolve_raw(measure_raw(f, dy, t, Direction::forward, report), Direction::forward);
}

HybridOperatorField HybridPropagator::backward_raw(const HybridOperatorField& g, const Vec& dy,
                                                   double t) const {
  return measure_raw(evolve_raw(g, Direction::backward), dy, t, Direction::backward);
}

HybridOperatorField measurement_update(const HybridModel& model, const HybridOperatorField& f,
                                       const Vec& dy, double dt, Direction dir, kernels::Exec exec) {
  HybridPropagator prop(model, f.grid, dt, exec);
  const double before = f.total_trace();
  HybridOperatorField out = prop.measure_raw(f, dy, f.t, dir);
  const double after = out.total_trace();
  if (!std::isfinite(after)) throw NumericalFailure("measurement update produced non-finite values", 0);
  if (!(after > 0.0) || !(before > 0.0)) throw Collapse("measurement update produced a zero-trace field");
  const double s = after / before;
  for (auto& m : out.ops) m /= s;
  out.log_scale += std::log(s);
  return out;
}

HybridOperatorField dynamics_step(const HybridModel& model, const HybridOperatorField& f, double dt,
                                  Direction dir, kernels::Exec exec) {
  HybridPropagator prop(model, f.grid, dt, exec);
  return prop.evolve_raw(f, dir);
}

void write_binary(const std::string& path, const HybridOperatorField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open " + path + " for writing");
  grid::write_binary_header(os, f.grid);
  io::BinaryWriter w(os);
  w.u32(static_cast<std::uint32_t>(f.dim()));
  for (const auto& m : f.ops) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        w.f64(m(r, c).real());
        w.f64(m(r, c).imag());
      }
    }
  }
}

HybridOperatorField read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open " + path);
  HybridOperatorField f;
  f.grid = grid::read_binary_header(is);
  io::BinaryReader r(is);
  const int d = static_cast<int>(r.u32());
  f.ops.resize(f.grid.size());
  for (auto& m : f.ops) {
    m.resize(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const double re = r.f64();
        const double im = r.f64();
        m(i, j) = cplx(re, im);
      }
    }
  }
  return f;
}

}  // namespace tsmooth::quantum
