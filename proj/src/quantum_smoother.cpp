#include "tsmooth/quantum_smoother.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace tsmooth::quantum {

namespace {

double max_node_trace(const HybridOperatorField& f) {
  double m = 0.0;
  for (const auto& op : f.ops) m = std::max(m, std::abs(op.trace().real()));
  return m;
}

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  const Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

grid::GridDensity trace_density(const HybridOperatorField& f) {
  return grid::GridDensity{f.grid, f.traces(), f.t, f.log_scale};
}

}  // namespace

double top_level_population(const HybridOperatorField& f) {
  const Vec w = f.grid.weights();
  const int d = f.dim();
  double top = 0.0, total = 0.0;
  for (std::size_t i = 0; i < f.ops.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i));
    top += wi * f.ops[i](d - 1, d - 1).real();
    total += wi * f.ops[i].trace().real();
  }
  if (!(total > 0.0)) throw Degenerate("field has zero trace");
  return top / total;
}

grid::GridDensity combine(const HybridOperatorField& f, const HybridOperatorField& g) {
  if (!(f.grid == g.grid) || f.ops.size() != g.ops.size()) throw Mismatch("fields live on different grids");
  if (std::abs(f.t - g.t) > 1e-9 * std::max(1.0, std::abs(f.t))) throw Mismatch("fields have different times");
  grid::GridDensity h{f.grid, Vec(static_cast<Eigen::Index>(f.ops.size())), f.t, 0.0};
  for (std::size_t i = 0; i < f.ops.size(); ++i) {
    h.values(static_cast<Eigen::Index>(i)) = (g.ops[i] * f.ops[i]).trace().real();
  }
  const double mass = f.grid.weights().dot(h.values);
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw Degenerate("forward and backward fields have no overlap at t=" + std::to_string(f.t));
  }
  h.values /= mass;
  return h;
}

std::pair<double, double> expectations(const HybridOperatorField& f, const HybridOperatorField& g,
                                       const CMat& observable) {
  if (!(f.grid == g.grid) || f.ops.size() != g.ops.size()) throw Mismatch("fields live on different grids");
  if (observable.rows() != f.dim() || observable.cols() != f.dim()) throw Mismatch("observable has wrong shape");
  if ((observable - observable.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, observable.norm())) {
    throw InvalidModel("observable must be Hermitian");
  }
  const Vec w = f.grid.weights();
  double num_f = 0.0, den_f = 0.0, num_s = 0.0, den_s = 0.0;
  for (std::size_t i = 0; i < f.ops.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i));
    const CMat of = observable * f.ops[i];
    num_f += wi * of.trace().real();
    den_f += wi * f.ops[i].trace().real();
    num_s += wi * (g.ops[i] * of).trace().real();
    den_s += wi * (g.ops[i] * f.ops[i]).trace().real();
  }
  if (!(std::abs(den_f) > 0.0) || !(std::abs(den_s) > 0.0)) throw Degenerate("expectation denominator vanishes");
  return {num_f / den_f, num_s / den_s};
}

QuantumSmoothingRun smooth(const HybridModel& model, const MeasurementRecord& record,
                           const HybridOperatorField& prior, const QuantumSmootherOptions& opts) {
  record.validate();
  prior.validate(Role::density);
  for (const auto& dy : record.increments) {
    if (dy.size() != model.dim_y()) throw Mismatch("record dimension differs from the measurement count");
  }
  const HybridPropagator prop(model, prior.grid, record.dt, opts.exec);
  const std::size_t n = record.steps();
  const bool oscillator = model.hilbert.kind == HilbertKind::oscillator;

  QuantumSmoothingRun run;
  auto& diag = run.diagnostics;
  diag.cfl = prop.cfl();

  HybridOperatorField f = prior;
  f.t = record.time(0);
  {
    const double s = f.total_trace();
    for (auto& m : f.ops) m /= s;
    f.log_scale += std::log(s);
  }
  run.forward.reserve(n + 1);
  run.forward.push_back(f);
  StepReport report;
  for (std::size_t k = 0; k < n; ++k) {
    HybridOperatorField next = prop.forward_raw(run.forward.back(), record.increments[k], record.time(k), &report);
    next.t = record.time(k + 1);
    const double s = next.total_trace();
    if (!std::isfinite(s)) throw NumericalFailure("forward hybrid field is not finite", k);
    if (!(s > 0.0)) throw Collapse("forward hybrid field lost all trace at step " + std::to_string(k));
    for (auto& m : next.ops) m /= s;
    next.log_scale += std::log(s);
    run.forward.push_back(std::move(next));
  }
  diag.max_measurement_norm = report.measurement_norm;

  std::vector<HybridOperatorField> gs(n + 1);
  gs[n] = HybridOperatorField::uniform(prior.grid, model.hilbert.identity(), record.time(n));
  for (std::size_t k = n; k-- > 0;) {
    HybridOperatorField g = prop.backward_raw(gs[k + 1], record.increments[k], record.time(k));
    g.t = record.time(k);
    const double s = max_node_trace(g);
    if (!std::isfinite(s)) throw NumericalFailure("backward hybrid field is not finite", k);
    if (!(s > 0.0)) throw Collapse("backward hybrid field vanished at step " + std::to_string(k));
    for (auto& m : g.ops) m /= s;
    g.log_scale += std::log(s);
    gs[k] = std::move(g);
  }

  std::vector<double> overlaps(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const HybridOperatorField& fk = run.forward[k];
    run.filtered.push_back(trace_density(fk));
    run.filtered.back().normalize();
    run.backward_traces.push_back(trace_density(gs[k]));
    run.smoothed.push_back(combine(fk, gs[k]));
    overlaps[k] = std::log(inner(gs[k], fk).real()) + fk.log_scale + gs[k].log_scale;
    if (oscillator) diag.max_top_population = std::max(diag.max_top_population, top_level_population(fk));
  }
  const double ref = overlaps[n];
  for (double o : overlaps) diag.conservation_drift = std::max(diag.conservation_drift, std::abs(std::expm1(o - ref)));

  if (opts.keep_backward_fields) run.backward = std::move(gs);

  if (oscillator && diag.max_top_population > opts.truncation_threshold) {
    std::ostringstream os;
    os << "top Fock level population " << diag.max_top_population << " exceeds "
       << opts.truncation_threshold << "; increase the Hilbert dimension";
    diag.warnings.push_back(os.str());
  }
  if (diag.max_measurement_norm > opts.measurement_norm_threshold) {
    std::ostringstream os;
    os << "measurement operator norm " << diag.max_measurement_norm
       << " is not small; the first-order measurement map is inaccurate at this dt";
    diag.warnings.push_back(os.str());
  }
  return run;
}

HybridTrajectory simulate_hybrid(const HybridModel& model, const PriorSampler& prior_x,
                                 const CMat& rho0, double dt, std::size_t steps, std::uint64_t seed,
                                 double t0) {
  if (!(dt > 0.0)) throw InvalidModel("dt must be positive");
  const int d = model.hilbert.dim;
  if (rho0.rows() != d || rho0.cols() != d) throw Mismatch("initial state has wrong shape");
  const auto& cm = model.classical;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto gaussian = [&](int n) {
    Vec z(n);
    for (int i = 0; i < n; ++i) z(i) = normal(rng);
    return z;
  };

  HybridTrajectory out;
  out.record.t0 = t0;
  out.record.dt = dt;
  Vec x = prior_x(rng);
  if (x.size() != cm.dim_x) throw Mismatch("prior sample has wrong dimension");
  CMat rho = rho0 / rho0.trace().real();
  const Mat r_sqrt = psd_sqrt(model.R * dt);
  const int ny = model.dim_y();
  CMat dissipator = CMat::Zero(d, d);
  for (const auto& L : model.lindblad) dissipator += L.adjoint() * L;
  const cplx i_unit(0.0, 1.0);

  out.record.truth.push_back(x);
  out.rho.push_back(rho);
  const Mat Rinv = model.R.inverse();
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const std::vector<CMat> c = model.measurement(x, t);
    Vec mean(ny);
    for (int mu = 0; mu < ny; ++mu) {
      mean(mu) = 0.5 * (c[static_cast<std::size_t>(mu)] + c[static_cast<std::size_t>(mu)].adjoint())
                           .cwiseProduct(rho.transpose())
                           .sum()
                           .real() *
                 dt;
    }
    const Vec dy = mean + r_sqrt * gaussian(ny);
    out.record.increments.push_back(dy);

    const Vec a = Rinv * dy;
    CMat M = CMat::Identity(d, d);
    for (int mu = 0; mu < ny; ++mu) {
      M += 0.5 * a(mu) * c[static_cast<std::size_t>(mu)];
      for (int nu = 0; nu < ny; ++nu) {
        M -= (dt / 8.0) * Rinv(mu, nu) * c[static_cast<std::size_t>(mu)].adjoint() * c[static_cast<std::size_t>(nu)];
      }
    }
    rho = M * rho * M.adjoint();
    const double tr = rho.trace().real();
    if (!(tr > 0.0) || !std::isfinite(tr)) throw NumericalFailure("conditional state lost its trace", k);
    rho /= tr;

    CMat H = model.H0;
    if (model.coupling) H += model.coupling(x);
    CMat gen = -i_unit * (H * rho - rho * H) - 0.5 * (dissipator * rho + rho * dissipator);
    for (const auto& L : model.lindblad) gen += L * rho * L.adjoint();
    rho += dt * gen;
    rho = 0.5 * (rho + rho.adjoint());
    rho /= rho.trace().real();

    Vec dx = cm.drift(x, t) * dt;
    if (cm.dim_w > 0) dx += cm.diffusion(x, t) * (psd_sqrt(cm.Q(t) * dt) * gaussian(cm.dim_w));
    x += dx;
    out.record.truth.push_back(x);
    out.rho.push_back(rho);
  }
  return out;
}

}  // namespace tsmooth::quantum
