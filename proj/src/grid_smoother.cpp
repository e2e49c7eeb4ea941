#include "tsmooth/grid_smoother.hpp"

#include <cmath>
#include <cstdio>

namespace tsmooth::grid {

namespace {

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

void note_boundary(Diagnostics& diag, const GridDensity& d, double threshold) {
  const double frac = boundary_mass_fraction(d.grid, d.values);
  if (frac > diag.max_boundary_fraction) diag.max_boundary_fraction = frac;
  if (frac > threshold && diag.warnings.empty()) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "boundary mass fraction %.3g at t=%.6g exceeds %.3g", frac, d.t,
                  threshold);
    diag.warnings.emplace_back(buf);
  }
}

}  // namespace

GaussianKernelSteps::GaussianKernelSteps(DecorrelatedModel dmodel, const MeasurementRecord& record,
                                         GridSpec grid, GridSmootherOptions opts)
    : dmodel_(std::move(dmodel)), record_(&record), grid_(std::move(grid)), opts_(opts) {
  grid_.validate(opts_.grid_cap);
  record.validate();
  const auto& base = dmodel_.base();
  if (grid_.dims() != base.dim_x) {
    throw Mismatch("grid has " + std::to_string(grid_.dims()) + " dimensions, model state has " +
                   std::to_string(base.dim_x));
  }
  base.validate(record.t0);
  nodes_.reserve(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) nodes_.push_back(grid_.point(i));
  if (base.time_invariant) {
    drift_rate_.reserve(nodes_.size());
    for (const auto& x : nodes_) drift_rate_.push_back(base.observation(x, record.t0));
  }
  cacheable_ = opts_.cache_kernel && base.time_invariant && dmodel_.uncorrelated(record.t0);
}

Vec GaussianKernelSteps::log_likelihood(std::size_t k) const {
  const auto& base = dmodel_.base();
  const double t = record_->time(k), dt = record_->dt;
  const Vec& dy = record_->increments[k];
  Eigen::LLT<Mat> llt(base.R(t) * dt);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double c = -0.5 * (static_cast<double>(dy.size()) * std::log(2.0 * kPi) + logdet);
  Vec out(static_cast<Eigen::Index>(nodes_.size()));
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Vec mean = (drift_rate_.empty() ? base.observation(nodes_[i], t) : drift_rate_[i]) * dt;
    const Vec r = dy - mean;
    out(static_cast<Eigen::Index>(i)) = c - 0.5 * r.dot(llt.solve(r));
  }
  return out;
}

std::shared_ptr<const kernels::TransitionKernel> GaussianKernelSteps::build(std::size_t k) const {
  const double t = record_->time(k), dt = record_->dt;
  const Vec& dy = record_->increments[k];
  auto source = [&](std::size_t i, Vec& mean, Mat& cov) {
    TransitionParams tp = dmodel_.transition(nodes_[i], dy, t, dt, opts_.transition);
    if (tp.regularized) regularized_.store(true);
    mean = std::move(tp.mean);
    cov = std::move(tp.cov);
  };
  try {
    return std::make_shared<const kernels::TransitionKernel>(
        kernels::build_gaussian_kernel(grid_, source, opts_.kernel, opts_.exec));
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(e.what(), k);
  }
}

std::shared_ptr<const kernels::TransitionKernel> GaussianKernelSteps::kernel(std::size_t k) const {
  if (!cacheable_) return build(k);
  if (!cache_) cache_ = build(k);
  return cache_;
}

GridDensity forward_step(const StepModel& model, std::size_t k, const GridDensity& f,
                         kernels::Exec exec) {
  const Vec w = model.grid().weights();
  const Vec ll = model.log_likelihood(k);
  const double lmax = ll.maxCoeff();
  const Vec weighted = f.values.cwiseProduct((ll.array() - lmax).exp().matrix());
  GridDensity out{f.grid, Vec(), model.time(k + 1), f.log_scale + lmax};
  kernels::apply_forward(*model.kernel(k), w, weighted, out.values, exec);
  const double z = w.dot(out.values);
  if (!std::isfinite(z)) throw NumericalFailure("forward density became non-finite", k);
  if (!(z > 0.0)) throw Collapse("forward density collapsed to zero at step " + std::to_string(k));
  out.values /= z;
  out.log_scale += std::log(z);
  return out;
}

GridDensity backward_step(const StepModel& model, std::size_t k, const GridDensity& g_next,
                          kernels::Exec exec) {
  const Vec ll = model.log_likelihood(k);
  const double lmax = ll.maxCoeff();
  GridDensity out{g_next.grid, Vec(), model.time(k), g_next.log_scale + lmax};
  kernels::apply_adjoint(*model.kernel(k), g_next.values, out.values, exec);
  out.values = out.values.cwiseProduct((ll.array() - lmax).exp().matrix());
  const double s = out.values.maxCoeff();
  if (!std::isfinite(s)) throw NumericalFailure("backward likelihood became non-finite", k);
  if (!(s > 0.0)) throw Collapse("backward likelihood collapsed to zero at step " + std::to_string(k));
  out.values /= s;
  out.log_scale += std::log(s);
  return out;
}

PassResult forward_pass(const StepModel& model, const GridDensity& prior, kernels::Exec exec,
                        double boundary_threshold) {
  if (!(prior.grid == model.grid())) throw Mismatch("prior grid differs from the model grid");
  prior.validate();
  PassResult r;
  r.densities.reserve(model.steps() + 1);
  GridDensity f0 = prior;
  f0.t = model.time(0);
  r.densities.push_back(std::move(f0));
  note_boundary(r.diagnostics, r.densities.back(), boundary_threshold);
  for (std::size_t k = 0; k < model.steps(); ++k) {
    r.densities.push_back(forward_step(model, k, r.densities.back(), exec));
    note_boundary(r.diagnostics, r.densities.back(), boundary_threshold);
  }
  return r;
}

PassResult backward_pass(const StepModel& model, kernels::Exec exec) {
  const std::size_t N = model.steps();
  PassResult r;
  r.densities.resize(N + 1);
  r.densities[N] = GridDensity::constant(model.grid(), 1.0, model.time(N));
  for (std::size_t k = N; k-- > 0;) r.densities[k] = backward_step(model, k, r.densities[k + 1], exec);
  return r;
}

PassResult forward_pass(const DecorrelatedModel& dmodel, const MeasurementRecord& record,
                        const GridDensity& prior, const GridSmootherOptions& opts) {
  GaussianKernelSteps steps(dmodel, record, prior.grid, opts);
  PassResult r = forward_pass(steps, prior, opts.exec, opts.boundary_threshold);
  r.diagnostics.regularized = steps.regularized();
  return r;
}

PassResult backward_pass(const DecorrelatedModel& dmodel, const MeasurementRecord& record,
                         const GridSpec& grid, const GridSmootherOptions& opts) {
  GaussianKernelSteps steps(dmodel, record, grid, opts);
  PassResult r = backward_pass(steps, opts.exec);
  r.diagnostics.regularized = steps.regularized();
  return r;
}

GridDensity combine(const GridDensity& f, const GridDensity& g) {
  if (!(f.grid == g.grid)) throw Mismatch("cannot combine densities on different grids");
  if (!same_time(f.t, g.t)) throw Mismatch("cannot combine densities at different times");
  GridDensity h{f.grid, f.values.cwiseProduct(g.values), f.t, 0.0};
  const double z = f.grid.weights().dot(h.values);
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw Degenerate("forward and backward densities do not overlap at t=" + std::to_string(f.t));
  }
  h.values /= z;
  return h;
}

double conservation_check(const std::vector<GridDensity>& fs, const std::vector<GridDensity>& gs) {
  if (fs.size() != gs.size() || fs.empty()) throw Mismatch("conservation check needs matched sequences");
  std::vector<double> logs(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k) {
    const double ip = fs[k].grid.weights().dot(fs[k].values.cwiseProduct(gs[k].values));
    if (!(ip > 0.0)) throw Degenerate("zero overlap at step " + std::to_string(k));
    logs[k] = std::log(ip) + fs[k].log_scale + gs[k].log_scale;
  }
  double drift = 0.0;
  for (double l : logs) drift = std::max(drift, std::abs(std::expm1(l - logs.back())));
  return drift;
}

GridSmoothingRun smooth(const StepModel& model, const GridDensity& prior, kernels::Exec exec,
                        double boundary_threshold) {
  GridSmoothingRun run;
  PassResult f = forward_pass(model, prior, exec, boundary_threshold);
  PassResult g = backward_pass(model, exec);
  run.filtered = std::move(f.densities);
  run.backward = std::move(g.densities);
  run.diagnostics = std::move(f.diagnostics);
  run.smoothed.reserve(run.filtered.size());
  for (std::size_t k = 0; k < run.filtered.size(); ++k) {
    run.smoothed.push_back(combine(run.filtered[k], run.backward[k]));
  }
  return run;
}

GridSmoothingRun smooth(const DecorrelatedModel& dmodel, const MeasurementRecord& record,
                        const GridDensity& prior, const GridSmootherOptions& opts) {
  GaussianKernelSteps steps(dmodel, record, prior.grid, opts);
  GridSmoothingRun run = smooth(steps, prior, opts.exec, opts.boundary_threshold);
  run.diagnostics.regularized = steps.regularized();
  return run;
}

}  // namespace tsmooth::grid
