#include "tsmooth/pll.hpp"

#include "tsmooth/kernels/parallel.hpp"
#include "tsmooth/record_io.hpp"
#include "tsmooth/stats.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

namespace tsmooth::pll {

namespace {

constexpr int kPhi = 2;  // index of phi in z

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Mat augmented_J(const PLLConfig& cfg) {
  const int n = cfg.dim();
  Mat J = Mat::Zero(n, n);
  J(0, 0) = cfg.chi - 0.5 * cfg.gamma;
  J(1, 1) = -cfg.chi - 0.5 * cfg.gamma;
  J.bottomRightCorner(cfg.phase.dim(), cfg.phase.dim()) = cfg.phase.J;
  return J;
}

Mat augmented_B(const PLLConfig& cfg, double theta) {
  const int n = cfg.dim(), nw = 2 + static_cast<int>(cfg.phase.B.cols());
  const double s = std::sqrt(0.5 * cfg.gamma);
  Mat B = Mat::Zero(n, nw);
  B(0, 0) = s * std::sin(theta);
  B(0, 1) = s * std::cos(theta);
  B(1, 0) = s * std::cos(theta);
  B(1, 1) = -s * std::sin(theta);
  B.bottomRightCorner(cfg.phase.dim(), cfg.phase.B.cols()) = cfg.phase.B;
  return B;
}

Mat augmented_Q(const PLLConfig& cfg) {
  const int nw = 2 + static_cast<int>(cfg.phase.Q.rows());
  Mat Q = Mat::Zero(nw, nw);
  Q(0, 0) = Q(1, 1) = 1.0;
  Q.bottomRightCorner(cfg.phase.Q.rows(), cfg.phase.Q.cols()) = cfg.phase.Q;
  return Q;
}

Mat augmented_S(const PLLConfig& cfg) {
  Mat S = Mat::Zero(2 + cfg.phase.Q.rows(), 1);
  S(0, 0) = -1.0;
  return S;
}

double observation_rate(const PLLConfig& cfg, const Vec& z, double theta) {
  return 2.0 * cfg.b * std::sin(theta) +
         std::sqrt(2.0 * cfg.gamma) * (z(0) * std::sin(theta) + z(1) * std::cos(theta));
}

// Phase-only grid model with q, p marginalized: dy = 2b sin(phi - phi') dt + white noise.
class PhaseGridSteps : public grid::StepModel {
 public:
  PhaseGridSteps(const PLLConfig& cfg, const std::vector<Vec>* dy, const std::vector<double>* lo)
      : cfg_(&cfg), grid_(cfg.phase_grid), dy_(dy), lo_(lo) {
    grid_.validate();
    const Mat cov = cfg.phase.B * cfg.phase.Q * cfg.phase.B.transpose() * cfg.dt;
    const double jitter = 1e-12 * std::max(cov.diagonal().mean(), 1e-300);
    kernel_ = std::make_shared<const kernels::TransitionKernel>(kernels::build_gaussian_kernel(
        grid_,
        [&](std::size_t i, Vec& mean, Mat& c) {
          const Vec x = grid_.point(i);
          mean = x + cfg.phase.J * x * cfg.dt;
          c = cov + jitter * Mat::Identity(cov.rows(), cov.cols());
        },
        {}, cfg.exec));
    phi_.resize(static_cast<Eigen::Index>(grid_.size()));
    for (std::size_t i = 0; i < grid_.size(); ++i) phi_(static_cast<Eigen::Index>(i)) = grid_.point(i)(0);
  }

  const grid::GridSpec& grid() const override { return grid_; }
  std::size_t steps() const override { return dy_->size(); }
  double time(std::size_t k) const override { return static_cast<double>(k) * cfg_->dt; }
  Vec log_likelihood(std::size_t k) const override {
    const double dt = cfg_->dt, dy = (*dy_)[k](0), lo = (*lo_)[k];
    Vec out(phi_.size());
    for (Eigen::Index i = 0; i < phi_.size(); ++i) {
      const double r = dy - 2.0 * cfg_->b * std::sin(phi_(i) - lo) * dt;
      out(i) = -0.5 * r * r / dt;
    }
    return out;
  }
  std::shared_ptr<const kernels::TransitionKernel> kernel(std::size_t) const override { return kernel_; }

 private:
  const PLLConfig* cfg_;
  grid::GridSpec grid_;
  const std::vector<Vec>* dy_;
  const std::vector<double>* lo_;
  Vec phi_;
  std::shared_ptr<const kernels::TransitionKernel> kernel_;
};

grid::GridDensity phase_prior_density(const PLLConfig& cfg) {
  const grid::GridSpec g(cfg.phase_grid);
  Eigen::LLT<Mat> llt(cfg.phase_cov);
  if (llt.info() != Eigen::Success) {
    throw InvalidModel("the grid estimator needs a positive definite phase prior covariance");
  }
  const Mat inv = cfg.phase_cov.inverse();
  auto d = grid::GridDensity::from_function(g, [&](const Vec& x) {
    const Vec r = x - cfg.phase_mean;
    return std::exp(-0.5 * r.dot(inv * r));
  });
  d.normalize();
  return d;
}

void finish_errors(PLLRunResult& r) {
  double sf = 0.0, ss = 0.0;
  const std::size_t n = r.truth_phase.size();
  for (std::size_t k = 0; k < n; ++k) {
    sf += std::pow(r.truth_phase[k] - r.filtered_mean[k], 2);
    if (r.smoothed) ss += std::pow(r.truth_phase[k] - r.smoothed_mean[k], 2);
  }
  r.mse_filter = sf / static_cast<double>(n);
  r.mse_smooth = r.smoothed ? ss / static_cast<double>(n) : 0.0;
}

}  // namespace

void PhaseModel::validate() const {
  const int n = dim();
  if (n < 1 || J.cols() != n) throw InvalidModel("phase model J must be square and non-empty");
  if (B.rows() != n || Q.rows() != B.cols() || Q.cols() != B.cols()) {
    throw InvalidModel("phase model B and Q have inconsistent shapes");
  }
  if (!is_psd(Q)) throw InvalidModel("phase noise Q must be PSD");
}

PhaseModel PhaseModel::wiener(double q) { return {Mat::Zero(1, 1), Mat::Identity(1, 1), Mat::Constant(1, 1, q)}; }

PhaseModel PhaseModel::ornstein_uhlenbeck(double rate, double q) {
  return {Mat::Constant(1, 1, -rate), Mat::Identity(1, 1), Mat::Constant(1, 1, q)};
}

void PLLConfig::validate() const {
  if (!(gamma > 0.0)) throw InvalidModel("gamma must be positive");
  if (!(std::abs(chi) < 0.5 * gamma)) throw InvalidModel("|chi| must be below gamma/2 (OPO above threshold)");
  if (!(b >= 0.0)) throw InvalidModel("b must be non-negative");
  if (!(dt > 0.0)) throw InvalidModel("dt must be positive");
  if ((0.5 * gamma + std::abs(chi)) * dt >= 1.0) {
    throw StabilityError("(gamma/2 + |chi|) dt must be below 1 for the explicit quadrature step");
  }
  phase.validate();
  if (phase_mean.size() != phase.dim() || phase_cov.rows() != phase.dim() || phase_cov.cols() != phase.dim()) {
    throw InvalidModel("phase prior has the wrong dimension");
  }
  if (!is_psd(phase_cov)) throw InvalidModel("phase prior covariance must be PSD");
  if (estimator == Estimator::grid) {
    if (chi != 0.0) throw UnsupportedModel("the grid estimator marginalizes q, p and requires chi = 0");
    if (static_cast<int>(phase_grid.size()) != phase.dim()) throw InvalidModel("phase grid needs one axis per phase dimension");
  }
}

double stationary_var_q(const PLLConfig& cfg) { return cfg.gamma / (4.0 * (0.5 * cfg.gamma - cfg.chi)); }
double stationary_var_p(const PLLConfig& cfg) { return cfg.gamma / (4.0 * (0.5 * cfg.gamma + cfg.chi)); }

StateSpaceModel build_equivalent_model(const PLLConfig& cfg, std::function<double(double)> lo) {
  cfg.validate();
  StateSpaceModel m;
  m.dim_x = cfg.dim();
  m.dim_w = 2 + static_cast<int>(cfg.phase.B.cols());
  m.dim_y = 1;
  const Mat J = augmented_J(cfg), Q = augmented_Q(cfg), S = augmented_S(cfg);
  m.drift = [J](const Vec& z, double) -> Vec { return J * z; };
  m.diffusion = [cfg, lo](const Vec& z, double t) -> Mat { return augmented_B(cfg, z(kPhi) - lo(t)); };
  m.observation = [cfg, lo](const Vec& z, double t) -> Vec {
    return Vec::Constant(1, observation_rate(cfg, z, z(kPhi) - lo(t)));
  };
  m.Q = [Q](double) { return Q; };
  m.R = [](double) { return Mat::Identity(1, 1); };
  m.S = [S](double) { return S; };
  m.time_invariant = false;
  return m;
}

StateSpaceModel linearized_model(const PLLConfig& cfg) {
  cfg.validate();
  Mat K = Mat::Zero(1, cfg.dim());
  K(0, 1) = std::sqrt(2.0 * cfg.gamma);
  K(0, kPhi) = 2.0 * cfg.b;
  return StateSpaceModel::linear_time_invariant(augmented_J(cfg), augmented_B(cfg, 0.0), K, augmented_Q(cfg),
                                                Mat::Identity(1, 1), augmented_S(cfg));
}

gauss::GaussianBelief augmented_prior(const PLLConfig& cfg) {
  gauss::GaussianBelief p{0.0, Vec::Zero(cfg.dim()), Mat::Zero(cfg.dim(), cfg.dim())};
  p.mean.tail(cfg.phase.dim()) = cfg.phase_mean;
  p.cov(0, 0) = stationary_var_q(cfg);
  p.cov(1, 1) = stationary_var_p(cfg);
  p.cov.bottomRightCorner(cfg.phase.dim(), cfg.phase.dim()) = cfg.phase_cov;
  return p;
}

PLLRunResult run_closed_loop(const PLLConfig& cfg) {
  cfg.validate();
  const std::size_t N = cfg.steps;
  const double dt = cfg.dt, sdt = std::sqrt(dt);
  const int nw = static_cast<int>(cfg.phase.B.cols());
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;

  const gauss::GaussianBelief prior = augmented_prior(cfg);
  const Mat prior_sqrt = psd_sqrt(prior.cov);
  const Mat w_sqrt = psd_sqrt(cfg.phase.Q);
  const Mat J = augmented_J(cfg);
  Vec z(cfg.dim());
  {
    Vec n(cfg.dim());
    for (int i = 0; i < cfg.dim(); ++i) n(i) = normal(rng);
    z = prior.mean + prior_sqrt * n;
  }

  PLLRunResult r;
  r.record.t0 = 0.0;
  r.record.dt = dt;
  r.record.increments.reserve(N);
  r.record.truth.reserve(N + 1);
  r.record.truth.push_back(z);

  const bool use_grid = cfg.estimator == Estimator::grid;
  std::unique_ptr<gauss::KalmanStepper> kf;
  std::unique_ptr<PhaseGridSteps> gsteps;
  grid::GridDensity gf;
  StateSpaceModel lin;
  if (use_grid) {
    gsteps = std::make_unique<PhaseGridSteps>(cfg, &r.record.increments, &r.lo_phase);
    gf = phase_prior_density(cfg);
  } else {
    lin = linearized_model(cfg);
    kf = std::make_unique<gauss::KalmanStepper>(lin, prior, dt);
  }

  auto record_belief = [&] {
    if (use_grid) {
      r.filtered_mean.push_back(gf.mean()(0));
      r.filtered_var.push_back(gf.covariance()(0, 0));
      r.grid_filtered.push_back(gf);
    } else {
      r.filtered_mean.push_back(kf->belief().mean(kPhi));
      r.filtered_var.push_back(kf->belief().cov(kPhi, kPhi));
    }
  };

  Vec w(2 + nw), wn(nw);
  for (std::size_t k = 0; k < N; ++k) {
    record_belief();
    const double lo = r.filtered_mean.back();
    r.lo_phase.push_back(lo);
    r.truth_phase.push_back(z(kPhi));
    const double theta = z(kPhi) - lo;
    r.residual_max = std::max(r.residual_max, std::abs(theta));

    w(0) = sdt * normal(rng);
    w(1) = sdt * normal(rng);
    for (int i = 0; i < nw; ++i) wn(i) = normal(rng);
    w.tail(nw) = sdt * (w_sqrt * wn);
    const double dy = observation_rate(cfg, z, theta) * dt - w(0);
    z = z + J * z * dt + augmented_B(cfg, theta) * w;
    r.record.increments.push_back(Vec::Constant(1, dy));
    r.record.truth.push_back(z);

    if (use_grid) {
      gf = grid::forward_step(*gsteps, k, gf, cfg.exec);
    } else {
      const Vec innov = kf->step(Vec::Constant(1, dy + 2.0 * cfg.b * lo * dt));
      r.innovations.push_back(innov(0));
    }
    if (!std::isfinite(z.squaredNorm())) throw NumericalFailure("PLL truth diverged", k);
  }
  record_belief();
  r.truth_phase.push_back(z(kPhi));

  if (r.residual_max > cfg.residual_threshold) {
    std::ostringstream os;
    os << "linearization residual max|phi - phi'| = " << r.residual_max << " exceeds " << cfg.residual_threshold;
    r.warnings.push_back(os.str());
  }
  finish_errors(r);
  return r;
}

void smooth_phase(const PLLConfig& cfg, PLLRunResult& r) {
  const std::size_t N = r.record.steps();
  r.smoothed_mean.assign(N + 1, 0.0);
  r.smoothed_var.assign(N + 1, 0.0);
  if (cfg.estimator == Estimator::grid) {
    PhaseGridSteps steps(cfg, &r.record.increments, &r.lo_phase);
    const auto back = grid::backward_pass(steps, cfg.exec);
    for (std::size_t k = 0; k <= N; ++k) {
      const auto h = grid::combine(r.grid_filtered[k], back.densities[k]);
      r.smoothed_mean[k] = h.mean()(0);
      r.smoothed_var[k] = h.covariance()(0, 0);
    }
  } else {
    MeasurementRecord tilde = r.record;
    tilde.truth.clear();
    for (std::size_t k = 0; k < N; ++k) tilde.increments[k](0) += 2.0 * cfg.b * r.lo_phase[k] * cfg.dt;
    // The decorrelated p quadrature is noise free and unstable, so its backward
    // information overflows on long records; the covariance form does not.
    const auto smoothed = gauss::rts_smooth(linearized_model(cfg), tilde, augmented_prior(cfg));
    for (std::size_t k = 0; k <= N; ++k) {
      r.smoothed_mean[k] = smoothed[k].mean(kPhi);
      r.smoothed_var[k] = smoothed[k].cov(kPhi, kPhi);
    }
  }
  r.smoothed = true;
  finish_errors(r);
}

PLLRunResult run(const PLLConfig& cfg) {
  PLLRunResult r = run_closed_loop(cfg);
  smooth_phase(cfg, r);
  return r;
}

QuadratureStats quadrature_statistics(const PLLConfig& cfg, std::size_t steps, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double dt = cfg.dt, s = std::sqrt(0.5 * cfg.gamma * dt);
  const double aq = 1.0 + (cfg.chi - 0.5 * cfg.gamma) * dt, ap = 1.0 + (-cfg.chi - 0.5 * cfg.gamma) * dt;
  double q = std::sqrt(stationary_var_q(cfg)) * normal(rng);
  double p = std::sqrt(stationary_var_p(cfg)) * normal(rng);
  double sq = 0.0, sp = 0.0, sqq = 0.0, spp = 0.0, sqp = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    // Rotated basis with theta = 0: q picks the second component, p the first.
    const double du = normal(rng), dv = normal(rng);
    q = aq * q + s * dv;
    p = ap * p + s * du;
    sq += q;
    sp += p;
    sqq += q * q;
    spp += p * p;
    sqp += q * p;
  }
  const double n = static_cast<double>(steps);
  QuadratureStats out;
  out.samples = steps;
  out.var_q = (sqq - sq * sq / n) / (n - 1);
  out.var_p = (spp - sp * sp / n) / (n - 1);
  out.cov_qp = (sqp - sq * sp / n) / (n - 1);
  return out;
}

SweepResult evaluate(const PLLConfig& cfg, const Sweep& sweep) {
  if (sweep.seeds.empty()) throw InvalidModel("sweep needs at least one seed");
  std::vector<double> values = sweep.values;
  if (sweep.param == SweepParam::seed || values.empty()) values = {0.0};
  std::vector<PLLConfig> cfgs;
  for (double v : values) {
    for (auto seed : sweep.seeds) {
      PLLConfig c = cfg;
      c.seed = seed;
      c.exec = kernels::Exec::serial;
      switch (sweep.param) {
        case SweepParam::b: c.b = v; break;
        case SweepParam::chi: c.chi = v; break;
        case SweepParam::phase_noise: c.phase.Q = cfg.phase.Q * v; break;
        case SweepParam::seed: break;
      }
      c.validate();
      cfgs.push_back(std::move(c));
    }
  }
  SweepResult out;
  out.rows.resize(cfgs.size());
  kernels::parallel_for(cfgs.size(), cfg.exec, [&](std::size_t i) {
    const auto r = run(cfgs[i]);
    out.rows[i] = {values[i / sweep.seeds.size()], cfgs[i].seed, r.mse_filter, r.mse_smooth, r.residual_max};
  });
  for (std::size_t v = 0; v < values.size(); ++v) {
    std::vector<double> f, s;
    for (std::size_t j = 0; j < sweep.seeds.size(); ++j) {
      f.push_back(out.rows[v * sweep.seeds.size() + j].mse_filter);
      s.push_back(out.rows[v * sweep.seeds.size() + j].mse_smooth);
    }
    out.summary.push_back({values[v], f.size(), stats::mean(f), stats::standard_error(f), stats::mean(s),
                           stats::standard_error(s)});
  }
  return out;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "param,seed,mse_filter,mse_smooth,resid_max\n";
  for (const auto& r : rows) {
    os << io::format_double(r.param) << ',' << r.seed << ',' << io::format_double(r.mse_filter) << ','
       << io::format_double(r.mse_smooth) << ',' << io::format_double(r.resid_max) << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SweepSummary>& summary) {
  os << "param,n,mse_filter_mean,mse_filter_se,mse_smooth_mean,mse_smooth_se\n";
  for (const auto& s : summary) {
    os << io::format_double(s.param) << ',' << s.n << ',' << io::format_double(s.mse_filter_mean) << ','
       << io::format_double(s.mse_filter_se) << ',' << io::format_double(s.mse_smooth_mean) << ','
       << io::format_double(s.mse_smooth_se) << '\n';
  }
}

void write_run_csv(std::ostream& os, const PLLRunResult& r) {
  os << "t,phi,phi_lo,filtered_mean,filtered_var,smoothed_mean,smoothed_var\n";
  const std::size_t n = r.truth_phase.size();
  for (std::size_t k = 0; k < n; ++k) {
    os << io::format_double(r.record.time(k)) << ',' << io::format_double(r.truth_phase[k]) << ','
       << (k < r.lo_phase.size() ? io::format_double(r.lo_phase[k]) : std::string()) << ','
       << io::format_double(r.filtered_mean[k]) << ',' << io::format_double(r.filtered_var[k]) << ','
       << (r.smoothed ? io::format_double(r.smoothed_mean[k]) : std::string()) << ','
       << (r.smoothed ? io::format_double(r.smoothed_var[k]) : std::string()) << '\n';
  }
}

}  // namespace tsmooth::pll
