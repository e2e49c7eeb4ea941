#include "tsmooth/gaussian.hpp"

#include <cmath>
#include <utility>

namespace tsmooth::gauss {

namespace {

constexpr double kPsdTol = 1e-10;

void require_linear(const StateSpaceModel& model) {
  if (!model.is_linear()) throw UnsupportedModel("linear-Gaussian smoother requires linear tags");
  if (model.dim_y <= 0) throw UnsupportedModel("linear-Gaussian smoother requires observations");
}

void check_same_time(double a, double b) {
  if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(a))) {
    throw Mismatch("beliefs have different timestamps: " + std::to_string(a) + " vs " +
                   std::to_string(b));
  }
}

// Symmetrize, then clip eigenvalues in [-tol*scale, 0) to zero. Anything more
// negative is reported as a numerical failure.
Mat guard_covariance(const Mat& m, std::size_t step) {
  Mat s = symmetrize(m);
  if (!s.allFinite()) throw NumericalFailure("covariance became non-finite", step);
  Eigen::LLT<Mat> llt(s);
  if (llt.info() == Eigen::Success) return s;
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  Vec ev = es.eigenvalues();
  const double floor = -kPsdTol * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < floor) throw NumericalFailure("covariance lost positive semidefiniteness", step);
  if (ev.minCoeff() >= 0.0) return s;
  ev = ev.cwiseMax(0.0);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

}  // namespace

void GaussianBelief::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw InvalidModel("belief covariance has wrong shape");
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidModel("belief covariance is not symmetric");
  }
  if (!is_psd(cov, kPsdTol)) throw InvalidModel("belief covariance is not PSD");
}

InformationBelief InformationBelief::flat(double t, int dim) {
  return InformationBelief{t, Mat::Zero(dim, dim), Vec::Zero(dim)};
}

void InformationBelief::validate() const {
  if (info_matrix.rows() != info_vector.size() || info_matrix.cols() != info_vector.size()) {
    throw InvalidModel("information matrix has wrong shape");
  }
  if (!is_psd(info_matrix, kPsdTol)) throw InvalidModel("information matrix is not PSD");
}

KalmanStepper::KalmanStepper(const StateSpaceModel& model, GaussianBelief prior, double dt)
    : model_(&model), belief_(std::move(prior)), dt_(dt) {
  require_linear(model);
  if (!(dt > 0.0)) throw InvalidModel("dt must be positive");
  if (belief_.mean.size() != model.dim_x) throw InvalidModel("prior has wrong dimension");
  belief_.validate();
}

Vec KalmanStepper::step(const Vec& dy) {
  const auto& m = *model_;
  const double t = belief_.t;
  const Mat J = m.linear->J(t);
  const Mat K = m.linear->K(t);
  const Mat B = m.diffusion(belief_.mean, t);
  const Mat Q = m.Q(t), R = m.R(t), S = m.S(t);
  const auto n = belief_.mean.size();

  const Mat F = Mat::Identity(n, n) + J * dt_;
  const Mat H = K * dt_;
  const Mat& P = belief_.cov;
  const Vec& x = belief_.mean;

  // Joint Gaussian of (x_{k+1}, dy_k) given the past, then condition on dy_k.
  const Mat Syy = symmetrize(H * P * H.transpose() + R * dt_);
  const Mat Sxy = F * P * H.transpose() + B * S * dt_;
  Eigen::LDLT<Mat> ldlt(Syy);
  if (ldlt.info() != Eigen::Success) throw NumericalFailure("innovation covariance singular", k_);
  const Mat G = ldlt.solve(Sxy.transpose()).transpose();

  const Vec innovation = dy - H * x;
  Vec mean = F * x + G * innovation;
  Mat cov = F * P * F.transpose() + B * Q * B.transpose() * dt_ - G * Syy * G.transpose();
  if (!mean.allFinite()) throw NumericalFailure("filter mean became non-finite", k_);
  cov = guard_covariance(cov, k_);

  ++k_;
  belief_.t = t + dt_;
  belief_.mean = std::move(mean);
  belief_.cov = std::move(cov);
  return innovation;
}

KalmanRun kalman_filter_run(const StateSpaceModel& model, const MeasurementRecord& record,
                            const GaussianBelief& prior) {
  record.validate();
  GaussianBelief p = prior;
  p.t = record.t0;
  KalmanStepper stepper(model, p, record.dt);
  KalmanRun run;
  run.beliefs.reserve(record.steps() + 1);
  run.innovations.reserve(record.steps());
  run.beliefs.push_back(stepper.belief());
  for (const Vec& dy : record.increments) {
    run.innovations.push_back(stepper.step(dy));
    run.beliefs.push_back(stepper.belief());
  }
  return run;
}

std::vector<GaussianBelief> kalman_filter(const StateSpaceModel& model,
                                          const MeasurementRecord& record,
                                          const GaussianBelief& prior) {
  return kalman_filter_run(model, record, prior).beliefs;
}

std::vector<InformationBelief> backward_information_filter(const StateSpaceModel& model,
                                                           const MeasurementRecord& record) {
  require_linear(model);
  record.validate();
  const std::size_t N = record.steps();
  const int n = model.dim_x;
  const double dt = record.dt;
  const DecorrelatedModel dm(model);
  const Mat I = Mat::Identity(n, n);

  std::vector<InformationBelief> out(N + 1);
  out[N] = InformationBelief::flat(record.time(N), n);

  for (std::size_t j = N; j-- > 0;) {
    const double t = record.time(j);
    const Vec x0 = Vec::Zero(n);
    const Mat B = model.diffusion(x0, t);
    const Mat K = model.linear->K(t);
    const Mat J = model.linear->J(t);
    const Mat D = dm.gain(x0, t);
    const Mat W = symmetrize(B * dm.q_eff(t) * B.transpose() * dt);
    const Mat H = K * dt;
    const Mat A = I + J * dt - D * H;  // x_{k+1} = A x_k + D dy_k + noise(W)
    const Vec c = D * record.increments[j];

    const Mat& L = out[j + 1].info_matrix;
    const Vec& nu = out[j + 1].info_vector;

    // Integrate the Gaussian transition against the future likelihood without
    // inverting W: L~ = (I + L W)^-1 L, nu~ = (I + L W)^-1 nu.
    Eigen::PartialPivLU<Mat> lu(I + L * W);
    const Mat Lt = symmetrize(lu.solve(L));
    const Vec nut = lu.solve(nu);

    Eigen::LLT<Mat> rllt(model.R(t));
    const Mat RinvK = rllt.solve(K);
    Mat Lk = A.transpose() * Lt * A + K.transpose() * RinvK * dt;
    Vec nuk = A.transpose() * (nut - Lt * c) + RinvK.transpose() * record.increments[j];
    Lk = symmetrize(Lk);
    if (!Lk.allFinite() || !nuk.allFinite()) {
      throw NumericalFailure("backward information filter became non-finite", j);
    }
    out[j] = InformationBelief{t, std::move(Lk), std::move(nuk)};
  }
  return out;
}

std::vector<GaussianBelief> rts_smooth(const StateSpaceModel& model, const MeasurementRecord& record,
                                       const GaussianBelief& prior) {
  const auto filtered = kalman_filter(model, record, prior);
  const std::size_t N = record.steps();
  const int n = model.dim_x;
  const double dt = record.dt;
  std::vector<GaussianBelief> out(N + 1);
  out[N] = filtered[N];
  for (std::size_t k = N; k-- > 0;) {
    const GaussianBelief& f = filtered[k];
    const GaussianBelief& pred = filtered[k + 1];
    const double t = f.t;
    const Mat F = Mat::Identity(n, n) + model.linear->J(t) * dt;
    const Mat H = model.linear->K(t) * dt;
    const Mat B = model.diffusion(f.mean, t);
    const Mat Syy = symmetrize(H * f.cov * H.transpose() + model.R(t) * dt);
    const Mat Sxy = F * f.cov * H.transpose() + B * model.S(t) * dt;
    Eigen::LDLT<Mat> ldlt(Syy);
    // x_k given dy_0..dy_k, and its covariance with x_{k+1}.
    const Mat PHt = f.cov * H.transpose();
    const Vec m_plus = f.mean + PHt * ldlt.solve(record.increments[k] - H * f.mean);
    const Mat P_plus = f.cov - PHt * ldlt.solve(PHt.transpose());
    const Mat cross = f.cov * F.transpose() - PHt * ldlt.solve(Sxy.transpose());
    const Mat C = Eigen::CompleteOrthogonalDecomposition<Mat>(pred.cov).solve(cross.transpose()).transpose();
    GaussianBelief s;
    s.t = t;
    s.mean = m_plus + C * (out[k + 1].mean - pred.mean);
    s.cov = guard_covariance(P_plus + C * (out[k + 1].cov - pred.cov) * C.transpose(), k);
    if (!s.mean.allFinite()) throw NumericalFailure("smoothed mean became non-finite", k);
    out[k] = std::move(s);
  }
  return out;
}

GaussianBelief mfp_combine(const GaussianBelief& filtered, const InformationBelief& backward) {
  check_same_time(filtered.t, backward.t);
  const auto n = filtered.mean.size();
  if (backward.info_vector.size() != n) throw Mismatch("belief dimensions differ");
  const Mat& Sigma = filtered.cov;
  Eigen::PartialPivLU<Mat> lu(Mat::Identity(n, n) + Sigma * backward.info_matrix);
  GaussianBelief out;
  out.t = filtered.t;
  out.cov = symmetrize(lu.solve(Sigma));
  out.mean = lu.solve(filtered.mean + Sigma * backward.info_vector);
  if (!out.cov.allFinite() || !out.mean.allFinite()) {
    throw IllPosed("fusion of filtered and backward beliefs is ill-posed");
  }
  return out;
}

GaussianBelief retrodict_with_prior(const InformationBelief& backward,
                                    const GaussianBelief& prior) {
  return mfp_combine(prior, backward);
}

GaussianBelief retrodict_with_prior(const InformationBelief& backward,
                                    const InformationBelief& prior) {
  check_same_time(backward.t, prior.t);
  const Mat total = symmetrize(backward.info_matrix + prior.info_matrix);
  Eigen::LLT<Mat> llt(total);
  if (llt.info() != Eigen::Success) {
    throw IllPosed("prior and backward information are jointly singular");
  }
  GaussianBelief out;
  out.t = backward.t;
  out.cov = symmetrize(llt.solve(Mat::Identity(total.rows(), total.cols())));
  out.mean = llt.solve(backward.info_vector + prior.info_vector);
  return out;
}

std::vector<GaussianBelief> mfp_smooth(const std::vector<GaussianBelief>& filtered,
                                       const std::vector<InformationBelief>& backward) {
  if (filtered.size() != backward.size()) throw Mismatch("filtered/backward lengths differ");
  std::vector<GaussianBelief> out;
  out.reserve(filtered.size());
  for (std::size_t k = 0; k < filtered.size(); ++k) out.push_back(mfp_combine(filtered[k], backward[k]));
  return out;
}

SmoothingRun smooth(const StateSpaceModel& model, const MeasurementRecord& record,
                    const GaussianBelief& prior) {
  SmoothingRun run;
  KalmanRun kr = kalman_filter_run(model, record, prior);
  run.filtered = std::move(kr.beliefs);
  run.innovations = std::move(kr.innovations);
  run.backward = backward_information_filter(model, record);
  run.smoothed = mfp_smooth(run.filtered, run.backward);
  return run;
}

}  // namespace tsmooth::gauss
