#include "tsmooth/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace tsmooth {

namespace {

bool is_symmetric(const Mat& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

void require_shape(const Mat& m, Eigen::Index r, Eigen::Index c, const char* name) {
  if (m.rows() != r || m.cols() != c) {
    throw InvalidModel(std::string(name) + " has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" +
                       std::to_string(c));
  }
}

Mat joint_covariance(const Mat& Q, const Mat& R, const Mat& S) {
  const auto w = Q.rows();
  const auto y = R.rows();
  Mat joint(w + y, w + y);
  joint.topLeftCorner(w, w) = Q;
  joint.topRightCorner(w, y) = S;
  joint.bottomLeftCorner(y, w) = S.transpose();
  joint.bottomRightCorner(y, y) = R;
  return joint;
}

}  // namespace

bool is_psd(const Mat& m, double tol) {
  if (m.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double floor = -tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
  return ev.minCoeff() >= floor;
}

void StateSpaceModel::validate(double t) const {
  if (dim_x <= 0 || dim_w < 0 || dim_y < 0) throw InvalidModel("model dimensions must be positive");
  if (!drift || !diffusion || !Q) throw InvalidModel("model is missing drift/diffusion/Q");
  const Mat q = Q(t);
  require_shape(q, dim_w, dim_w, "Q");
  if (!is_symmetric(q)) throw InvalidModel("Q is not symmetric");
  if (!is_psd(q, 1e-12)) throw InvalidModel("Q is not positive semidefinite");
  const Vec x0 = Vec::Zero(dim_x);
  require_shape(diffusion(x0, t), dim_x, dim_w, "B");
  if (drift(x0, t).size() != dim_x) throw InvalidModel("A has wrong dimension");

  if (dim_y > 0) {
    if (!observation || !R || !S) throw InvalidModel("model is missing C/R/S");
    const Mat r = R(t);
    const Mat s = S(t);
    require_shape(r, dim_y, dim_y, "R");
    require_shape(s, dim_w, dim_y, "S");
    if (!is_symmetric(r)) throw InvalidModel("R is not symmetric");
    Eigen::LLT<Mat> llt(r);
    if (llt.info() != Eigen::Success) throw InvalidModel("R is not positive definite");
    if (!is_psd(joint_covariance(q, r, s), 1e-12)) {
      throw InvalidModel("joint noise covariance [[Q,S],[S^T,R]] is not positive semidefinite");
    }
    if (observation(x0, t).size() != dim_y) throw InvalidModel("C has wrong dimension");
  }

  if (linear) {
    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> nd;
    const Mat J = linear->J(t);
    require_shape(J, dim_x, dim_x, "J");
    Mat K;
    if (dim_y > 0) {
      K = linear->K(t);
      require_shape(K, dim_y, dim_x, "K");
    }
    for (int probe = 0; probe < 3; ++probe) {
      Vec x(dim_x);
      for (int i = 0; i < dim_x; ++i) x(i) = nd(rng);
      const double scale = 1.0 + x.norm() * std::max(1.0, J.cwiseAbs().maxCoeff());
      if ((drift(x, t) - J * x).norm() > 1e-9 * scale) {
        throw InvalidModel("linear tag J disagrees with drift A");
      }
      if (dim_y > 0 && (observation(x, t) - K * x).norm() > 1e-9 * (1.0 + x.norm() * K.norm())) {
        throw InvalidModel("linear tag K disagrees with observation C");
      }
      if ((diffusion(x, t) - diffusion(x0, t)).norm() > 1e-12 * (1.0 + diffusion(x0, t).norm())) {
        throw InvalidModel("linear model has state-dependent diffusion B");
      }
    }
  }
}

StateSpaceModel StateSpaceModel::linear_time_invariant(const Mat& J, const Mat& B, const Mat& K,
                                                       const Mat& Q, const Mat& R, const Mat& S) {
  StateSpaceModel m = linear_time_varying(
      [J](double) { return J; }, [B](double) { return B; }, [K](double) { return K; },
      [Q](double) { return Q; }, [R](double) { return R; }, [S](double) { return S; },
      static_cast<int>(J.rows()), static_cast<int>(B.cols()), static_cast<int>(K.rows()));
  m.time_invariant = true;
  return m;
}

StateSpaceModel StateSpaceModel::linear_time_varying(TimeMatFn J, TimeMatFn B, TimeMatFn K,
                                                     TimeMatFn Q, TimeMatFn R, TimeMatFn S,
                                                     int dim_x, int dim_w, int dim_y) {
  StateSpaceModel m;
  m.dim_x = dim_x;
  m.dim_w = dim_w;
  m.dim_y = dim_y;
  m.drift = [J](const Vec& x, double t) -> Vec { return J(t) * x; };
  m.diffusion = [B](const Vec&, double t) -> Mat { return B(t); };
  m.observation = [K](const Vec& x, double t) -> Vec { return K(t) * x; };
  m.Q = std::move(Q);
  m.R = std::move(R);
  m.S = std::move(S);
  m.linear = LinearTags{std::move(J), std::move(K)};
  return m;
}

void MeasurementRecord::validate() const {
  if (!(dt > 0.0)) throw InvalidModel("record dt must be positive");
  if (has_truth() && truth.size() != increments.size() + 1) {
    throw InvalidModel("record truth length must be increments length + 1");
  }
}

MeasurementRecord MeasurementRecord::reversed() const {
  MeasurementRecord r = *this;
  std::reverse(r.increments.begin(), r.increments.end());
  std::reverse(r.truth.begin(), r.truth.end());
  return r;
}

DecorrelatedModel::DecorrelatedModel(StateSpaceModel base) : base_(std::move(base)) {
  if (base_.dim_y > 0) {
    Eigen::LDLT<Mat> ldlt(base_.R(0.0));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 0.0) {
      throw InvalidModel("R is singular; cannot decorrelate");
    }
  }
}

Mat DecorrelatedModel::gain(const Vec& x, double t) const {
  const auto& m = base_;
  if (m.dim_y == 0) return Mat::Zero(m.dim_x, 0);
  const Mat R = m.R(t);
  Eigen::LLT<Mat> llt(R);
  if (llt.info() != Eigen::Success) throw InvalidModel("R is singular at t=" + std::to_string(t));
  // D = B S R^-1  <=>  D^T = R^-1 S^T B^T
  const Mat BS = m.diffusion(x, t) * m.S(t);
  return llt.solve(BS.transpose()).transpose();
}

Mat DecorrelatedModel::q_eff(double t) const {
  const auto& m = base_;
  const Mat Q = m.Q(t);
  if (m.dim_y == 0) return Q;
  const Mat S = m.S(t);
  Eigen::LLT<Mat> llt(m.R(t));
  if (llt.info() != Eigen::Success) throw InvalidModel("R is singular at t=" + std::to_string(t));
  return symmetrize(Q - S * llt.solve(S.transpose()));
}

bool DecorrelatedModel::uncorrelated(double t) const {
  return base_.dim_y == 0 || base_.S(t).cwiseAbs().maxCoeff() == 0.0;
}

TransitionParams DecorrelatedModel::transition(const Vec& x_from, const Vec& dy, double t,
                                               double dt, const KernelOptions& opts) const {
  const auto& m = base_;
  TransitionParams p;
  p.mean = x_from + m.drift(x_from, t) * dt;
  if (m.dim_y > 0 && !uncorrelated(t)) {
    p.mean += gain(x_from, t) * (dy - m.observation(x_from, t) * dt);
  }
  const Mat B = m.diffusion(x_from, t);
  p.cov = symmetrize(B * q_eff(t) * B.transpose() * dt);

  const double mean_diag = std::max(p.cov.diagonal().mean(), 0.0);
  Eigen::LLT<Mat> llt(p.cov);
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const auto d = llt.matrixL().toDenseMatrix().diagonal();
    singular = d.minCoeff() <= 1e-9 * std::sqrt(std::max(mean_diag, 1e-300));
  }
  if (singular) {
    if (!opts.regularize) throw DegenerateKernel("transition covariance B Q_eff B^T dt is singular");
    const double eps = opts.jitter_rel * (mean_diag > 0.0 ? mean_diag : 1.0);
    p.cov += eps * Mat::Identity(p.cov.rows(), p.cov.cols());
    p.regularized = true;
  }
  return p;
}

DecorrelatedModel decorrelate(const StateSpaceModel& model) { return DecorrelatedModel(model); }

double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& cov) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw DegenerateKernel("covariance is not positive definite");
  const Vec r = x - mean;
  const Vec z = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet + static_cast<double>(x.size()) * std::log(2.0 * kPi));
}

double transition_density(const DecorrelatedModel& dmodel, const Vec& x_from, const Vec& x_to,
                          const Vec& dy, double t, double dt, const KernelOptions& opts) {
  const TransitionParams p = dmodel.transition(x_from, dy, t, dt, opts);
  return std::exp(gaussian_log_density(x_to, p.mean, p.cov));
}

double observation_log_likelihood(const StateSpaceModel& model, const Vec& x, const Vec& dy,
                                  double t, double dt) {
  return gaussian_log_density(dy, model.observation(x, t) * dt, model.R(t) * dt);
}

double observation_likelihood(const StateSpaceModel& model, const Vec& x, const Vec& dy, double t,
                              double dt) {
  return std::exp(observation_log_likelihood(model, x, dy, t, dt));
}

NoiseSampler::NoiseSampler(const Mat& Q, const Mat& R, const Mat& S, double dt)
    : dim_w_(static_cast<int>(Q.rows())) {
  const Mat joint = joint_covariance(Q, R, S) * dt;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(joint));
  const Vec& ev = es.eigenvalues();
  const double floor = -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.size() > 0 && ev.minCoeff() < floor) {
    throw InvalidModel("joint noise covariance is not positive semidefinite");
  }
  factor_ = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

void NoiseSampler::draw(std::mt19937_64& rng, Vec& dW, Vec& dV) {
  Vec z(factor_.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal_(rng);
  const Vec e = factor_ * z;
  dW = e.head(dim_w_);
  dV = e.tail(e.size() - dim_w_);
}

std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0)) throw InvalidModel("dt must be positive");
  if (horizon < 0.0) throw InvalidModel("horizon must be nonnegative");
  const double n = std::round(horizon / dt);
  if (std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw InvalidModel("horizon must be a multiple of dt");
  }
  return static_cast<std::size_t>(n);
}

MeasurementRecord simulate(const StateSpaceModel& model, const PriorSampler& prior, double dt,
                           double horizon, std::uint64_t seed, double t0) {
  model.validate(t0);
  const std::size_t n = step_count(horizon, dt);
  std::mt19937_64 rng(seed);

  MeasurementRecord rec;
  rec.t0 = t0;
  rec.dt = dt;
  rec.increments.reserve(n);
  rec.truth.reserve(n + 1);

  Vec x = prior(rng);
  if (x.size() != model.dim_x) throw InvalidModel("prior sample has wrong dimension");
  rec.truth.push_back(x);

  std::optional<NoiseSampler> fixed;
  const Mat zero_ry = Mat::Zero(model.dim_w, 0);
  auto make_sampler = [&](double t) {
    if (model.dim_y == 0) return NoiseSampler(model.Q(t), Mat::Zero(0, 0), zero_ry, dt);
    return NoiseSampler(model.Q(t), model.R(t), model.S(t), dt);
  };
  if (model.time_invariant) fixed.emplace(make_sampler(t0));

  Vec dW, dV;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    if (fixed) {
      fixed->draw(rng, dW, dV);
    } else {
      NoiseSampler s = make_sampler(t);
      s.draw(rng, dW, dV);
    }
    Vec dy = model.dim_y > 0 ? Vec(model.observation(x, t) * dt + dV) : Vec(0);
    x = x + model.drift(x, t) * dt + model.diffusion(x, t) * dW;
    rec.increments.push_back(std::move(dy));
    rec.truth.push_back(x);
  }
  return rec;
}

}  // namespace tsmooth
