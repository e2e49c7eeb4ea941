#include "batch_oracle.hpp"

#include <algorithm>

namespace tsmooth::testing {

BatchOracle::BatchOracle(const StateSpaceModel& model, const MeasurementRecord& record,
                         const gauss::GaussianBelief& prior)
    : model_(model), record_(record), prior_(prior) {
  global_ = build(0, prior.mean, prior.cov);
}

BatchOracle::Coefficients BatchOracle::build(std::size_t k0, const Vec& mean0,
                                             const Mat& cov0) const {
  const int n = model_.dim_x, w = model_.dim_w, m = model_.dim_y;
  const std::size_t N = record_.steps();
  const double dt = record_.dt;
  const int e = w + m;
  const int dim_u = n + static_cast<int>(N - k0) * e;

  Coefficients c;
  c.cov_u = Mat::Zero(dim_u, dim_u);
  c.mean_u = Vec::Zero(dim_u);
  c.cov_u.topLeftCorner(n, n) = cov0;
  c.mean_u.head(n) = mean0;

  Mat X = Mat::Zero(n, dim_u);
  X.leftCols(n).setIdentity();
  for (std::size_t j = k0; j < N; ++j) {
    const double t = record_.time(j);
    const int off = n + static_cast<int>(j - k0) * e;
    Mat joint(e, e);
    joint << model_.Q(t), model_.S(t), model_.S(t).transpose(), model_.R(t);
    c.cov_u.block(off, off, e, e) = joint * dt;

    const Vec x0 = Vec::Zero(n);
    const Mat F = Mat::Identity(n, n) + model_.linear->J(t) * dt;
    const Mat H = model_.linear->K(t) * dt;
    const Mat B = model_.diffusion(x0, t);

    Mat Y = H * X;
    Y.block(0, off + w, m, m) += Mat::Identity(m, m);
    c.X.push_back(X);
    c.Y.push_back(Y);

    Mat Xn = F * X;
    Xn.block(0, off, n, w) += B;
    X = std::move(Xn);
  }
  c.X.push_back(X);
  return c;
}

gauss::GaussianBelief BatchOracle::condition(std::size_t k, std::size_t n_obs) const {
  const auto& c = global_;
  const Mat& Xk = c.X[k];
  gauss::GaussianBelief out;
  out.t = record_.time(k);
  out.mean = Xk * c.mean_u;
  out.cov = Xk * c.cov_u * Xk.transpose();
  if (n_obs == 0) return out;
  const int m = model_.dim_y;
  Mat Yp(static_cast<int>(n_obs) * m, c.cov_u.cols());
  Vec y(static_cast<int>(n_obs) * m);
  for (std::size_t j = 0; j < n_obs; ++j) {
    Yp.middleRows(static_cast<int>(j) * m, m) = c.Y[j];
    y.segment(static_cast<int>(j) * m, m) = record_.increments[j];
  }
  const Mat Syy = Yp * c.cov_u * Yp.transpose();
  const Mat Sxy = Xk * c.cov_u * Yp.transpose();
  Eigen::LDLT<Mat> ldlt(Syy);
  out.mean += Sxy * ldlt.solve(y - Yp * c.mean_u);
  out.cov -= Sxy * ldlt.solve(Sxy.transpose());
  out.cov = symmetrize(out.cov);
  return out;
}

gauss::GaussianBelief BatchOracle::predicted(std::size_t k) const { return condition(k, k); }

gauss::GaussianBelief BatchOracle::smoothed(std::size_t k) const {
  return condition(k, record_.steps());
}

gauss::InformationBelief BatchOracle::backward(std::size_t k) const {
  const int n = model_.dim_x, m = model_.dim_y;
  const std::size_t N = record_.steps();
  gauss::InformationBelief out = gauss::InformationBelief::flat(record_.time(k), n);
  if (k == N) return out;
  const Coefficients c = build(k, Vec::Zero(n), Mat::Zero(n, n));
  const int rows = static_cast<int>(N - k) * m;
  Mat G(rows, n);
  Mat Ynoise(rows, c.cov_u.cols() - n);
  Vec y(rows);
  for (std::size_t j = 0; j < N - k; ++j) {
    const int r = static_cast<int>(j) * m;
    G.middleRows(r, m) = c.Y[j].leftCols(n);
    Ynoise.middleRows(r, m) = c.Y[j].rightCols(c.cov_u.cols() - n);
    y.segment(r, m) = record_.increments[k + j];
  }
  const Mat noise_cov = Ynoise * c.cov_u.bottomRightCorner(Ynoise.cols(), Ynoise.cols()) *
                        Ynoise.transpose();
  Eigen::LDLT<Mat> ldlt(noise_cov);
  out.info_matrix = symmetrize(G.transpose() * ldlt.solve(G));
  out.info_vector = G.transpose() * ldlt.solve(y);
  return out;
}

LinearProblem random_linear_problem(std::mt19937_64& rng, bool correlated, int max_steps) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> dimy(1, 2);
  std::normal_distribution<double> normal;
  auto randn = [&](int r, int c) {
    Mat a(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) a(i, j) = normal(rng);
    return a;
  };

  const int n = dim(rng), w = dim(rng), m = dimy(rng);
  const Mat J = 0.6 * randn(n, n) - 0.8 * Mat::Identity(n, n);
  const Mat B = randn(n, w);
  const Mat K = randn(m, n);
  const Mat L = randn(w + m, w + m);
  Mat joint = L * L.transpose() + 0.2 * Mat::Identity(w + m, w + m);
  if (!correlated) {
    joint.topRightCorner(w, m).setZero();
    joint.bottomLeftCorner(m, w).setZero();
  }
  const Mat Q = joint.topLeftCorner(w, w);
  const Mat S = joint.topRightCorner(w, m);
  const Mat R = joint.bottomRightCorner(m, m);

  LinearProblem p{StateSpaceModel::linear_time_invariant(J, B, K, Q, R, S), {}, {}};
  const Mat Lp = randn(n, n);
  p.prior.t = 0.0;
  p.prior.mean = randn(n, 1);
  p.prior.cov = Lp * Lp.transpose() + 0.1 * Mat::Identity(n, n);

  std::uniform_int_distribution<int> steps(10, max_steps);
  const double dt = 0.02;
  const int N = steps(rng);
  const Vec m0 = p.prior.mean;
  const Eigen::LLT<Mat> llt(p.prior.cov);
  const Mat Lc = llt.matrixL();
  PriorSampler sampler = [m0, Lc](std::mt19937_64& r) {
    std::normal_distribution<double> nd;
    Vec z(m0.size());
    for (int i = 0; i < z.size(); ++i) z(i) = nd(r);
    return Vec(m0 + Lc * z);
  };
  p.record = simulate(p.model, sampler, dt, N * dt, rng());
  return p;
}

double rel_error(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

double rel_error(const Vec& a, const Vec& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace tsmooth::testing
