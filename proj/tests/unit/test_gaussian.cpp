#include "batch_oracle.hpp"
#include "tsmooth/gaussian.hpp"
#include "tsmooth/record_io.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace tsmooth;
using namespace tsmooth::gauss;
using testing::BatchOracle;
using testing::rel_error;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

StateSpaceModel scalar(double J, double B, double K, double q, double r, double s) {
  return StateSpaceModel::linear_time_invariant(m1(J), m1(B), m1(K), m1(q), m1(r), m1(s));
}

GaussianBelief belief(double mean, double var) { return {0.0, Vec::Constant(1, mean), m1(var)}; }

PriorSampler fixed(Vec x) {
  return [x](std::mt19937_64&) { return x; };
}

double min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("kalman_filter: K = 0 follows the Lyapunov recursion") {
  const double J = -0.7, q = 1.3, dt = 0.01;
  auto model = scalar(J, 1, 0, q, 1, 0);
  auto rec = simulate(model, fixed(Vec::Constant(1, 1.0)), dt, 1.0, 5);
  auto fs = kalman_filter(model, rec, belief(2.0, 0.5));
  double m = 2.0, P = 0.5;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    CHECK(fs[k].mean(0) == doctest::Approx(m).epsilon(1e-13));
    CHECK(fs[k].cov(0, 0) == doctest::Approx(P).epsilon(1e-13));
    m += J * m * dt;
    P = (1 + J * dt) * P * (1 + J * dt) + q * dt;
  }
  // and the continuous Lyapunov solution to O(dt)
  const double T = 1.0, e = std::exp(2 * J * T);
  const double Pc = 0.5 * e + q / (2 * -J) * (1 - e);
  CHECK(fs.back().cov(0, 0) == doctest::Approx(Pc).epsilon(5e-3));
}

TEST_CASE("kalman_filter: scalar steady-state Riccati root") {
  const double lambda = 1.0, dt = 1e-4;
  auto model = scalar(-lambda, 1, 1, 1, 1, 0);
  auto rec = simulate(model, fixed(Vec::Zero(1)), dt, 10.0, 2);
  auto fs = kalman_filter(model, rec, belief(0.0, 1.0));
  const double ss = -lambda + std::sqrt(lambda * lambda + 1);
  CHECK(std::abs(fs.back().cov(0, 0) - ss) < 1e-4);
}

TEST_CASE("kalman_filter: missing linear tags is unsupported") {
  auto model = scalar(0, 1, 1, 1, 1, 0);
  model.linear.reset();
  MeasurementRecord rec{0.0, 0.1, {Vec::Zero(1)}, {}};
  CHECK_THROWS_AS(kalman_filter(model, rec, belief(0, 1)), UnsupportedModel);
}

TEST_CASE("kalman_filter: covariance blow-up reports the failing step") {
  auto model = scalar(1e200, 1, 1, 1, 1, 0);
  MeasurementRecord rec{0.0, 0.5, std::vector<Vec>(20, Vec::Zero(1)), {}};
  try {
    kalman_filter(model, rec, belief(0, 1));
    FAIL("expected NumericalFailure");
  } catch (const NumericalFailure& e) {
    CHECK(e.step() < 20);
  }
}

TEST_CASE("batch oracle: filter, backward, smoother on random models") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 25; ++trial) {
    auto p = testing::random_linear_problem(rng, trial % 5 != 0, 50);
    BatchOracle oracle(p.model, p.record, p.prior);
    auto run = smooth(p.model, p.record, p.prior);
    const std::size_t N = p.record.steps();
    for (std::size_t k : {std::size_t{0}, N / 3, N / 2, N}) {
      const auto pred = oracle.predicted(k);
      CHECK(rel_error(run.filtered[k].mean, pred.mean) < 1e-8);
      CHECK(rel_error(run.filtered[k].cov, pred.cov) < 1e-8);
      const auto sm = oracle.smoothed(k);
      CHECK(rel_error(run.smoothed[k].mean, sm.mean) < 1e-8);
      CHECK(rel_error(run.smoothed[k].cov, sm.cov) < 1e-8);
      if (k < N) {
        const auto bw = oracle.backward(k);
        CHECK(rel_error(run.backward[k].info_matrix, bw.info_matrix) < 1e-8);
        CHECK(rel_error(run.backward[k].info_vector, bw.info_vector) < 1e-8);
      }
    }
    const auto fused = retrodict_with_prior(run.backward[0], p.prior);
    CHECK(rel_error(fused.mean, oracle.smoothed(0).mean) < 1e-8);
    CHECK(rel_error(fused.cov, oracle.smoothed(0).cov) < 1e-8);
  }
}

TEST_CASE("rts_smooth matches the batch oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 15; ++trial) {
    auto p = testing::random_linear_problem(rng, trial % 3 != 0, 40);
    BatchOracle oracle(p.model, p.record, p.prior);
    const auto rts = rts_smooth(p.model, p.record, p.prior);
    const std::size_t N = p.record.steps();
    for (std::size_t k : {std::size_t{0}, N / 2, N}) {
      const auto sm = oracle.smoothed(k);
      CHECK(rel_error(rts[k].mean, sm.mean) < 1e-8);
      CHECK(rel_error(rts[k].cov, sm.cov) < 1e-8);
    }
  }
}

TEST_CASE("backward filter: flat final condition and one-step information") {
  const double r = 0.5, K = 2.0, dt = 0.01;
  auto model = scalar(-0.3, 1, K, 1, r, 0);
  MeasurementRecord rec{0.0, dt, {Vec::Constant(1, 0.02), Vec::Constant(1, -0.01)}, {}};
  auto bw = backward_information_filter(model, rec);
  CHECK(bw.back().info_matrix(0, 0) == 0.0);
  CHECK(bw.back().info_vector(0) == 0.0);
  CHECK(bw.back().t == doctest::Approx(2 * dt));
  CHECK(bw[1].info_matrix(0, 0) == doctest::Approx(K * K / r * dt).epsilon(1e-14));
  CHECK(bw[1].info_vector(0) == doctest::Approx(K / r * -0.01).epsilon(1e-14));
}

TEST_CASE("backward filter: time reversal matches a forward filter from the flat prior") {
  // Random walk observed directly: J = 0, B = K = Q = R = 1. Running a forward
  // filter from a flat prior over the reversed record gives the same
  // information after each measurement as the backward pass.
  const double dt = 0.01;
  auto model = scalar(0, 1, 1, 1, 1, 0);
  auto rec = simulate(model, fixed(Vec::Zero(1)), dt, 0.6, 17);
  auto bw = backward_information_filter(model, rec);
  const std::size_t N = rec.steps();

  double P = 0.0, m = 0.0;
  for (std::size_t j = N; j-- > 0;) {
    const double dy = rec.increments[j](0);
    if (j == N - 1) {
      P = 1.0 / dt;
      m = dy / dt;
    } else {
      P += dt;
      const double g = P * dt / (P * dt * dt + dt);
      m += g * (dy - m * dt);
      P -= g * dt * P;
    }
    CHECK(bw[j].info_matrix(0, 0) == doctest::Approx(1.0 / P).epsilon(1e-8));
    CHECK(bw[j].info_vector(0) / bw[j].info_matrix(0, 0) == doctest::Approx(m).epsilon(1e-8));
  }
}

TEST_CASE("mfp_combine: flat future, symmetric fusion, same timestamp") {
  SUBCASE("flat backward returns the filter") {
    GaussianBelief f{0.3, Vec::Constant(2, 1.5), Mat::Identity(2, 2) * 0.4};
    auto h = mfp_combine(f, InformationBelief::flat(0.3, 2));
    CHECK(h.mean == f.mean);
    CHECK(h.cov == f.cov);
  }
  SUBCASE("symmetric fusion") {
    const double s2 = 0.3, a = 1.0, b = -2.0;
    GaussianBelief f{0.0, Vec::Constant(2, a), Mat::Identity(2, 2) * s2};
    InformationBelief g{0.0, Mat::Identity(2, 2) / s2, Vec::Constant(2, b / s2)};
    auto h = mfp_combine(f, g);
    CHECK(rel_error(h.cov, Mat::Identity(2, 2) * s2 / 2) < 1e-15);
    CHECK(rel_error(h.mean, Vec::Constant(2, (a + b) / 2)) < 1e-15);
  }
  SUBCASE("singular filter covariance is handled") {
    GaussianBelief f{0.0, Vec::Constant(2, 1.0), Mat::Zero(2, 2)};
    f.cov(0, 0) = 1.0;
    InformationBelief g{0.0, Mat::Identity(2, 2), Vec::Constant(2, 3.0)};
    auto h = mfp_combine(f, g);
    CHECK(h.cov(1, 1) == 0.0);
    CHECK(h.mean(1) == doctest::Approx(1.0));
    CHECK(h.mean(0) == doctest::Approx(2.0));
  }
  SUBCASE("timestamps must match") {
    GaussianBelief f{0.0, Vec::Zero(1), m1(1)};
    CHECK_THROWS_AS(mfp_combine(f, InformationBelief::flat(1.0, 1)), Mismatch);
  }
}

TEST_CASE("retrodict_with_prior") {
  SUBCASE("flat backward returns the prior") {
    auto h = retrodict_with_prior(InformationBelief::flat(0, 1), belief(0.4, 2.0));
    CHECK(h.mean(0) == 0.4);
    CHECK(h.cov(0, 0) == 2.0);
  }
  SUBCASE("scalar information addition") {
    InformationBelief g{0.0, m1(1.0), Vec::Constant(1, 1.0)};
    auto h = retrodict_with_prior(g, belief(0.0, 1.0));
    CHECK(h.mean(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("flat prior gives the normalized backward belief") {
    Mat L(2, 2);
    L << 2.0, 0.5, 0.5, 1.0;
    Vec nu(2);
    nu << 1.0, -1.0;
    InformationBelief g{0.0, L, nu};
    auto h = retrodict_with_prior(g, InformationBelief::flat(0.0, 2));
    CHECK(rel_error(h.cov, L.inverse()) < 1e-14);
    CHECK(rel_error(h.mean, L.inverse() * nu) < 1e-14);
  }
  SUBCASE("both flat is ill-posed") {
    CHECK_THROWS_AS(retrodict_with_prior(InformationBelief::flat(0, 2), InformationBelief::flat(0, 2)),
                    IllPosed);
  }
}

TEST_CASE("smoothing dominance and constant-parameter equivalence") {
  // x_1 is an OU state; x_2 is a constant parameter observed through the same channel.
  Mat J(2, 2), B(2, 1), K(1, 2);
  J << -1.0, 0.0, 0.0, 0.0;
  B << 1.0, 0.0;
  K << 1.0, 1.0;
  auto model = StateSpaceModel::linear_time_invariant(J, B, K, m1(1.0), m1(0.5), Mat::Zero(1, 1));
  auto rec = simulate(model, fixed(Vec::Constant(2, 0.5)), 0.01, 2.0, 8);
  GaussianBelief prior{0.0, Vec::Zero(2), Mat::Identity(2, 2)};
  auto run = smooth(model, rec, prior);
  const std::size_t N = rec.steps();
  for (std::size_t k = 1; k < N; ++k) {
    CHECK(min_eig(run.filtered[k].cov - run.smoothed[k].cov) >= -1e-10);
  }
  for (std::size_t k = 0; k <= N; k += 20) {
    CHECK(run.smoothed[k].mean(1) == doctest::Approx(run.filtered[N].mean(1)).epsilon(1e-8));
    CHECK(run.smoothed[k].cov(1, 1) == doctest::Approx(run.filtered[N].cov(1, 1)).epsilon(1e-8));
  }
}

TEST_CASE("innovations are white with covariance R dt") {
  const double r = 0.7, dt = 0.01;
  auto model = scalar(-1.0, 1, 1, 1, r, 0.2);
  auto rec = simulate(model, fixed(Vec::Zero(1)), dt, 1000.0, 31);
  auto run = kalman_filter_run(model, rec, belief(0.0, 0.5));
  double s0 = 0.0, s1 = 0.0;
  const auto& v = run.innovations;
  for (std::size_t k = 0; k < v.size(); ++k) {
    s0 += v[k](0) * v[k](0);
    if (k > 0) s1 += v[k](0) * v[k - 1](0);
  }
  const double n = static_cast<double>(v.size());
  CHECK(s0 / n == doctest::Approx(r * dt).epsilon(0.02));
  CHECK(std::abs(s1 / s0) < 4.0 / std::sqrt(n));
}

TEST_CASE("belief CSV round trip") {
  Mat P(2, 2);
  P << 1.0 / 3.0, 0.1, 0.1, 2.0 / 7.0;
  std::vector<GaussianBelief> bs{{0.0, Vec::Constant(2, 1.0 / 9.0), P}, {0.1, Vec::Zero(2), P * 2}};
  std::ostringstream os;
  io::write_belief_csv(os, bs);
  CHECK(os.str().rfind("t,mean_1,mean_2,cov_11,cov_12,cov_22\n", 0) == 0);
  CHECK(os.str().find("0.33333333333333331") != std::string::npos);
}
