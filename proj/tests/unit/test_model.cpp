#include "tsmooth/model.hpp"
#include "tsmooth/record_io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace tsmooth;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

StateSpaceModel scalar(double J, double B, double K, double q, double r, double s) {
  return StateSpaceModel::linear_time_invariant(m1(J), m1(B), m1(K), m1(q), m1(r), m1(s));
}

PriorSampler fixed(Vec x) {
  return [x](std::mt19937_64&) { return x; };
}

// Trapezoid integral of f over [a, b] with n points.
template <class F>
double trapz(F f, double a, double b, int n) {
  const double h = (b - a) / (n - 1);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += (i == 0 || i == n - 1 ? 0.5 : 1.0) * f(a + i * h);
  return s * h;
}

}  // namespace

TEST_CASE("decorrelate: scalar gain and residual covariance") {
  const double q = 2.0, r = 0.5, s = 0.3;
  SUBCASE("S = 0") {
    DecorrelatedModel d(scalar(0, 1, 1, q, r, 0));
    CHECK(d.gain(Vec::Zero(1), 0)(0, 0) == 0.0);
    CHECK(d.q_eff(0)(0, 0) == q);
    CHECK(d.uncorrelated(0));
  }
  SUBCASE("S != 0") {
    DecorrelatedModel d(scalar(0, 1, 1, q, r, s));
    CHECK(d.gain(Vec::Zero(1), 0)(0, 0) == doctest::Approx(s / r).epsilon(1e-15));
    CHECK(d.q_eff(0)(0, 0) == doctest::Approx(q - s * s / r).epsilon(1e-15));
  }
}

TEST_CASE("decorrelate: 2x1 model and re-correlation recovers Q") {
  const double s1 = 0.2, s2 = -0.4, r = 0.7;
  Mat Q(2, 2);
  Q << 1.0, 0.1, 0.1, 2.0;
  Mat S(2, 1);
  S << s1, s2;
  auto model = StateSpaceModel::linear_time_invariant(Mat::Zero(2, 2), Mat::Identity(2, 2),
                                                      Mat::Ones(1, 2), Q, m1(r), S);
  DecorrelatedModel d(model);
  Mat D = d.gain(Vec::Zero(2), 0);
  CHECK(D(0, 0) == doctest::Approx(s1 / r));
  CHECK(D(1, 0) == doctest::Approx(s2 / r));
  const Mat qe = d.q_eff(0);
  CHECK((qe - (Q - S * S.transpose() / r)).norm() < 1e-15);
  CHECK((qe + S * S.transpose() / r - Q).norm() < 1e-15);
}

TEST_CASE("decorrelate: singular R is an invalid model") {
  auto model = scalar(0, 1, 1, 1, 0.0, 0);
  CHECK_THROWS_AS(DecorrelatedModel{model}, InvalidModel);
}

TEST_CASE("validate rejects an invalid joint covariance") {
  auto model = scalar(0, 1, 1, 1.0, 1.0, 2.0);
  CHECK_THROWS_AS(model.validate(), InvalidModel);
  CHECK_THROWS_AS(simulate(model, fixed(Vec::Zero(1)), 0.1, 1.0, 1), InvalidModel);
}

TEST_CASE("validate catches linear tags that disagree with the maps") {
  auto model = scalar(-1, 1, 1, 1, 1, 0);
  model.drift = [](const Vec& x, double) -> Vec { return 2.0 * x; };
  CHECK_THROWS_AS(model.validate(), InvalidModel);
}

TEST_CASE("simulate: degenerate dynamics give constant truth and pure noise") {
  const double r = 0.8, dt = 0.01;
  auto model = scalar(0, 0, 0, 1, r, 0);
  auto rec = simulate(model, fixed(Vec::Constant(1, 0.25)), dt, 2000.0, 7);
  REQUIRE(rec.steps() == 200000);
  for (const auto& x : rec.truth) REQUIRE(x(0) == 0.25);
  double s2 = 0.0;
  for (const auto& dy : rec.increments) s2 += dy(0) * dy(0);
  s2 /= static_cast<double>(rec.steps());
  CHECK(s2 == doctest::Approx(r * dt).epsilon(0.02));
}

TEST_CASE("simulate: stationary OU variance") {
  const double lambda = 1.0, q = 2.0, dt = 0.01;
  auto model = scalar(-lambda, 1, 0, q, 1, 0);
  auto rec = simulate(model, fixed(Vec::Zero(1)), dt, 1.0e4, 11);
  double s = 0.0, s2 = 0.0;
  const std::size_t burn = 1000;
  for (std::size_t k = burn; k < rec.truth.size(); ++k) {
    s += rec.truth[k](0);
    s2 += rec.truth[k](0) * rec.truth[k](0);
  }
  const double n = static_cast<double>(rec.truth.size() - burn);
  const double var = s2 / n - (s / n) * (s / n);
  CHECK(var == doctest::Approx(q / (2 * lambda)).epsilon(0.05));
}

TEST_CASE("simulate: S = R = Q gives perfectly correlated noises") {
  const double dt = 0.01;
  auto model = scalar(0, 1, 1, 1, 1, 1);
  NoiseSampler ns(model.Q(0), model.R(0), model.S(0), dt);
  std::mt19937_64 rng(3);
  Vec dW, dV;
  double sww = 0, svv = 0, swv = 0;
  for (int i = 0; i < 10000; ++i) {
    ns.draw(rng, dW, dV);
    sww += dW(0) * dW(0);
    svv += dV(0) * dV(0);
    swv += dW(0) * dV(0);
  }
  CHECK(swv / std::sqrt(sww * svv) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("simulate is bitwise reproducible") {
  auto model = scalar(-0.5, 1, 1, 1, 1, 0.3);
  auto a = simulate(model, fixed(Vec::Zero(1)), 0.01, 5.0, 42);
  auto b = simulate(model, fixed(Vec::Zero(1)), 0.01, 5.0, 42);
  auto c = simulate(model, fixed(Vec::Zero(1)), 0.01, 5.0, 43);
  REQUIRE(a.steps() == b.steps());
  bool same = true, differs = false;
  for (std::size_t k = 0; k < a.steps(); ++k) {
    same = same && a.increments[k](0) == b.increments[k](0) && a.truth[k](0) == b.truth[k](0);
    differs = differs || a.increments[k](0) != c.increments[k](0);
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("simulate rejects a horizon that is not a multiple of dt") {
  auto model = scalar(0, 1, 1, 1, 1, 0);
  CHECK_THROWS_AS(simulate(model, fixed(Vec::Zero(1)), 0.3, 1.0, 1), InvalidModel);
}

TEST_CASE("transition_density normalizes, peaks at the mean") {
  const double dt = 0.01;
  SUBCASE("drift mean") {
    DecorrelatedModel d(scalar(-1, 1, 1, 1, 1, 0));
    auto tp = d.transition(Vec::Constant(1, 2.0), Vec::Zero(1), 0, dt);
    CHECK(tp.mean(0) == doctest::Approx(1.98).epsilon(1e-15));
    const double mass = trapz(
        [&](double x) {
          return transition_density(d, Vec::Constant(1, 2.0), Vec::Constant(1, x), Vec::Zero(1), 0,
                                    dt);
        },
        1.0, 3.0, 20001);
    CHECK(std::abs(mass - 1.0) < 1e-6);
  }
  SUBCASE("symmetric with no drift") {
    DecorrelatedModel d(scalar(0, 1, 1, 1, 1, 0));
    const Vec x0 = Vec::Constant(1, 0.3);
    const double p0 = transition_density(d, x0, x0, Vec::Constant(1, 0.7), 0, dt);
    const double pl = transition_density(d, x0, Vec::Constant(1, 0.29), Vec::Constant(1, 0.7), 0, dt);
    const double pr = transition_density(d, x0, Vec::Constant(1, 0.31), Vec::Constant(1, 0.7), 0, dt);
    CHECK(p0 > pl);
    CHECK(pl == doctest::Approx(pr).epsilon(1e-13));
  }
  SUBCASE("mean depends on dy through the gain") {
    const double s = 0.4, r = 2.0;
    DecorrelatedModel d(scalar(0, 1, 1, 1, r, s));
    const Vec x0 = Vec::Constant(1, 1.0);
    auto tp = d.transition(x0, Vec::Constant(1, 0.05), 0, dt);
    CHECK(tp.mean(0) == doctest::Approx(1.0 + s / r * (0.05 - 1.0 * dt)).epsilon(1e-15));
    CHECK(tp.cov(0, 0) == doctest::Approx((1 - s * s / r) * dt).epsilon(1e-13));
  }
}

TEST_CASE("transition: degenerate covariance regularizes or throws") {
  DecorrelatedModel d(scalar(0, 1, 1, 1, 1, 1));  // Q_eff = 0
  auto tp = d.transition(Vec::Zero(1), Vec::Zero(1), 0, 0.01);
  CHECK(tp.regularized);
  CHECK(tp.cov(0, 0) > 0.0);
  KernelOptions strict;
  strict.regularize = false;
  CHECK_THROWS_AS(d.transition(Vec::Zero(1), Vec::Zero(1), 0, 0.01, strict), DegenerateKernel);
}

TEST_CASE("observation_likelihood closed form and properties") {
  auto model = scalar(0, 1, 1, 1, 1, 0);
  const double dt = 0.1;
  const double v = observation_likelihood(model, Vec::Zero(1), Vec::Constant(1, 0.1), 0, dt);
  CHECK(v == doctest::Approx(std::pow(2 * kPi * 0.1, -0.5) * std::exp(-0.05)).epsilon(1e-14));

  const Vec x = Vec::Constant(1, 0.7);
  const double at_mean = observation_likelihood(model, x, Vec::Constant(1, 0.7 * dt), 0, dt);
  CHECK(at_mean > observation_likelihood(model, x, Vec::Constant(1, 0.7 * dt + 0.01), 0, dt));
  CHECK(at_mean > observation_likelihood(model, x, Vec::Constant(1, 0.7 * dt - 0.01), 0, dt));

  const double mass = trapz(
      [&](double y) { return observation_likelihood(model, x, Vec::Constant(1, y), 0, dt); },
      -3.0, 3.0, 20001);
  CHECK(std::abs(mass - 1.0) < 1e-6);

  auto blind = scalar(0, 1, 0, 1, 1, 0);
  CHECK(observation_likelihood(blind, Vec::Constant(1, -3), Vec::Constant(1, 0.2), 0, dt) ==
        observation_likelihood(blind, Vec::Constant(1, 5), Vec::Constant(1, 0.2), 0, dt));
}

TEST_CASE("Chapman-Kolmogorov: two half steps approach one full step") {
  // Nonlinear drift so composition is not exact.
  StateSpaceModel model = scalar(0, 1, 0, 1, 1, 0);
  model.linear.reset();
  model.drift = [](const Vec& x, double) -> Vec { return Vec::Constant(1, -std::sin(2.0 * x(0))); };
  DecorrelatedModel d(model);
  const Vec x0 = Vec::Constant(1, 0.6);
  const Vec dy = Vec::Zero(1);
  auto l1 = [&](double dt) {
    const int n = 601;
    const double a = -1.4, b = 2.6, h = (b - a) / (n - 1);
    auto w = [&](int i) { return (i == 0 || i == n - 1 ? 0.5 : 1.0) * h; };
    Vec first(n);
    for (int j = 0; j < n; ++j) {
      first(j) = transition_density(d, x0, Vec::Constant(1, a + j * h), dy, 0, dt / 2);
    }
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec z = Vec::Constant(1, a + i * h);
      double mid = 0.0;
      for (int j = 0; j < n; ++j) {
        mid += w(j) * first(j) *
               transition_density(d, Vec::Constant(1, a + j * h), z, dy, dt / 2, dt / 2);
      }
      const double full = transition_density(d, x0, z, dy, 0, dt);
      err += w(i) * std::abs(mid - full);
    }
    return err;
  };
  const double e1 = l1(0.08), e2 = l1(0.04);
  CHECK(e2 < e1);
  CHECK(std::log2(e1 / e2) > 0.9);
}

TEST_CASE("record CSV round trip") {
  auto model = scalar(-0.5, 1, 1, 1, 1, 0.2);
  auto rec = simulate(model, fixed(Vec::Constant(1, 0.1)), 0.01, 0.5, 9);
  const auto path = std::filesystem::temp_directory_path() / "tsmooth_record_roundtrip.csv";
  io::write_record_csv(path.string(), rec);
  auto back = io::read_record_csv(path.string());
  REQUIRE(back.steps() == rec.steps());
  REQUIRE(back.truth.size() == rec.truth.size());
  for (std::size_t k = 0; k < rec.steps(); ++k) CHECK(back.increments[k](0) == rec.increments[k](0));
  for (std::size_t k = 0; k < rec.truth.size(); ++k) CHECK(back.truth[k](0) == rec.truth[k](0));
  std::filesystem::remove(path);
}
