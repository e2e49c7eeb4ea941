// Serial reference versus OpenMP for the hot kernels. The second benchmark
// argument selects the path: 0 serial, 1 parallel.

#include "tsmooth/grid_smoother.hpp"
#include "tsmooth/kernels/field_ops.hpp"
#include "tsmooth/kernels/sparse_kernel.hpp"
#include "tsmooth/kernels/wigner_kernel.hpp"
#include "tsmooth/quantum_smoother.hpp"
#include "tsmooth/weak.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace tsmooth;
using kernels::Exec;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(1) ? Exec::parallel : Exec::serial; }

Mat m1(double v) { return Mat::Constant(1, 1, v); }

grid::GridSpec square(double r, std::size_t n) {
  return grid::GridSpec(std::vector<grid::Axis>{{-r, r, n}, {-r, r, n}});
}

// 2D OU step: mean 0.99 x, isotropic variance 0.01.
kernels::TransitionKernel ou_kernel(const grid::GridSpec& g, Exec exec) {
  return kernels::build_gaussian_kernel(
      g,
      [&](std::size_t i, Vec& mean, Mat& cov) {
        mean = 0.99 * g.point(i);
        cov = 0.01 * Mat::Identity(2, 2);
      },
      {}, exec);
}

void BM_BuildGaussianKernel(benchmark::State& s) {
  const auto g = square(4.0, static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(ou_kernel(g, exec_of(s)));
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(g.size()));
}

void BM_ApplyForward(benchmark::State& s) {
  const auto g = square(4.0, static_cast<std::size_t>(s.range(0)));
  const auto k = ou_kernel(g, Exec::parallel);
  const Vec w = g.weights();
  Vec in = Vec::Ones(static_cast<Eigen::Index>(g.size())), out;
  for (auto _ : s) {
    kernels::apply_forward(k, w, in, out, exec_of(s));
    benchmark::DoNotOptimize(out.data());
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(k.by_source.nnz()));
}

void BM_ApplyAdjoint(benchmark::State& s) {
  const auto g = square(4.0, static_cast<std::size_t>(s.range(0)));
  const auto k = ou_kernel(g, Exec::parallel);
  Vec in = Vec::Ones(static_cast<Eigen::Index>(g.size())), out;
  for (auto _ : s) {
    kernels::apply_adjoint(k, in, out, exec_of(s));
    benchmark::DoNotOptimize(out.data());
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(k.by_source.nnz()));
}

void BM_TransportField(benchmark::State& s) {
  const auto g = grid::GridSpec::uniform1d(-4, 4, 401);
  const auto k = kernels::build_gaussian_kernel(
      g, [&](std::size_t i, Vec& mean, Mat& cov) { mean = 0.99 * g.point(i); cov = m1(0.01); }, {}, Exec::parallel);
  const int d = static_cast<int>(s.range(0));
  std::vector<CMat> in(g.size(), CMat::Identity(d, d)), out;
  const Vec w = g.weights();
  for (auto _ : s) {
    kernels::transport_forward(k, w, in, out, exec_of(s));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_WignerRows(benchmark::State& s) {
  const int d = static_cast<int>(s.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  CMat c(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) c(i, j) = cplx(n(rng), n(rng));
  c = c + c.adjoint().eval();
  const Vec a = Vec::LinSpaced(121, -8.0, 8.0);
  const Vec u = Vec::LinSpaced(257, -16.0, 16.0);
  const Vec uw = Vec::Constant(u.size(), u(1) - u(0));
  Mat out;
  for (auto _ : s) {
    kernels::wigner_rows(c, a, a, u, uw, 0.0, 1, out, exec_of(s));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_GridSmoother(benchmark::State& s) {
  const auto model = StateSpaceModel::linear_time_invariant(m1(-1.0), m1(1.0), m1(1.0), m1(1.0), m1(0.1), m1(0.0));
  const auto rec = simulate(model, [](std::mt19937_64&) { return Vec::Zero(1); }, 0.01, 1.0, 3);
  const auto g = grid::GridSpec::uniform1d(-5, 5, static_cast<std::size_t>(s.range(0)));
  const auto prior = grid::GridDensity::from_function(g, [](const Vec& x) { return std::exp(-x(0) * x(0)); });
  grid::GridSmootherOptions o;
  o.exec = exec_of(s);
  const auto dm = decorrelate(model);
  for (auto _ : s) benchmark::DoNotOptimize(grid::smooth(dm, rec, prior, o));
}

void BM_HybridSmoother(benchmark::State& s) {
  quantum::HybridModel m;
  m.hilbert = quantum::HilbertSpec::oscillator(static_cast<int>(s.range(0)));
  m.classical = StateSpaceModel::linear_time_invariant(m1(-1.0), m1(1.0), m1(0.0), m1(0.5), m1(1.0), m1(0.0));
  const CMat a = m.hilbert.annihilation();
  m.H0 = a.adjoint() * a;
  m.lindblad = {0.3 * a};
  const CMat q = m.hilbert.position();
  m.coupling = [q](const Vec& x) { return CMat(0.2 * x(0) * q); };
  m.measurement = quantum::HybridModel::constant_measurement({CMat(0.5 * a)});
  m.R = m1(1.0);
  const auto g = grid::GridSpec::uniform1d(-3, 3, 41);
  const CMat rho0 = weak::projector(weak::fock_ket(m.hilbert.dim, 0));
  const auto traj = quantum::simulate_hybrid(m, [](std::mt19937_64&) { return Vec::Zero(1); }, rho0, 1e-3, 100, 5);
  const auto prior = quantum::HybridOperatorField::product(g, [](const Vec& x) { return std::exp(-x(0) * x(0)); }, rho0);
  quantum::QuantumSmootherOptions o;
  o.exec = exec_of(s);
  for (auto _ : s) benchmark::DoNotOptimize(quantum::smooth(m, traj.record, prior, o));
}

}  // namespace

BENCHMARK(BM_BuildGaussianKernel)->ArgsProduct({{61, 121}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApplyForward)->ArgsProduct({{61, 121}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ApplyAdjoint)->ArgsProduct({{61, 121}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TransportField)->ArgsProduct({{2, 8}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_WignerRows)->ArgsProduct({{10, 30}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GridSmoother)->ArgsProduct({{201, 801}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HybridSmoother)->ArgsProduct({{4, 10}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
