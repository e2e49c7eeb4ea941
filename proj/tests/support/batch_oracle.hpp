#pragma once

// Brute-force joint-Gaussian conditioning over a discretized linear trajectory.
// Independent of the recursive filters: it stacks every state and increment
// as a linear map of the prior and the per-step noises and conditions with a
// dense solve.

#include "tsmooth/gaussian.hpp"
#include "tsmooth/model.hpp"

#include <random>

namespace tsmooth::testing {

class BatchOracle {
 public:
  BatchOracle(const StateSpaceModel& model, const MeasurementRecord& record,
              const gauss::GaussianBelief& prior);

  /// x_k given dy_0 .. dy_{k-1}.
  gauss::GaussianBelief predicted(std::size_t k) const;
  /// x_k given the whole record.
  gauss::GaussianBelief smoothed(std::size_t k) const;
  /// Likelihood of dy_k .. dy_{N-1} as a function of x_k, in information form.
  gauss::InformationBelief backward(std::size_t k) const;

 private:
  struct Coefficients {
    std::vector<Mat> X;  // x_j as a linear map of u
    std::vector<Mat> Y;  // dy_j as a linear map of u
    Mat cov_u;
    Vec mean_u;
  };
  // u = (x_{k0}, e_{k0}, .., e_{N-1}) with e_j = (dW_j, dV_j).
  Coefficients build(std::size_t k0, const Vec& mean0, const Mat& cov0) const;
  gauss::GaussianBelief condition(std::size_t k, std::size_t n_obs) const;

  const StateSpaceModel& model_;
  const MeasurementRecord& record_;
  gauss::GaussianBelief prior_;
  Coefficients global_;
};

struct LinearProblem {
  StateSpaceModel model;
  MeasurementRecord record;
  gauss::GaussianBelief prior;
};

/// Random stable linear model with correlated noises (S != 0 unless
/// correlated is false), a prior and a simulated record.
LinearProblem random_linear_problem(std::mt19937_64& rng, bool correlated, int max_steps = 100);

double rel_error(const Mat& a, const Mat& b);
double rel_error(const Vec& a, const Vec& b);

}  // namespace tsmooth::testing
