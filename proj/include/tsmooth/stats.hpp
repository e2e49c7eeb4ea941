#pragma once

// Sample statistics and the two hypothesis tests used by the Monte-Carlo
// experiments.

#include <vector>

namespace tsmooth::stats {

double mean(const std::vector<double>& v);
/// Unbiased sample variance; 0 for fewer than two samples.
double variance(const std::vector<double>& v);
double standard_error(const std::vector<double>& v);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// P(T <= t) for Student's t with nu degrees of freedom.
double student_t_cdf(double t, double nu);

struct TTest {
  double mean = 0.0;
  double standard_error = 0.0;
  double t = 0.0;
  double dof = 0.0;
  /// One-sided P(T >= t) under mean zero.
  double p_upper = 0.5;
  /// One-sided P(T <= t) under mean zero.
  double p_lower = 0.5;
};

/// One-sample t test of mean zero; paired tests pass the differences.
TTest t_test(const std::vector<double>& samples);

struct KsTest {
  double statistic = 0.0;
  /// Asymptotic two-sided p-value.
  double p_value = 1.0;
};

KsTest ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

}  // namespace tsmooth::stats
