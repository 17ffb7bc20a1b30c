#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace disbayes {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

double normal_pdf(double x);
double normal_cdf(double x);
double normal_ccdf(double x);
double normal_quantile(double p);
double log_normal_cdf(double x);
/// log(Phi(b) - Phi(a)) for a < b, evaluated in whichever tail keeps the difference well
/// conditioned (complementary error function on the upper side).
double log_normal_cdf_diff(double a, double b);

/// Multivariate normal log-density with precision-free covariance input.
double mvn_log_pdf(const Vec& x, const Vec& mean, const Mat& cov);

double chi2_cdf(double q, int dof);
/// Inverse of chi2_cdf by bisection on the regularized lower incomplete gamma, to
/// |chi2_cdf(q) - prob| < 1e-10.
double chi2_quantile(double prob, int dof);

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive Gauss-Kronrod on [a, b]. Throws NonIntegrable when the error estimate
/// stays above tol * max(1, |value|).
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double tol = 1e-10);
/// Nested adaptive Gauss-Kronrod on the rectangle [lo0, hi0] x [lo1, hi1].
QuadratureResult integrate_2d(const std::function<double(double, double)>& f, double lo0,
                              double hi0, double lo1, double hi1, double tol = 1e-8);

double log_sum_exp(std::span<const double> values);
double median(std::vector<double> values);
double mean(std::span<const double> values);
double sample_variance(std::span<const double> values);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit least_squares_line(std::span<const double> x, std::span<const double> y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
/// Wilson score interval for a binomial proportion at normal quantile z.
Interval wilson_interval(int successes, int trials, double z = 1.959963984540054);

/// Kolmogorov-Smirnov distance between the empirical CDF of samples and the standard normal.
double ks_distance_normal(std::vector<double> samples);

}  // namespace disbayes
