#include "disbayes/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "disbayes/error.hpp"

namespace disbayes {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// log(erfc(x)) for x >= 0, switching to the asymptotic series once erfc underflows.
double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  const double x2 = x * x;
  return -x2 - std::log(x * std::sqrt(std::numbers::pi)) +
         std::log1p(-1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2));
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_ccdf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-normal_ccdf(x));
  return std::log(0.5) + log_erfc(-x * kInvSqrt2);
}

double log_normal_cdf_diff(double a, double b) {
  if (!(a < b)) return -std::numeric_limits<double>::infinity();
  if (b <= 0.0) {
    const double la = log_normal_cdf(a);
    const double lb = log_normal_cdf(b);
    return lb + std::log1p(-std::exp(la - lb));
  }
  if (a >= 0.0) {
    const double la = log_normal_cdf(-a);
    const double lb = log_normal_cdf(-b);
    return la + std::log1p(-std::exp(lb - la));
  }
  return std::log1p(-normal_cdf(a) - normal_ccdf(b));
}

double mvn_log_pdf(const Vec& x, const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  const Vec diff = x - mean;
  const Vec solved = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (solved.squaredNorm() + log_det +
                 static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

double chi2_cdf(double q, int dof) {
  if (q <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * q);
}

double chi2_quantile(double prob, int dof) {
  if (prob <= 0.0) return 0.0;
  if (prob >= 1.0) return std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_cdf(hi, dof) < prob) hi *= 2.0;
  for (int iter = 0; iter < 400; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double p = chi2_cdf(mid, dof);
    if (std::abs(p - prob) < 1e-10 && iter > 60) return mid;
    (p < prob ? lo : hi) = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return 0.5 * (lo + hi);
}

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double tol) {
  QuadratureResult out;
  double l1 = 0.0;
  out.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol,
                                                                           &out.error, &l1);
  if (!std::isfinite(out.value) || out.error > tol * std::max(1.0, std::abs(l1)) * 10.0) {
    throw Error(ErrorCode::NonIntegrable,
                "quadrature on [" + std::to_string(a) + ", " + std::to_string(b) +
                    "] did not converge (error estimate " + std::to_string(out.error) + ")");
  }
  return out;
}

QuadratureResult integrate_2d(const std::function<double(double, double)>& f, double lo0,
                              double hi0, double lo1, double hi1, double tol) {
  double inner_error = 0.0;
  auto outer = [&](double x) {
    const auto r = integrate([&](double y) { return f(x, y); }, lo1, hi1, tol);
    inner_error = std::max(inner_error, r.error);
    return r.value;
  };
  auto r = integrate(outer, lo0, hi0, tol);
  r.error += inner_error * (hi0 - lo0);
  return r;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return acc / static_cast<double>(values.size() - 1);
}

LineFit least_squares_line(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

Interval wilson_interval(int successes, int trials, double z) {
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {center - half, center + half};
}

double ks_distance_normal(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = normal_cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace disbayes
