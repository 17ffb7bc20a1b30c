#include <cmath>
#include <memory>
#include <sstream>

#include "doctest.h"

#include "disbayes/error.hpp"
#include "disbayes/models.hpp"
#include "disbayes/numeric.hpp"
#include "disbayes/rng.hpp"

using namespace disbayes;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) { return Eigen::Vector2d(a, b); }

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_SUITE("models") {

TEST_CASE("gaussian location model natural parameterization") {
  const GaussianLocationModel g1(1.0);
  CHECK(g1.suff_stat({2.0, {}})(0) == 2.0);
  CHECK(g1.log_partition(v1(0.5)) == doctest::Approx(0.125));
  const GaussianLocationModel g2(2.0);
  for (const double th : {-3.0, 0.0, 1.7}) CHECK(g2.hess_psi(v1(th))(0, 0) == 0.25);
  CHECK_THROWS_AS(GaussianLocationModel(0.0), Error);
  CHECK_THROWS_AS(GaussianLocationModel(-1.0), Error);
}

TEST_CASE("gaussian density integrates to one") {
  const GaussianLocationModel g(1.0);
  const auto r = integrate([&](double x) { return std::exp(g.log_lik(v1(0.7), {x, {}})); }, -15.0, 15.0);
  CHECK(std::abs(r.value - 1.0) < 1e-8);
}

TEST_CASE("exponential family gradients match finite differences") {
  const GaussianLocationModel g(1.3);
  CounterRng rng(5);
  for (int i = 0; i < 20; ++i) {
    const double th = 4.0 * rng.normal();
    const double h = 1e-5 * (1.0 + std::abs(th));
    const double fd = (g.log_partition(v1(th + h)) - g.log_partition(v1(th - h))) / (2 * h);
    const double fd2 = (g.grad_psi(v1(th + h))(0) - g.grad_psi(v1(th - h))(0)) / (2 * h);
    CHECK(rel_err(g.grad_psi(v1(th))(0), fd) < 1e-5);
    CHECK(rel_err(g.hess_psi(v1(th))(0, 0), fd2) < 1e-5);
  }
}

TEST_CASE("mean parameter identity by Monte Carlo") {
  const GaussianLocationModel g(0.8);
  const Vec th = v1(0.6);
  std::vector<double> stats;
  for (std::uint64_t n = 0; n < 100000; ++n) {
    CounterRng rng(11, 0, 0, n, Purpose::Observation);
    stats.push_back(g.suff_stat(g.sample(th, rng))(0));
  }
  const double se = std::sqrt(sample_variance(stats) / stats.size());
  CHECK(std::abs(mean(stats) - g.grad_psi(th)(0)) < 4.0 * se);
  // The variance of T is the Fisher information hess_psi.
  CHECK(std::abs(sample_variance(stats) - g.hess_psi(th)(0, 0)) < 0.02 * g.hess_psi(th)(0, 0));
}

TEST_CASE("logistic log-likelihood values") {
  const Vec th = v2(0.0, 0.0);
  CHECK(logistic_loglik(th, {1.0, v2(0.3, -2.0)}) == doctest::Approx(-std::log(2.0)));
  CHECK(logistic_loglik(th, {0.0, v2(0.3, -2.0)}) == doctest::Approx(-std::log(2.0)));
  CHECK(logistic_loglik(v2(1.0, -1.0), {0.0, v2(1.0, 1.0)}) == doctest::Approx(-0.6931471805599453));
  // <theta, x> = 50, y = 1: log(sigmoid(50)) = -log1p(e^-50) ~ -1.9e-22.
  const double far = logistic_loglik(v1(50.0), {1.0, v1(1.0)});
  CHECK(std::abs(far) < 1e-15);
  CHECK(std::isfinite(logistic_loglik(v1(800.0), {0.0, v1(1.0)})));
  CHECK(logistic_loglik(v1(800.0), {0.0, v1(1.0)}) == doctest::Approx(-800.0));
}

TEST_CASE("softplus branches are continuous") {
  for (const double e : {-30.0, 30.0}) {
    CHECK(softplus(std::nextafter(e, 0.0)) == doctest::Approx(softplus(e)).epsilon(1e-13));
  }
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("logistic log-likelihood is concave along segments") {
  CounterRng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec a = v2(3 * rng.normal(), 3 * rng.normal());
    const Vec b = v2(3 * rng.normal(), 3 * rng.normal());
    const Observation obs{rng.uniform() < 0.5 ? 0.0 : 1.0, v2(rng.normal(), rng.normal())};
    const double mid = logistic_loglik(0.5 * (a + b), obs);
    CHECK(mid >= 0.5 * (logistic_loglik(a, obs) + logistic_loglik(b, obs)) - 1e-12);
  }
}

TEST_CASE("logistic gradient and hessian match finite differences") {
  const LogisticModel model(2);
  CounterRng rng(9);
  for (int i = 0; i < 20; ++i) {
    const Vec th = v2(rng.normal(), rng.normal());
    const Observation obs{rng.uniform() < 0.5 ? 0.0 : 1.0, v2(rng.normal(), rng.normal())};
    const Vec g = model.grad_log_lik(th, obs);
    const Mat h = model.hess_log_lik(th, obs);
    for (int a = 0; a < 2; ++a) {
      Vec e = Vec::Zero(2);
      e(a) = 1e-5 * (1.0 + th.norm());
      const double fd = (model.log_lik(th + e, obs) - model.log_lik(th - e, obs)) / (2 * e(a));
      CHECK(std::abs(g(a) - fd) < 1e-6);
      const Vec fdg = (model.grad_log_lik(th + e, obs) - model.grad_log_lik(th - e, obs)) / (2 * e(a));
      CHECK((h.col(a) - fdg).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("logistic observation checks and csv round trip") {
  const LogisticModel model(2);
  CHECK_THROWS_AS(model.check_observation({0.5, v2(0, 0)}), Error);
  CHECK_THROWS_AS(model.check_observation({1.0, v1(0)}), Error);
  std::vector<Observation> data{{1.0, v2(0.25, -1.5)}, {0.0, v2(1e-300, 3.0 / 7.0)}};
  std::stringstream buf;
  write_logistic_csv(buf, data);
  CHECK(buf.str().rfind("x1,x2,y\n", 0) == 0);
  const auto back = read_logistic_csv(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[1].x(1) == data[1].x(1));
  CHECK(back[1].x(0) == data[1].x(0));
  CHECK(back[0].y == 1.0);
  std::istringstream bad_label("x1,y\n0.5,2\n");
  CHECK_THROWS_AS(read_logistic_csv(bad_label), Error);
  std::istringstream bad_header("a,b\n0.5,1\n");
  CHECK_THROWS_AS(read_logistic_csv(bad_header), Error);
}

TEST_CASE("detection log-density at the mode") {
  const DetectionModel model(v2(0.0, 0.0), 0.1);
  const Vec th = v2(0.3, 0.4);
  CHECK(model.upper() == doctest::Approx(0.5));
  // Mean 0.5 sits on the upper truncation bound; log Z = log(Phi(0) - Phi(-5)).
  const double expected = -std::log(0.1) - std::log(normal_cdf(0.0) - normal_cdf(-5.0)) -
                          0.5 * std::log(2 * M_PI);
  CHECK(detection_loglik(th, 0.5, model) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(detection_loglik(th, 0.5, model) == doctest::Approx(2.076794313652626).epsilon(1e-12));
  CHECK_THROWS_AS(detection_loglik(th, 0.51, model), Error);
  CHECK_THROWS_AS(detection_loglik(th, -0.01, model), Error);
  try {
    detection_loglik(th, 0.6, model);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfSupport);
  }
}

TEST_CASE("detection density integrates to one over its support") {
  for (const double sigma : {0.05, 0.1, 0.3}) {
    const DetectionModel model(v2(0.2, 0.7), sigma);
    for (const Vec& th : {v2(0.5, 0.5), v2(0.2, 0.69), v2(1.0, 0.0)}) {
      const auto r = integrate([&](double x) { return std::exp(detection_loglik(th, x, model)); }, 0.0,
                               model.upper(), 1e-10);
      CHECK(std::abs(r.value - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("detection gradient and hessian match finite differences") {
  const DetectionModel model(v2(0.9, 0.2), 0.1);
  CounterRng rng(21);
  for (int i = 0; i < 20; ++i) {
    const Vec th = v2(0.05 + 0.9 * rng.uniform(), 0.05 + 0.9 * rng.uniform());
    const Observation obs{rng.uniform() * model.upper(), {}};
    const Vec g = model.grad_log_lik(th, obs);
    const Mat h = model.hess_log_lik(th, obs);
    for (int a = 0; a < 2; ++a) {
      Vec e = Vec::Zero(2);
      e(a) = 1e-6;
      const double fd = (model.log_lik(th + e, obs) - model.log_lik(th - e, obs)) / 2e-6;
      CHECK(rel_err(g(a), fd) < 1e-5);
      const Vec fdg = (model.grad_log_lik(th + e, obs) - model.grad_log_lik(th - e, obs)) / 2e-6;
      for (int b = 0; b < 2; ++b) CHECK(rel_err(h(b, a), fdg(b)) < 1e-4);
    }
    // Summary form agrees with the per-observation form.
    CHECK(model.summary_log_lik(th, model.summary(obs)) == doctest::Approx(model.log_lik(th, obs)));
  }
}

TEST_CASE("detection fisher equals the score covariance") {
  const DetectionModel model(v2(0.1, 0.1), 0.1);
  const Vec th = v2(0.55, 0.45);
  Mat acc = Mat::Zero(2, 2);
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    CounterRng rng(77, 0, 0, static_cast<std::uint64_t>(k), Purpose::Observation);
    const Vec s = model.grad_log_lik(th, model.sample(th, rng));
    acc += s * s.transpose();
  }
  acc /= n;
  const Mat fisher = detection_fisher(model, th);
  CHECK((acc - fisher).norm() / fisher.norm() < 0.02);
  // The squared mean-shift bracket alone is a different matrix.
  CHECK((detection_fisher_as_printed(model, th) - fisher).norm() / fisher.norm() > 0.05);
}

TEST_CASE("samplers are deterministic per stream and respect supports") {
  const GaussianLocationModel g(1.0);
  const TrueDistribution truth{v1(0.0), {}};
  CounterRng a(1, 2, 3, 4, Purpose::Observation);
  CounterRng b(1, 2, 3, 4, Purpose::Observation);
  CHECK(sample_observation(g, truth, 3, a).y == sample_observation(g, truth, 3, b).y);

  std::vector<double> xs;
  for (std::uint64_t k = 0; k < 100000; ++k) {
    CounterRng rng(1, 0, 0, k, Purpose::Observation);
    xs.push_back(sample_observation(g, truth, 0, rng).y);
  }
  CHECK(std::abs(mean(xs)) <= 0.02);

  const DetectionModel det(v2(0.0, 0.0), 0.3);
  for (std::uint64_t k = 0; k < 10000; ++k) {
    CounterRng rng(2, 0, 0, k, Purpose::Observation);
    const double d = det.sample(v2(0.3, 0.4), rng).y;
    CHECK(d >= 0.0);
    CHECK(d <= det.upper());
  }
}

TEST_CASE("misspecified gaussian truth draws with sigma0") {
  const GaussianLocationModel g(1.0);
  const TrueDistribution truth{v1(1.0), {2.0}};
  std::vector<double> xs;
  for (std::uint64_t k = 0; k < 50000; ++k) {
    CounterRng rng(4, 0, 0, k, Purpose::Observation);
    xs.push_back(sample_observation(g, truth, 0, rng).y);
  }
  CHECK(std::abs(std::sqrt(sample_variance(xs)) - 2.0) < 0.05);
}

TEST_CASE("kl to model closed forms") {
  const GaussianLocationModel g1(1.0);
  const TrueDistribution std_normal{v1(0.0), {}};
  CHECK(kl_to_model(std_normal, g1, 0, v1(1.0)).value == doctest::Approx(0.5));
  CHECK(kl_to_model(std_normal, g1, 0, v1(0.0)).value == 0.0);
  const GaussianLocationModel g2(2.0);
  const TrueDistribution unit_truth{v1(0.0), {1.0}};
  const KlEstimate kl = kl_to_model(unit_truth, g2, 0, v1(0.0));
  CHECK(kl.closed_form);
  CHECK(kl.value == doctest::Approx(0.5 * (0.25 - 1.0 + std::log(4.0))));
  CHECK(kl.value == doctest::Approx(0.3181).epsilon(1e-3));
  CounterRng rng(8);
  for (int i = 0; i < 50; ++i) CHECK(kl_to_model(unit_truth, g2, 0, v1(3 * rng.normal())).value >= 0.0);
}

TEST_CASE("kl to model by Monte Carlo for logistic and detection") {
  const LogisticModel lm(2);
  const TrueDistribution truth{v2(1.0, -0.5), {}};
  const KlEstimate at_truth = kl_to_model(truth, lm, 0, truth.theta0, 4000, 1);
  CHECK_FALSE(at_truth.closed_form);
  CHECK(std::abs(at_truth.value) < 1e-12);
  const KlEstimate off = kl_to_model(truth, lm, 0, v2(0.0, 0.0), 20000, 1);
  CHECK(off.value > 0.0);
  CHECK(off.std_error > 0.0);

  const DetectionModel det(v2(0.1, 0.1), 0.1);
  const TrueDistribution dt{v2(0.55, 0.45), {}};
  CHECK(kl_to_model(dt, det, 0, v2(0.6, 0.45), 20000, 2).value > 0.0);
  CHECK_THROWS_AS(kl_to_model(dt, det, 0, v2(1.5, 0.45), 100, 2), Error);
}

TEST_CASE("negative entropy of a normal truth") {
  CHECK(gaussian_neg_entropy(1.0) == doctest::Approx(-0.5 * std::log(2 * M_PI * M_E)));
  CHECK(gaussian_neg_entropy(2.0) == doctest::Approx(gaussian_neg_entropy(1.0) - std::log(2.0)));
}

}  // TEST_SUITE
