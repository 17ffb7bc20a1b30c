#include <cmath>
#include <memory>

#include "doctest.h"

#include "disbayes/belief.hpp"
#include "disbayes/error.hpp"
#include "disbayes/graph.hpp"

using namespace disbayes;

namespace {

ModelSet gaussians(int m, double sigma = 1.0) {
  ModelSet out;
  for (int j = 0; j < m; ++j) out.push_back(std::make_shared<GaussianLocationModel>(sigma));
  return out;
}

Vec v1(double a) { return Vec::Constant(1, a); }

ConjugatePrior std_prior() { return ConjugatePrior::gaussian(v1(0.0), Mat::Identity(1, 1)); }

double grid_mean(const GridBelief& g) {
  const Vec mass = g.cell_masses();
  double mu = 0.0;
  for (Eigen::Index c = 0; c < g.cells(); ++c) mu += mass(c) * g.points()(0, c);
  return mu;
}

NetworkState run_natural(const ModelSet& models, const History& h, const GraphSchedule& s,
                         std::int64_t t) {
  NetworkState state = NetworkState::natural(models, std_prior());
  for (std::int64_t k = 0; k < t; ++k) advance(state, h.row(k + 1), s.matrix_at(k));
  return state;
}

}  // namespace

TEST_SUITE("belief") {

TEST_CASE("single isolated agent is the conjugate posterior") {
  const ModelSet models = gaussians(1);
  NetworkState state = NetworkState::natural(models, std_prior());
  advance(state, {{1.0, {}}}, Mat::Identity(1, 1));
  const auto form = gaussian_form(state.natural_beliefs()[0], models, state.prior());
  REQUIRE(form.has_value());
  CHECK(form->mean(0) == doctest::Approx(0.5));
  CHECK(form->cov(0, 0) == doctest::Approx(0.5));
  const double at_mode = density_at(state.natural_beliefs()[0], models, state.prior(), v1(0.5));
  CHECK(at_mode == doctest::Approx(0.5 * std::log(1.0 / M_PI)).epsilon(1e-14));
}

TEST_CASE("likelihood weight recursion") {
  const ModelSet models = gaussians(3);
  const Mat j3 = Mat::Constant(3, 3, 1.0 / 3.0);
  NetworkState state = NetworkState::natural(models, std_prior());
  const std::vector<Observation> row{{0.1, {}}, {0.2, {}}, {0.3, {}}};
  advance(state, row, j3);
  CHECK(state.natural_beliefs()[0].w(0) == 1.0);
  CHECK(state.natural_beliefs()[0].w(1) == 0.0);
  advance(state, row, j3);
  const Vec& w = state.natural_beliefs()[0].w;
  CHECK(w(0) == doctest::Approx(4.0 / 3.0));
  CHECK(w(1) == doctest::Approx(1.0 / 3.0));
  CHECK(w(2) == doctest::Approx(1.0 / 3.0));
  CHECK(state.step() == 2);
  CHECK(state.natural_beliefs()[2].step == 2);
}

TEST_CASE("advance rejects mismatched input") {
  const ModelSet models = gaussians(3);
  NetworkState state = NetworkState::natural(models, std_prior());
  CHECK_THROWS_AS(advance(state, {{0.0, {}}}, Mat::Identity(3, 3)), Error);
  CHECK_THROWS_AS(advance(state, {{0.0, {}}, {0.0, {}}, {0.0, {}}}, Mat::Identity(2, 2)), Error);
  ModelSet mixed = gaussians(1);
  mixed.push_back(std::make_shared<LogisticModel>(2));
  CHECK_THROWS_AS(NetworkState::natural(mixed, std_prior()), Error);
}

TEST_CASE("recursion matches the loss definition") {
  const int m = 4;
  const ModelSet models = gaussians(m, 1.5);
  const History h = generate_history(models, {v1(0.7), {}}, 60, 3, 0);
  const GraphSchedule s =
      GraphSchedule::bernoulli_switch(metropolis_weights(Topology::ring(m)), 0.4, 5);
  const NetworkState state = run_natural(models, h, s, 60);
  const auto losses = surrogate_losses(h, s, models, 60);
  for (int j = 0; j < m; ++j) {
    const NaturalBelief& b = state.natural_beliefs()[static_cast<std::size_t>(j)];
    const SurrogateLoss& f = losses[static_cast<std::size_t>(j)];
    for (int i = 0; i < m; ++i) CHECK(b.w(i) == doctest::Approx(f.source_weight(i)).epsilon(1e-12));
    // log posterior differences agree with -t f differences.
    const double lhs = density_at(b, models, state.prior(), v1(1.1)) -
                       density_at(b, models, state.prior(), v1(0.2));
    const double rhs = f.weighted_log_lik(v1(1.1)) - f.weighted_log_lik(v1(0.2)) -
                       0.5 * (1.1 * 1.1 - 0.2 * 0.2);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("grid recursion approaches the closed form as the lattice refines") {
  const int m = 3;
  const ModelSet models = gaussians(m);
  const History h = generate_history(models, {v1(0.4), {}}, 30, 8, 0);
  const GraphSchedule s = GraphSchedule::fixed(metropolis_weights(Topology::path(m)));
  const NetworkState exact = run_natural(models, h, s, 30);
  const auto form = gaussian_form(exact.natural_beliefs()[0], models, exact.prior());
  REQUIRE(form.has_value());

  const Box box{v1(-8.0), v1(8.0)};
  double previous = INFINITY;
  for (const int n : {100, 200, 400}) {
    NetworkState grid = NetworkState::grid(models, gaussian_grid(box, n, v1(0.0), Mat::Identity(1, 1)));
    for (std::int64_t k = 0; k < 30; ++k) advance(grid, h.row(k + 1), s.matrix_at(k));
    const GridBelief& g = grid.grid_beliefs()[0];
    CHECK(g.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(grid_mean(g) == doctest::Approx(form->mean(0)).epsilon(1e-9));
    // Between lattice points the log-linear interpolation error shrinks with the spacing.
    const Vec probe = v1(form->mean(0) + 0.37 * g.spacing(0));
    const double err = std::abs(g.density_at(probe) -
                                density_at(exact.natural_beliefs()[0], models, exact.prior(), probe));
    CHECK(err < previous);
    CHECK(err <= 0.125 * g.spacing(0) * g.spacing(0) / form->cov(0, 0) + 1e-9);
    previous = err;
  }
}

TEST_CASE("grid from loss equals the grid recursion") {
  const int m = 3;
  const ModelSet models = gaussians(m);
  const History h = generate_history(models, {v1(-0.2), {}}, 20, 4, 1);
  const GraphSchedule s = GraphSchedule::fixed(metropolis_weights(Topology::ring(m)));
  const GridBelief prior = gaussian_grid(Box{v1(-6.0), v1(6.0)}, 301, v1(0.0), Mat::Identity(1, 1));
  NetworkState grid = NetworkState::grid(models, prior);
  for (std::int64_t k = 0; k < 20; ++k) advance(grid, h.row(k + 1), s.matrix_at(k));
  const auto losses = surrogate_losses(h, s, models, 20);
  for (int j = 0; j < m; ++j) {
    const GridBelief direct = grid_from_loss(losses[static_cast<std::size_t>(j)], prior);
    const GridBelief& rec = grid.grid_beliefs()[static_cast<std::size_t>(j)];
    CHECK((direct.logw() - rec.logw()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(direct.density_at(v1(0.1)) == doctest::Approx(rec.density_at(v1(0.1))).epsilon(1e-9));
  }
}

TEST_CASE("grid bookkeeping") {
  const GridBelief u = uniform_grid(Box::unit_square(), 11);
  CHECK(u.cells() == 121);
  CHECK(u.spacing(0) == doctest::Approx(0.1));
  CHECK(u.mass() == doctest::Approx(1.0));
  CHECK(u.cell_masses().sum() == doctest::Approx(1.0));
  CHECK(u.density_at(Eigen::Vector2d(0.33, 0.71)) == doctest::Approx(0.0).epsilon(1e-12));
  // Cell index runs fastest along axis 0.
  CHECK(u.point(1)(0) == doctest::Approx(0.1));
  CHECK(u.point(1)(1) == 0.0);
  CHECK(Box::unit_square().volume() == 1.0);
  CHECK_FALSE(Box::unit_square().contains(Eigen::Vector2d(1.01, 0.5)));
  const Box clip = Box::unit_square();
  const Box b = Box::around(Eigen::Vector2d(0.9, 0.1), Eigen::Vector2d(0.2, 0.2), &clip);
  CHECK(b.hi(0) == 1.0);
  CHECK(b.lo(1) == 0.0);
  CHECK(b.lo(0) == doctest::Approx(0.7));
}

TEST_CASE("snapshots round trip exactly") {
  const ModelSet models = gaussians(2);
  NetworkState state = NetworkState::natural(models, std_prior());
  advance(state, {{1.0 / 3.0, {}}, {std::sqrt(2.0), {}}}, Mat::Constant(2, 2, 0.5));
  const NaturalBelief& b = state.natural_beliefs()[1];
  const NaturalBelief back = natural_from_json(nlohmann::json::parse(to_json(b).dump()));
  CHECK(back.agent == 1);
  CHECK(back.step == 1);
  CHECK(back.chi == b.chi);
  CHECK(back.w == b.w);

  GridBelief g = gaussian_grid(Box{v1(-3.0), v1(3.0)}, 41, v1(0.3), Mat::Constant(1, 1, 0.7));
  g.agent = 4;
  g.step = 9;
  const GridBelief gb = grid_from_json(nlohmann::json::parse(to_json(g).dump()));
  CHECK(gb.logw() == g.logw());
  CHECK(gb.n() == 41);
  CHECK(gb.agent == 4);
  CHECK(gb.step == 9);
  CHECK(gb.box().lo == g.box().lo);
  CHECK_THROWS(natural_from_json(to_json(g)));
}

TEST_CASE("prior merge") {
  const ConjugatePrior a = ConjugatePrior::gaussian(v1(0.0), Mat::Identity(1, 1));
  const ConjugatePrior b = ConjugatePrior::gaussian(v1(2.0), Mat::Identity(1, 1));
  const ConjugatePrior ab = prior_merge({a, b});
  CHECK(ab.mean()(0) == doctest::Approx(1.0));
  CHECK(ab.cov()(0, 0) == doctest::Approx(1.0));
  const ConjugatePrior c = ConjugatePrior::gaussian(v1(0.0), Mat::Constant(1, 1, 4.0));
  CHECK(prior_merge({a, c}).cov()(0, 0) == doctest::Approx(1.0 / 0.625));
  CHECK(prior_merge({a}).mean() == a.mean());

  const Box box{v1(-8.0), v1(10.0)};
  const GridBelief ga = gaussian_grid(box, 201, v1(0.0), Mat::Identity(1, 1));
  const GridBelief gb = gaussian_grid(box, 201, v1(2.0), Mat::Identity(1, 1));
  CHECK(grid_mean(prior_merge(std::vector<GridBelief>{ga, gb})) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ideal posterior tempers every likelihood by one over m") {
  const int m = 4;
  const ModelSet models = gaussians(m);
  const History h = generate_history(models, {v1(1.0), {}}, 50, 6, 0);
  const NaturalBelief ideal = ideal_posterior(models, h, 50);
  double sum = 0.0;
  for (std::int64_t k = 1; k <= 50; ++k)
    for (int i = 0; i < m; ++i) sum += h.at(k, i).y;
  const auto form = gaussian_form(ideal, models, std_prior());
  REQUIRE(form.has_value());
  CHECK(form->cov(0, 0) == doctest::Approx(1.0 / 51.0));
  CHECK(form->mean(0) == doctest::Approx(sum / m / 51.0));

  const GridBelief prior = gaussian_grid(Box{v1(-6.0), v1(6.0)}, 801, v1(0.0), Mat::Identity(1, 1));
  const GridBelief g = ideal_posterior(h, models, 50, prior);
  CHECK(grid_mean(g) == doctest::Approx(form->mean(0)).epsilon(1e-5));
}

TEST_CASE("detection beliefs stay inside the unit square") {
  ModelSet models;
  models.push_back(std::make_shared<DetectionModel>(Eigen::Vector2d(0.1, 0.1), 0.1));
  models.push_back(std::make_shared<DetectionModel>(Eigen::Vector2d(0.9, 0.2), 0.1));
  const History h = generate_history(models, {Eigen::Vector2d(0.55, 0.45), {}}, 15, 2, 0);
  NetworkState state = NetworkState::grid(models, uniform_grid(Box::unit_square(), 41));
  const Mat a = Mat::Constant(2, 2, 0.5);
  for (std::int64_t k = 0; k < 15; ++k) advance(state, h.row(k + 1), a);
  for (const auto& g : state.grid_beliefs()) {
    CHECK(g.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(g.log_normalizer()));
  }
}

}  // TEST_SUITE
