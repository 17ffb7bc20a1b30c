#include "disbayes/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "disbayes/error.hpp"
#include "disbayes/kernels.hpp"

namespace disbayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const ExpFamilyModel& as_exp_family(const Model& model) {
  const auto* ef = dynamic_cast<const ExpFamilyModel*>(&model);
  if (ef == nullptr) {
    throw Error(ErrorCode::RepresentationMismatch,
                to_string(model.kind()) + " model has no exponential-family form");
  }
  return *ef;
}

bool all_gaussian(const ModelSet& models) {
  return std::all_of(models.begin(), models.end(), [](const auto& m) {
    return dynamic_cast<const GaussianLocationModel*>(m.get()) != nullptr;
  });
}

nlohmann::json vec_to_json(const Vec& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      arr.push_back(v(i));
    } else {
      arr.push_back(nullptr);  // JSON has no infinities; only -inf occurs in log weights
    }
  }
  return arr;
}

Vec vec_from_json(const nlohmann::json& arr) {
  Vec v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = arr[i].is_null() ? kNegInf : arr[i].get<double>();
  }
  return v;
}

}  // namespace

// Box ------------------------------------------------------------------------------------------

double Box::volume() const { return (hi - lo).prod(); }

bool Box::contains(const Vec& theta) const {
  if (theta.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (!(theta(i) >= lo(i) && theta(i) <= hi(i))) return false;
  return true;
}

Box Box::unit_square() { return Box{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 1.0)}; }

Box Box::around(const Vec& center, const Vec& half_width, const Box* clip) {
  Box b{center - half_width, center + half_width};
  if (clip != nullptr) {
    b.lo = b.lo.cwiseMax(clip->lo);
    b.hi = b.hi.cwiseMin(clip->hi);
    for (Eigen::Index i = 0; i < b.lo.size(); ++i) {
      if (!(b.hi(i) > b.lo(i))) {
        throw Error(ErrorCode::OutOfBox, "window around center lies outside the support box");
      }
    }
  }
  return b;
}

// Priors ---------------------------------------------------------------------------------------

ConjugatePrior ConjugatePrior::gaussian(const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NonpositiveScale, "prior covariance is not positive definite");
  }
  ConjugatePrior p;
  p.precision = llt.solve(Mat::Identity(cov.rows(), cov.cols()));
  p.precision = 0.5 * (p.precision + p.precision.transpose()).eval();
  p.u = p.precision * mean;
  return p;
}

Vec ConjugatePrior::mean() const { return precision.llt().solve(u); }

Mat ConjugatePrior::cov() const {
  return precision.llt().solve(Mat::Identity(precision.rows(), precision.cols()));
}

std::optional<GaussianDensity> gaussian_form(const NaturalBelief& belief, const ModelSet& models,
                                             const ConjugatePrior& prior) {
  if (!all_gaussian(models)) return std::nullopt;
  double lambda = prior.precision(0, 0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& g = static_cast<const GaussianLocationModel&>(*models[i]);
    lambda += belief.w(static_cast<Eigen::Index>(i)) / (g.sigma() * g.sigma());
  }
  GaussianDensity d;
  d.mean = Vec::Constant(1, (belief.chi(0) + prior.u(0)) / lambda);
  d.cov = Mat::Constant(1, 1, 1.0 / lambda);
  return d;
}

// GridBelief -----------------------------------------------------------------------------------

GridBelief::GridBelief(Box box, int n_per_dim) : box_(std::move(box)), n_(n_per_dim) {
  const int p = box_.dim();
  if (p < 1 || p > 2) throw Error(ErrorCode::UnsupportedModel, "grid beliefs support p <= 2");
  if (n_ < 2) throw Error(ErrorCode::ConfigInvalid, "grid needs at least 2 points per axis");
  Eigen::Index cells = n_;
  if (p == 2) cells *= n_;
  points_.resize(p, cells);
  for (Eigen::Index c = 0; c < cells; ++c) {
    Eigen::Index rest = c;
    for (int a = 0; a < p; ++a) {
      const Eigen::Index idx = rest % n_;
      rest /= n_;
      points_(a, c) = box_.lo(a) + (box_.hi(a) - box_.lo(a)) * static_cast<double>(idx) / (n_ - 1);
    }
  }
  logw_ = Vec::Zero(cells);
}

double GridBelief::spacing(int axis) const { return (box_.hi(axis) - box_.lo(axis)) / (n_ - 1); }

double GridBelief::trapezoid_weight(Eigen::Index cell) const {
  double w = 1.0;
  Eigen::Index rest = cell;
  for (int a = 0; a < dim(); ++a) {
    const Eigen::Index idx = rest % n_;
    rest /= n_;
    w *= spacing(a) * ((idx == 0 || idx == n_ - 1) ? 0.5 : 1.0);
  }
  return w;
}

double GridBelief::log_normalizer() const {
  const double hi = logw_.maxCoeff();
  if (!std::isfinite(hi)) {
    throw Error(ErrorCode::NormalizerDivergence, "grid belief has no finite log weight");
  }
  double acc = 0.0;
  for (Eigen::Index c = 0; c < cells(); ++c) {
    if (logw_(c) > kNegInf) acc += trapezoid_weight(c) * std::exp(logw_(c) - hi);
  }
  return hi + std::log(acc);
}

void GridBelief::normalize() { logw_.array() -= log_normalizer(); }

double GridBelief::mass() const { return std::exp(log_normalizer()); }

Vec GridBelief::cell_masses() const {
  const double lz = log_normalizer();
  Vec out(cells());
  for (Eigen::Index c = 0; c < cells(); ++c) {
    out(c) = logw_(c) > kNegInf ? trapezoid_weight(c) * std::exp(logw_(c) - lz) : 0.0;
  }
  return out;
}

double GridBelief::density_at(const Vec& theta) const {
  if (!box_.contains(theta)) throw Error(ErrorCode::OutOfBox, "theta outside the grid box");
  const int p = dim();
  Eigen::Index base[2] = {0, 0};
  double frac[2] = {0.0, 0.0};
  for (int a = 0; a < p; ++a) {
    const double u = (theta(a) - box_.lo(a)) / spacing(a);
    const auto i = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(u)), n_ - 2);
    base[a] = std::max<Eigen::Index>(i, 0);
    frac[a] = u - static_cast<double>(base[a]);
  }
  double value = 0.0;
  const int corners = p == 1 ? 2 : 4;
  for (int k = 0; k < corners; ++k) {
    double weight = 1.0;
    Eigen::Index cell = 0;
    Eigen::Index stride = 1;
    for (int a = 0; a < p; ++a) {
      const int bit = (k >> a) & 1;
      weight *= bit ? frac[a] : 1.0 - frac[a];
      cell += (base[a] + bit) * stride;
      stride *= n_;
    }
    if (weight != 0.0) value += weight * logw_(cell);
  }
  return value - log_normalizer();
}

GridBelief uniform_grid(const Box& box, int n_per_dim) {
  GridBelief g(box, n_per_dim);
  g.normalize();
  return g;
}

GridBelief gaussian_grid(const Box& box, int n_per_dim, const Vec& mean, const Mat& cov) {
  GridBelief g(box, n_per_dim);
  for (Eigen::Index c = 0; c < g.cells(); ++c) g.logw()(c) = mvn_log_pdf(g.point(c), mean, cov);
  g.normalize();
  return g;
}

// NetworkState ---------------------------------------------------------------------------------

NetworkState NetworkState::natural(ModelSet models, ConjugatePrior prior) {
  NetworkState s;
  s.kind_ = BeliefKind::Natural;
  const int m = static_cast<int>(models.size());
  if (m == 0) throw Error(ErrorCode::EmptyGraph, "network needs at least one agent");
  const int d = as_exp_family(*models.front()).stat_dim();
  for (const auto& model : models) {
    if (as_exp_family(*model).stat_dim() != d) {
      throw Error(ErrorCode::RepresentationMismatch, "agents disagree on the statistic dimension");
    }
  }
  s.models_ = std::move(models);
  s.prior_ = std::move(prior);
  for (int j = 0; j < m; ++j) s.natural_.push_back(NaturalBelief{j, 0, Vec::Zero(d), Vec::Zero(m)});
  return s;
}

NetworkState NetworkState::grid(ModelSet models, const GridBelief& prior) {
  NetworkState s;
  s.kind_ = BeliefKind::Grid;
  const int m = static_cast<int>(models.size());
  if (m == 0) throw Error(ErrorCode::EmptyGraph, "network needs at least one agent");
  for (const auto& model : models) {
    if (model->dim() != prior.dim()) {
      throw Error(ErrorCode::RepresentationMismatch, "model dimension differs from the grid");
    }
  }
  s.models_ = std::move(models);
  for (int j = 0; j < m; ++j) {
    GridBelief g = prior;
    g.agent = j;
    g.step = 0;
    s.grids_.push_back(std::move(g));
  }
  return s;
}

void advance(NetworkState& state, const std::vector<Observation>& observations, const Mat& a) {
  const int m = state.m();
  if (static_cast<int>(observations.size()) != m) {
    throw Error(ErrorCode::RepresentationMismatch, "need one observation per agent");
  }
  if (a.rows() != m || a.cols() != m) {
    throw Error(ErrorCode::InvalidTopology, "communication matrix size differs from the network");
  }
  for (int j = 0; j < m; ++j) {
    state.models_[static_cast<std::size_t>(j)]->check_observation(
        observations[static_cast<std::size_t>(j)]);
  }

  if (state.kind_ == BeliefKind::Natural) {
    const auto& old = state.natural_;
    std::vector<NaturalBelief> next(old.size());
    for (int j = 0; j < m; ++j) {
      const auto& model = as_exp_family(*state.models_[static_cast<std::size_t>(j)]);
      NaturalBelief b;
      b.agent = j;
      b.step = state.step_ + 1;
      b.chi = model.suff_stat(observations[static_cast<std::size_t>(j)]);
      b.w = Vec::Zero(m);
      b.w(j) = 1.0;
      for (int i = 0; i < m; ++i) {
        const double aij = a(i, j);
        if (aij == 0.0) continue;
        b.chi += aij * old[static_cast<std::size_t>(i)].chi;
        b.w += aij * old[static_cast<std::size_t>(i)].w;
      }
      next[static_cast<std::size_t>(j)] = std::move(b);
    }
    state.natural_ = std::move(next);
  } else {
    auto& grids = state.grids_;
    const Mat& points = grids.front().points();
    const Eigen::Index cells = points.cols();
    Mat logw(cells, m);
    Mat lik(cells, m);
    for (int j = 0; j < m; ++j) {
      logw.col(j) = grids[static_cast<std::size_t>(j)].logw();
      Vec col;
      const Model& model = *state.models_[static_cast<std::size_t>(j)];
      if (state.parallel) {
        kernels::loglik_on_grid_parallel(model, observations[static_cast<std::size_t>(j)], points, col);
      } else {
        kernels::loglik_on_grid_serial(model, observations[static_cast<std::size_t>(j)], points, col);
      }
      lik.col(j) = col;
    }
    Mat out;
    if (state.parallel) {
      kernels::consensus_mix_parallel(a, logw, lik, out);
    } else {
      kernels::consensus_mix_serial(a, logw, lik, out);
    }
    for (int j = 0; j < m; ++j) {
      auto& g = grids[static_cast<std::size_t>(j)];
      g.logw() = out.col(j);
      g.normalize();
      g.step = state.step_ + 1;
    }
  }
  ++state.step_;
}

NetworkState distributed_update(NetworkState state, const std::vector<Observation>& observations,
                                const Mat& a) {
  advance(state, observations, a);
  return state;
}

// Densities ------------------------------------------------------------------------------------

double density_at(const NaturalBelief& belief, const ModelSet& models, const ConjugatePrior& prior,
                  const Vec& theta, const Box* box) {
  if (box != nullptr && !box->contains(theta)) {
    throw Error(ErrorCode::OutOfBox, "theta outside the belief box");
  }
  if (auto g = gaussian_form(belief, models, prior)) return mvn_log_pdf(theta, g->mean, g->cov);
  if (box == nullptr) {
    throw Error(ErrorCode::UnsupportedModel, "normalizer quadrature needs a parameter box");
  }
  const Vec lin = belief.chi + prior.u;
  auto unnorm = [&](const Vec& th) {
    double v = th.dot(lin) - prior.log_partition(th);
    for (std::size_t i = 0; i < models.size(); ++i) {
      v -= belief.w(static_cast<Eigen::Index>(i)) * as_exp_family(*models[i]).log_partition(th);
    }
    return v;
  };
  // Shift by the largest value on a coarse lattice so the integrand stays representable.
  GridBelief coarse(*box, 33);
  double shift = kNegInf;
  for (Eigen::Index c = 0; c < coarse.cells(); ++c) shift = std::max(shift, unnorm(coarse.point(c)));
  QuadratureResult z;
  if (box->dim() == 1) {
    z = integrate([&](double x) { return std::exp(unnorm(Vec::Constant(1, x)) - shift); },
                  box->lo(0), box->hi(0), 1e-8);
  } else {
    z = integrate_2d(
        [&](double x, double y) { return std::exp(unnorm(Eigen::Vector2d(x, y)) - shift); },
        box->lo(0), box->hi(0), box->lo(1), box->hi(1), 1e-8);
  }
  if (!(z.value > 0.0) || !std::isfinite(z.value)) {
    throw Error(ErrorCode::NormalizerDivergence, "belief normalizer is not finite and positive");
  }
  return unnorm(theta) - shift - std::log(z.value);
}

double density_at(const GridBelief& belief, const Vec& theta) { return belief.density_at(theta); }

// Ideal posterior and priors -------------------------------------------------------------------

NaturalBelief ideal_posterior(const ModelSet& models, const History& history, std::int64_t t) {
  const int m = history.m();
  NaturalBelief b;
  b.agent = -1;
  b.step = t;
  b.chi = Vec::Zero(as_exp_family(*models.front()).stat_dim());
  for (std::int64_t k = 1; k <= t; ++k) {
    for (int i = 0; i < m; ++i) {
      b.chi += as_exp_family(*models[static_cast<std::size_t>(i)]).suff_stat(history.at(k, i));
    }
  }
  b.chi /= m;
  b.w = Vec::Constant(m, static_cast<double>(t) / m);
  return b;
}

GridBelief ideal_posterior(const History& history, const ModelSet& models, std::int64_t t,
                           const GridBelief& prior) {
  GridBelief g = grid_from_loss(ideal_loss(history, models, t), prior);
  g.agent = -1;
  return g;
}

ConjugatePrior prior_merge(const std::vector<ConjugatePrior>& priors) {
  if (priors.empty()) throw Error(ErrorCode::SupportMismatch, "no priors to merge");
  ConjugatePrior out{Vec::Zero(priors.front().u.size()),
                     Mat::Zero(priors.front().precision.rows(), priors.front().precision.cols())};
  for (const auto& p : priors) {
    if (p.u.size() != out.u.size()) {
      throw Error(ErrorCode::SupportMismatch, "priors live on different parameter spaces");
    }
    out.u += p.u;
    out.precision += p.precision;
  }
  const double m = static_cast<double>(priors.size());
  out.u /= m;
  out.precision /= m;
  return out;
}

GridBelief prior_merge(const std::vector<GridBelief>& priors) {
  if (priors.empty()) throw Error(ErrorCode::SupportMismatch, "no priors to merge");
  GridBelief out = priors.front();
  out.logw().setZero();
  for (const auto& p : priors) {
    if (p.n() != out.n() || p.box().lo != out.box().lo || p.box().hi != out.box().hi) {
      throw Error(ErrorCode::SupportMismatch, "grid priors use different lattices");
    }
    out.logw() += p.logw();
  }
  out.logw() /= static_cast<double>(priors.size());
  out.normalize();
  return out;
}

GridBelief grid_from_loss(const SurrogateLoss& loss, const GridBelief& prior, bool parallel) {
  GridBelief g = prior;
  Vec ll;
  if (parallel) {
    kernels::loss_on_grid_parallel(loss, g.points(), ll);
  } else {
    kernels::loss_on_grid_serial(loss, g.points(), ll);
  }
  g.logw() += ll;
  g.normalize();
  g.step = static_cast<std::int64_t>(loss.t());
  return g;
}

// Snapshots ------------------------------------------------------------------------------------

nlohmann::json to_json(const NaturalBelief& belief) {
  return nlohmann::json{{"kind", "natural"},
                        {"step", belief.step},
                        {"agent", belief.agent},
                        {"chi", vec_to_json(belief.chi)},
                        {"w", vec_to_json(belief.w)}};
}

nlohmann::json to_json(const GridBelief& belief) {
  return nlohmann::json{
      {"kind", "grid"},
      {"step", belief.step},
      {"agent", belief.agent},
      {"logw", vec_to_json(belief.logw())},
      {"box",
       {{"lo", vec_to_json(belief.box().lo)}, {"hi", vec_to_json(belief.box().hi)}, {"n", belief.n()}}}};
}

NaturalBelief natural_from_json(const nlohmann::json& j) {
  if (j.at("kind") != "natural") {
    throw Error(ErrorCode::RepresentationMismatch, "snapshot is not a natural belief");
  }
  NaturalBelief b;
  b.step = j.at("step").get<std::int64_t>();
  b.agent = j.at("agent").get<int>();
  b.chi = vec_from_json(j.at("chi"));
  b.w = vec_from_json(j.at("w"));
  return b;
}

GridBelief grid_from_json(const nlohmann::json& j) {
  if (j.at("kind") != "grid") {
    throw Error(ErrorCode::RepresentationMismatch, "snapshot is not a grid belief");
  }
  const auto& box = j.at("box");
  GridBelief g(Box{vec_from_json(box.at("lo")), vec_from_json(box.at("hi"))}, box.at("n").get<int>());
  g.logw() = vec_from_json(j.at("logw"));
  if (g.logw().size() != g.points().cols()) {
    throw Error(ErrorCode::RepresentationMismatch, "snapshot log weights do not match the lattice");
  }
  g.step = j.at("step").get<std::int64_t>();
  g.agent = j.at("agent").get<int>();
  return g;
}

}  // namespace disbayes
