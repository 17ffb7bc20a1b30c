#include "disbayes/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "disbayes/error.hpp"

namespace disbayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

double log_det_spd(const Mat& m) {
  const Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  const Mat& l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

const GaussianLocationModel& as_gaussian(const Model& model) {
  const auto* g = dynamic_cast<const GaussianLocationModel*>(&model);
  if (g == nullptr) {
    throw Error(ErrorCode::UnsupportedModel,
                to_string(model.kind()) + " agents have no closed-form KL; only gaussian agents do");
  }
  return *g;
}

// Spread of the data-generating distribution seen by agent j.
double truth_sd(const ModelSet& models, const TrueDistribution& truth, int j) {
  return truth.misspecified() ? truth.sigma0_for(j)
                              : as_gaussian(*models[static_cast<std::size_t>(j)]).sigma();
}

Box box_union(const Box& a, const Box& b) {
  return Box{a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi)};
}

Vec sample_density(const Density& d, CounterRng& rng) {
  if (d.sampler) return d.sampler(rng);
  if (!d.gaussian) {
    throw Error(ErrorCode::UnsupportedModel, "Monte Carlo divergence needs a sampler for p");
  }
  const Eigen::Index p = d.gaussian->mean.size();
  Vec z(p);
  for (Eigen::Index i = 0; i < p; ++i) z(i) = rng.normal();
  const Mat l = Eigen::LLT<Mat>(d.gaussian->cov).matrixL();
  return d.gaussian->mean + l * z;
}

double closed_form(const GaussianDensity& p, const GaussianDensity& q, DivergenceKind kind,
                   double rho, bool& ok) {
  ok = true;
  switch (kind) {
    case DivergenceKind::KL:
      return gaussian_kl(p, q);
    case DivergenceKind::Renyi:
      return rho == 1.0 ? gaussian_kl(p, q) : gaussian_renyi(p, q, rho);
    case DivergenceKind::Hellinger: {
      const double bc = std::exp(-0.5 * gaussian_renyi(p, q, 0.5));
      return std::sqrt(std::max(0.0, 1.0 - bc));
    }
    case DivergenceKind::ChiSq:
      return std::expm1(gaussian_renyi(p, q, 2.0));
    case DivergenceKind::TV: {
      if (p.mean.size() == 1) {
        return gaussian_tv_1d(p.mean(0), p.cov(0, 0), q.mean(0), q.cov(0, 0));
      }
      if ((p.cov - q.cov).cwiseAbs().maxCoeff() == 0.0) {
        const Vec d = p.mean - q.mean;
        const double delta = std::sqrt(d.dot(Eigen::LLT<Mat>(p.cov).solve(d)));
        return 2.0 * normal_cdf(0.5 * delta) - 1.0;
      }
      ok = false;
      return 0.0;
    }
  }
  ok = false;
  return 0.0;
}

// Integral of f over a box of dimension 1 or 2.
double integrate_box(const std::function<double(const Vec&)>& f, const Box& box, double tol) {
  if (box.dim() == 1) {
    Vec th(1);
    return integrate(
               [&](double x) {
                 th(0) = x;
                 return f(th);
               },
               box.lo(0), box.hi(0), tol)
        .value;
  }
  if (box.dim() == 2) {
    Vec th(2);
    return integrate_2d(
               [&](double x, double y) {
                 th(0) = x;
                 th(1) = y;
                 return f(th);
               },
               box.lo(0), box.hi(0), box.lo(1), box.hi(1), tol)
        .value;
  }
  throw Error(ErrorCode::NonIntegrable, "quadrature is limited to one or two dimensions");
}

void require_shared_support(double lp, double lq) {
  if (lp > -kInf && lq == -kInf) {
    throw Error(ErrorCode::SupportMismatch, "p puts mass where q has none");
  }
}

DivergenceReport by_quadrature(const Density& p, const Density& q, DivergenceKind kind,
                               const DivergenceOptions& opt) {
  DivergenceReport r{kind, opt.rho, 0.0, DivergenceMethod::Quadrature, opt.tol, 0, 0.0};
  const Box box = box_union(p.integration_box(), q.integration_box());
  const double rho = opt.rho;
  const bool renyi_as_kl = kind == DivergenceKind::Renyi && rho == 1.0;
  auto pair = [&](const Vec& th, double& lp, double& lq) {
    lp = p.log_density(th);
    lq = q.log_density(th);
  };
  if (kind == DivergenceKind::KL || renyi_as_kl) {
    r.value = integrate_box(
        [&](const Vec& th) {
          double lp, lq;
          pair(th, lp, lq);
          if (lp == -kInf) return 0.0;
          require_shared_support(lp, lq);
          return std::exp(lp) * (lp - lq);
        },
        box, opt.tol);
  } else if (kind == DivergenceKind::Renyi) {
    const double integral = integrate_box(
        [&](const Vec& th) {
          double lp, lq;
          pair(th, lp, lq);
          if (lp == -kInf) return 0.0;
          if (rho > 1.0) require_shared_support(lp, lq);
          return std::exp(rho * lp + (1.0 - rho) * lq);
        },
        box, opt.tol);
    r.value = std::log(integral) / (rho - 1.0);
  } else if (kind == DivergenceKind::Hellinger) {
    const double bc = integrate_box(
        [&](const Vec& th) {
          double lp, lq;
          pair(th, lp, lq);
          if (lp == -kInf || lq == -kInf) return 0.0;
          return std::exp(0.5 * (lp + lq));
        },
        box, opt.tol);
    r.value = std::sqrt(std::max(0.0, 1.0 - bc));
  } else if (kind == DivergenceKind::TV) {
    r.value = 0.5 * integrate_box(
                        [&](const Vec& th) {
                          double lp, lq;
                          pair(th, lp, lq);
                          return std::abs(std::exp(lp) - std::exp(lq));
                        },
                        box, opt.tol);
  } else {
    const double integral = integrate_box(
        [&](const Vec& th) {
          double lp, lq;
          pair(th, lp, lq);
          if (lp == -kInf) return 0.0;
          require_shared_support(lp, lq);
          return std::exp(2.0 * lp - lq);
        },
        box, opt.tol);
    r.value = integral - 1.0;
  }
  r.value = std::max(0.0, r.value);
  return r;
}

DivergenceReport by_monte_carlo(const Density& p, const Density& q, DivergenceKind kind,
                                const DivergenceOptions& opt) {
  DivergenceReport r{kind, opt.rho, 0.0, DivergenceMethod::MonteCarlo, 0.0, opt.mc_draws, 0.0};
  const double rho = opt.rho;
  std::vector<double> h(opt.mc_draws);
  for (std::size_t n = 0; n < opt.mc_draws; ++n) {
    CounterRng rng(opt.seed, 0, 0, n, Purpose::MonteCarlo);
    const Vec th = sample_density(p, rng);
    const double lp = p.log_density(th);
    const double lq = q.log_density(th);
    const bool needs_q = kind == DivergenceKind::KL || kind == DivergenceKind::ChiSq ||
                         (kind == DivergenceKind::Renyi && rho >= 1.0);
    if (needs_q) require_shared_support(lp, lq);
    switch (kind) {
      case DivergenceKind::KL: h[n] = lp - lq; break;
      case DivergenceKind::Renyi:
        h[n] = rho == 1.0 ? lp - lq : std::exp((rho - 1.0) * (lp - lq));
        break;
      case DivergenceKind::Hellinger: h[n] = std::exp(0.5 * (lq - lp)); break;
      case DivergenceKind::TV: h[n] = 0.5 * std::abs(1.0 - std::exp(lq - lp)); break;
      case DivergenceKind::ChiSq: h[n] = std::exp(lp - lq); break;
    }
  }
  const double mu = mean(h);
  const double se = std::sqrt(sample_variance(h) / static_cast<double>(h.size()));
  switch (kind) {
    case DivergenceKind::KL:
    case DivergenceKind::TV:
      r.value = mu;
      r.std_error = se;
      break;
    case DivergenceKind::Renyi:
      if (rho == 1.0) {
        r.value = mu;
        r.std_error = se;
      } else {
        r.value = std::log(mu) / (rho - 1.0);
        r.std_error = se / (mu * std::abs(rho - 1.0));
      }
      break;
    case DivergenceKind::Hellinger: {
      const double h2 = std::max(0.0, 1.0 - mu);
      r.value = std::sqrt(h2);
      r.std_error = h2 > 0.0 ? se / (2.0 * r.value) : se;
      break;
    }
    case DivergenceKind::ChiSq:
      r.value = mu - 1.0;
      r.std_error = se;
      break;
  }
  r.value = std::max(0.0, r.value);
  return r;
}

}  // namespace

// Densities -------------------------------------------------------------------------------------

Density Density::normal(const Vec& mean, const Mat& cov) {
  if (Eigen::LLT<Mat>(cov).info() != Eigen::Success) {
    throw Error(ErrorCode::NonpositiveScale, "normal covariance is not positive definite");
  }
  Density d;
  d.gaussian = GaussianDensity{mean, symmetrize(cov)};
  const GaussianDensity g = *d.gaussian;
  d.log_pdf = [g](const Vec& th) { return mvn_log_pdf(th, g.mean, g.cov); };
  d.support = Box{Vec::Constant(mean.size(), -kInf), Vec::Constant(mean.size(), kInf)};
  return d;
}

Density Density::from_log_pdf(std::function<double(const Vec&)> log_pdf, Box support,
                              std::function<Vec(CounterRng&)> sampler) {
  Density d;
  d.log_pdf = std::move(log_pdf);
  d.support = std::move(support);
  d.sampler = std::move(sampler);
  return d;
}

Density Density::from_grid(const GridBelief& grid) {
  auto shared = std::make_shared<const GridBelief>(grid);
  return from_log_pdf([shared](const Vec& th) { return shared->density_at(th); }, grid.box());
}

int Density::dim() const {
  return gaussian ? static_cast<int>(gaussian->mean.size()) : support.dim();
}

double Density::log_density(const Vec& theta) const {
  if (!gaussian && !support.contains(theta)) return -kInf;
  return log_pdf(theta);
}

Box Density::integration_box() const {
  if (gaussian) {
    const Vec sd = gaussian->cov.diagonal().cwiseSqrt();
    return Box{gaussian->mean - 12.0 * sd, gaussian->mean + 12.0 * sd};
  }
  return support;
}

std::string to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::KL: return "KL";
    case DivergenceKind::Renyi: return "Renyi";
    case DivergenceKind::Hellinger: return "Hellinger";
    case DivergenceKind::TV: return "TV";
    case DivergenceKind::ChiSq: return "ChiSq";
  }
  return "Unknown";
}

std::string to_string(DivergenceMethod method) {
  switch (method) {
    case DivergenceMethod::ClosedForm: return "ClosedForm";
    case DivergenceMethod::Quadrature: return "Quadrature";
    case DivergenceMethod::MonteCarlo: return "MonteCarlo";
  }
  return "Unknown";
}

// Divergences -----------------------------------------------------------------------------------

double gaussian_kl(const GaussianDensity& p, const GaussianDensity& q) {
  const auto k = static_cast<double>(p.mean.size());
  const Eigen::LLT<Mat> lq(q.cov);
  const Vec d = q.mean - p.mean;
  const double trace = lq.solve(p.cov).trace();
  return 0.5 * (trace + d.dot(lq.solve(d)) - k + log_det_spd(q.cov) - log_det_spd(p.cov));
}

double gaussian_renyi(const GaussianDensity& p, const GaussianDensity& q, double rho) {
  if (rho == 1.0) return gaussian_kl(p, q);
  const Mat s_rho = symmetrize(rho * q.cov + (1.0 - rho) * p.cov);
  const Eigen::LLT<Mat> llt(s_rho);
  if (llt.info() != Eigen::Success) return kInf;
  const Vec d = p.mean - q.mean;
  const double maha = d.dot(llt.solve(d));
  const double log_ratio =
      log_det_spd(s_rho) - (1.0 - rho) * log_det_spd(p.cov) - rho * log_det_spd(q.cov);
  return std::max(0.0, 0.5 * rho * maha - log_ratio / (2.0 * (rho - 1.0)));
}

double gaussian_tv_1d(double mean_p, double var_p, double mean_q, double var_q) {
  const double sp = std::sqrt(var_p);
  const double sq = std::sqrt(var_q);
  // log p(x) - log q(x) = a x^2 + b x + c
  const double a = 0.5 / var_q - 0.5 / var_p;
  const double b = mean_p / var_p - mean_q / var_q;
  const double c = mean_q * mean_q / (2.0 * var_q) - mean_p * mean_p / (2.0 * var_p) +
                   std::log(sq / sp);
  std::vector<double> roots;
  const double scale = std::max({std::abs(a), 1.0 / var_p, 1.0 / var_q});
  if (std::abs(a) <= 1e-14 * scale) {
    if (b == 0.0) return 0.0;
    roots.push_back(-c / b);
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc > 0.0) {
      // Stable quadratic roots.
      const double qq = -0.5 * (b + std::copysign(std::sqrt(disc), b));
      roots.push_back(qq / a);
      if (qq != 0.0) roots.push_back(c / qq);
    }
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> cuts{-kInf};
  cuts.insert(cuts.end(), roots.begin(), roots.end());
  cuts.push_back(kInf);
  auto cdf = [](double x, double mu, double s) {
    if (x == -kInf) return 0.0;
    if (x == kInf) return 1.0;
    return normal_cdf((x - mu) / s);
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double dp = cdf(cuts[i + 1], mean_p, sp) - cdf(cuts[i], mean_p, sp);
    const double dq = cdf(cuts[i + 1], mean_q, sq) - cdf(cuts[i], mean_q, sq);
    total += std::abs(dp - dq);
  }
  return std::min(1.0, 0.5 * total);
}

DivergenceReport divergence(const Density& p, const Density& q, DivergenceKind kind,
                            const DivergenceOptions& options) {
  if (p.dim() != q.dim()) {
    throw Error(ErrorCode::SupportMismatch, "densities live on spaces of different dimension");
  }
  if (options.method == DivergenceMethod::ClosedForm && p.gaussian && q.gaussian) {
    bool ok = false;
    const double v = closed_form(*p.gaussian, *q.gaussian, kind, options.rho, ok);
    if (ok) return DivergenceReport{kind, options.rho, v, DivergenceMethod::ClosedForm, 0.0, 0, 0.0};
  }
  if (options.method == DivergenceMethod::MonteCarlo) return by_monte_carlo(p, q, kind, options);
  return by_quadrature(p, q, kind, options);
}

// Bernstein-von Mises ---------------------------------------------------------------------------

BvmReport bvm_tv(const GaussianDensity& belief, const Vec& center, double scale,
                 const Mat& target_cov, std::int64_t t, int agent) {
  BvmReport r;
  r.t = t;
  r.agent = agent;
  r.center = center;
  r.scale = scale;
  r.chart = "gaussian closed form, x = (theta - center) / scale";
  const GaussianDensity q{(belief.mean - center) / scale, belief.cov / (scale * scale)};
  const GaussianDensity phi{Vec::Zero(center.size()), target_cov};
  const DivergenceReport tv = divergence(Density::normal(q.mean, q.cov),
                                         Density::normal(phi.mean, phi.cov), DivergenceKind::TV);
  r.tv_to_gaussian = 2.0 * tv.value;
  return r;
}

BvmReport bvm_tv(const GaussianDensity& belief, const LaplaceApprox& laplace, int agent) {
  const double s = 1.0 / std::sqrt(laplace.t);
  BvmReport r = bvm_tv(belief, laplace.center, s, laplace.covariance * laplace.t,
                       static_cast<std::int64_t>(laplace.t), agent);
  return r;
}

BvmReport bvm_tv(const GridBelief& belief, const LaplaceApprox& laplace) {
  BvmReport r;
  r.t = static_cast<std::int64_t>(laplace.t);
  r.agent = belief.agent;
  r.center = laplace.center;
  r.scale = 1.0 / std::sqrt(laplace.t);
  // The L1 distance is invariant under the affine rescaling, so it is evaluated on the
  // parameter lattice directly.
  r.chart = "parameter lattice, invariant under x = sqrt(t) (theta - center)";
  GridBelief phi = belief;
  GridBelief diff = belief;
  const double lz = belief.log_normalizer();
  for (Eigen::Index c = 0; c < belief.cells(); ++c) {
    const Vec th = belief.point(c);
    const double lphi = laplace.log_density(th);
    phi.logw()(c) = lphi;
    const double pi = belief.logw()(c) > -kInf ? std::exp(belief.logw()(c) - lz) : 0.0;
    const double gap = std::abs(pi - std::exp(lphi));
    diff.logw()(c) = gap > 0.0 ? std::log(gap) : -kInf;
  }
  r.tail_mass = std::max(0.0, 1.0 - phi.mass());
  double inside = 0.0;
  try {
    inside = diff.mass();
  } catch (const Error&) {
    inside = 0.0;  // identical on every node
  }
  r.tv_to_gaussian = std::min(2.0, inside + r.tail_mass);
  return r;
}

// Contraction -----------------------------------------------------------------------------------

double average_kl_to_models(const ModelSet& models, const TrueDistribution& truth, double theta) {
  double total = 0.0;
  const double th0 = truth.theta0(0);
  for (std::size_t j = 0; j < models.size(); ++j) {
    const double sj = as_gaussian(*models[j]).sigma();
    const double s0 = truth_sd(models, truth, static_cast<int>(j));
    const double r = (s0 * s0) / (sj * sj);
    total += 0.5 * (r + (theta - th0) * (theta - th0) / (sj * sj) - 1.0 - std::log(r));
  }
  return total / static_cast<double>(models.size());
}

double baseline_kl(const ModelSet& models, const TrueDistribution& truth) {
  return average_kl_to_models(models, truth, truth.theta0(0));
}

double misspecification_constant(const ModelSet& models, const TrueDistribution& truth) {
  double entropy = 0.0;
  double inf_kl = 0.0;
  for (std::size_t j = 0; j < models.size(); ++j) {
    const double sj = as_gaussian(*models[j]).sigma();
    const double s0 = truth_sd(models, truth, static_cast<int>(j));
    const double r = (s0 * s0) / (sj * sj);
    entropy = std::max(entropy, std::abs(gaussian_neg_entropy(s0)));
    inf_kl = std::max(inf_kl, 0.5 * (r - 1.0 - std::log(r)));
  }
  return entropy + inf_kl;
}

double gamma_sq_bound(int m, std::int64_t t, double lambda, double nu, double k_const) {
  if (t <= 0 || lambda <= 0.0) return kInf;
  const double md = static_cast<double>(m);
  const double td = static_cast<double>(t);
  if (lambda >= 1.0) return 16.0 * md * std::log(md) / (nu * td) * k_const;
  if (lambda >= 2.0 / md) {
    return (16.0 * md * std::log(md) + 8.0 * md * std::log(lambda)) / (lambda * nu * td) * k_const;
  }
  return 4.0 * md * md / (nu * td) * k_const;
}

double posterior_sq_error(const GaussianDensity& belief, const Vec& theta0) {
  return (belief.mean - theta0).squaredNorm() + belief.cov.trace();
}

double posterior_kl_loss(const GaussianDensity& belief, const ModelSet& models,
                         const TrueDistribution& truth) {
  // The average KL is quadratic in theta, so its posterior mean adds the variance term.
  double curvature = 0.0;
  for (const auto& model : models) {
    const double s = as_gaussian(*model).sigma();
    curvature += 0.5 / (s * s);
  }
  curvature /= static_cast<double>(models.size());
  return average_kl_to_models(models, truth, belief.mean(0)) + curvature * belief.cov(0, 0);
}

ContractionReport gamma_sq(const Scenario& scenario, std::int64_t t, int agent,
                           std::size_t replications) {
  for (const auto& model : scenario.models) as_gaussian(*model);
  if (agent < 0 || agent >= scenario.m()) {
    throw Error(ErrorCode::IndexOutOfRange, "agent " + std::to_string(agent) + " out of range");
  }
  ContractionReport rep;
  rep.m = scenario.m();
  rep.t = t;
  rep.lambda = scenario.lambda;
  rep.nu = scenario.base.nu();
  rep.agent = agent;
  rep.replications = replications;
  rep.baseline = baseline_kl(scenario.models, scenario.truth);
  rep.bound = gamma_sq_bound(rep.m, t, scenario.lambda, rep.nu,
                             misspecification_constant(scenario.models, scenario.truth));
  RunOptions options;
  options.grid = false;
  options.ideal = true;
  std::vector<double> g(replications), kl(replications), sq(replications), loss(replications);
  const double mt = static_cast<double>(rep.m) * static_cast<double>(t);
  for (std::size_t r = 0; r < replications; ++r) {
    const ReplicationRun run = run_replication(scenario, r, {t}, options);
    const Checkpoint& cp = run.checkpoints.back();
    const GaussianDensity& pj = *cp.agents[static_cast<std::size_t>(agent)].gaussian;
    kl[r] = gaussian_kl(pj, *cp.ideal);
    g[r] = t > 0 ? kl[r] / mt : 0.0;
    sq[r] = posterior_sq_error(pj, scenario.truth.theta0);
    loss[r] = posterior_kl_loss(pj, scenario.models, scenario.truth);
  }
  if (replications > 0) {
    rep.gamma_sq = mean(g);
    rep.mean_kl = mean(kl);
    rep.sq_error = mean(sq);
    rep.kl_loss = mean(loss);
    rep.gamma_sq_se =
        replications > 1 ? std::sqrt(sample_variance(g) / static_cast<double>(replications)) : 0.0;
  }
  return rep;
}

// Consistency -----------------------------------------------------------------------------------

double consistency_mass(const GaussianDensity& belief, const ModelSet& models,
                        const TrueDistribution& truth, double eps) {
  if (std::isinf(eps) && eps > 0.0) return 1.0;
  // (1/m) sum_j KL(P0 || P^j_theta) = c0 + kappa (theta - theta0)^2
  const double c0 = baseline_kl(models, truth);
  double kappa = 0.0;
  for (const auto& model : models) {
    const double s = as_gaussian(*model).sigma();
    kappa += 0.5 / (s * s);
  }
  kappa /= static_cast<double>(models.size());
  if (eps <= c0) return 0.0;
  const double radius = std::sqrt((eps - c0) / kappa);
  const double mu = belief.mean(0);
  const double sd = std::sqrt(belief.cov(0, 0));
  const double th0 = truth.theta0(0);
  return normal_cdf((th0 + radius - mu) / sd) - normal_cdf((th0 - radius - mu) / sd);
}

double consistency_mass(const GridBelief& belief, const TrueDistribution& truth, double eps) {
  const Vec masses = belief.cell_masses();
  double total = 0.0;
  for (Eigen::Index c = 0; c < belief.cells(); ++c) {
    if ((belief.point(c) - truth.theta0).norm() < eps) total += masses(c);
  }
  return std::min(1.0, total);
}

// Coverage --------------------------------------------------------------------------------------

CoverageTrial coverage_trial(const AgentCheckpoint& checkpoint, const TrueDistribution& truth,
                             double alpha) {
  if (!checkpoint.laplace || !checkpoint.gaussian) {
    throw Error(ErrorCode::UnsupportedModel,
                "coverage needs a Laplace approximation and a gaussian belief");
  }
  const LaplaceApprox& la = *checkpoint.laplace;
  const CredibleRegion region = credible_region(la, alpha, la.t);
  CoverageTrial trial;
  trial.theta_hat = la.center;
  trial.covered = region.contains(truth.theta0);
  if (la.center.size() != 1) {
    throw Error(ErrorCode::UnsupportedModel, "credible mass is computed for scalar parameters");
  }
  const double half = std::sqrt(region.radius_sq / region.shape(0, 0));
  const double mu = checkpoint.gaussian->mean(0);
  const double sd = std::sqrt(checkpoint.gaussian->cov(0, 0));
  trial.credible_mass = normal_cdf((la.center(0) + half - mu) / sd) -
                        normal_cdf((la.center(0) - half - mu) / sd);
  return trial;
}

CoverageReport summarize_coverage(const std::vector<CoverageTrial>& trials) {
  CoverageReport rep;
  rep.trials = static_cast<int>(trials.size());
  double mass = 0.0;
  for (const auto& tr : trials) {
    rep.successes += tr.covered ? 1 : 0;
    mass += tr.credible_mass;
  }
  if (rep.trials > 0) {
    rep.coverage = static_cast<double>(rep.successes) / rep.trials;
    rep.mean_credible_mass = mass / rep.trials;
    rep.wilson = wilson_interval(rep.successes, rep.trials);
  }
  return rep;
}

CoverageReport coverage_experiment(const Scenario& scenario, std::int64_t t, int agent,
                                   std::size_t replications, double alpha) {
  RunOptions options;
  options.grid = false;
  std::vector<CoverageTrial> trials;
  trials.reserve(replications);
  for (std::size_t r = 0; r < replications; ++r) {
    const ReplicationRun run = run_replication(scenario, r, {t}, options);
    trials.push_back(coverage_trial(run.checkpoints.back().agents.at(static_cast<std::size_t>(agent)),
                                    scenario.truth, alpha));
  }
  return summarize_coverage(trials);
}

// Distributed LLN and CLT ------------------------------------------------------------------------

Vec weighted_stream_sums(const GraphSchedule& schedule, const StreamMoments& moments,
                         std::int64_t t, std::uint64_t seed, std::uint64_t replication,
                         const std::vector<double>& shift) {
  const int m = schedule.m();
  if (static_cast<int>(moments.means.size()) != m || static_cast<int>(moments.sds.size()) != m) {
    throw Error(ErrorCode::ConfigInvalid, "stream moments need one mean and sd per agent");
  }
  Vec acc = Vec::Zero(m);
  for (std::int64_t k = 1; k <= t; ++k) {
    // acc_j <- sum_i A_{k-1}(i, j) acc_i; the mixing before the first draw is irrelevant.
    if (k > 1) acc = schedule.matrix_at(k - 1).transpose() * acc;
    for (int i = 0; i < m; ++i) {
      CounterRng rng(seed, replication, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k),
                     Purpose::Clt);
      const double s = moments.means[static_cast<std::size_t>(i)] +
                       moments.sds[static_cast<std::size_t>(i)] * rng.normal();
      acc(i) += s - (shift.empty() ? 0.0 : shift[static_cast<std::size_t>(i)]);
    }
  }
  return acc;
}

LlnCltReport distributed_lln_clt_check(const GraphSchedule& schedule, const StreamMoments& moments,
                                       std::int64_t t_lln, std::int64_t t_clt,
                                       std::size_t replications, std::uint64_t seed, int agent) {
  const int m = schedule.m();
  if (agent < 0 || agent >= m) {
    throw Error(ErrorCode::IndexOutOfRange, "agent " + std::to_string(agent) + " out of range");
  }
  LlnCltReport rep;
  rep.network_mean = mean(moments.means);
  rep.z_lln = weighted_stream_sums(schedule, moments, t_lln, seed, 0, {}) /
              static_cast<double>(std::max<std::int64_t>(t_lln, 1));
  rep.max_lln_error = (rep.z_lln.array() - rep.network_mean).abs().maxCoeff();

  double var_bar = 0.0;
  for (const double s : moments.sds) var_bar += s * s;
  var_bar /= m;
  const double scale = std::sqrt(static_cast<double>(m) / static_cast<double>(t_clt) / var_bar);
  rep.z_clt.reserve(replications);
  for (std::size_t r = 0; r < replications; ++r) {
    const Vec sums = weighted_stream_sums(schedule, moments, t_clt, seed, r + 1, moments.means);
    rep.z_clt.push_back(scale * sums(agent));
  }
  if (!rep.z_clt.empty()) rep.ks_distance = ks_distance_normal(rep.z_clt);
  return rep;
}

// Fits ------------------------------------------------------------------------------------------

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx(x.size()), ly(y.size());
  std::transform(x.begin(), x.end(), lx.begin(), [](double v) { return std::log(v); });
  std::transform(y.begin(), y.end(), ly.begin(), [](double v) { return std::log(v); });
  return least_squares_line(lx, ly).slope;
}

std::pair<double, double> fit_asymptote(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> inv(x.size());
  std::transform(x.begin(), x.end(), inv.begin(), [](double v) { return 1.0 / v; });
  const LineFit fit = least_squares_line(inv, y);
  return {fit.intercept, fit.slope};
}

}  // namespace disbayes
