#include "disbayes/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "disbayes/error.hpp"

namespace disbayes {

namespace {

Mat symmetrize(const Mat& h) { return 0.5 * (h + h.transpose()); }

// Solve (H + mu I) d = -g, shifting only when H is singular but not negative definite.
Vec newton_direction(const Mat& h_raw, const Vec& g) {
  const Mat h = symmetrize(h_raw);
  Eigen::LLT<Mat> llt(h);
  if (llt.info() == Eigen::Success) {
    const Vec d = -llt.solve(g);
    if (d.allFinite()) return d;
  }
  const Eigen::SelfAdjointEigenSolver<Mat> eig(h);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (lo < -1e-8 * hi) {
    throw Error(ErrorCode::IndefiniteHessian,
                "loss Hessian has eigenvalue " + std::to_string(lo) + " on the search path");
  }
  const double mu = 1e-10 * hi;
  return -(h + mu * Mat::Identity(h.rows(), h.cols())).llt().solve(g);
}

Vec clamp_unit(const Vec& x) { return x.cwiseMax(0.0).cwiseMin(1.0); }

bool on_unit_boundary(const Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) <= 1e-12 || x(i) >= 1.0 - 1e-12) return true;
  return false;
}

Mat check_fisher(Mat v) {
  v = symmetrize(v);
  const Eigen::SelfAdjointEigenSolver<Mat> eig(v);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw Error(ErrorCode::SingularFisher, "average Fisher information is singular (condition " +
                                               std::to_string(lo > 0.0 ? hi / lo : INFINITY) + ")");
  }
  return v;
}

}  // namespace

LossFunction LossFunction::from(const SurrogateLoss& loss) {
  return LossFunction{[&loss](const Vec& th) { return loss.value(th); },
                      [&loss](const Vec& th) { return loss.grad(th); },
                      [&loss](const Vec& th) { return loss.hess(th); }};
}

MEstimate m_estimate(const LossFunction& loss, const Vec& theta_init, const NewtonOptions& opts) {
  MEstimate est;
  Vec theta = theta_init;
  double f = loss.value(theta);
  for (int iter = 0; iter <= opts.max_iters; ++iter) {
    est.iters = iter;
    const Vec g = loss.grad(theta);
    est.theta_hat = theta;
    est.value = f;
    est.grad_norm = g.norm();
    if (!theta.allFinite() || theta.norm() > opts.divergence_norm) return est;
    const Vec d = newton_direction(loss.hess(theta), g);
    const double tol = opts.grad_tol * (1.0 + std::abs(f));
    // A small gradient alone is not enough: on a separable logistic loss the gradient decays
    // like exp(-|theta|) while the Newton step stays of order one.
    if (est.grad_norm < tol && d.norm() <= 1e-6 * (1.0 + theta.norm())) {
      est.converged = true;
      return est;
    }
    if (iter == opts.max_iters) break;
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      const Vec cand = theta + step * d;
      const double fc = loss.value(cand);
      if (std::isfinite(fc) && fc <= f + 1e-14 * (1.0 + std::abs(f))) {
        theta = cand;
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      est.converged = est.grad_norm < tol;
      return est;
    }
  }
  return est;
}

MEstimate m_estimate(const SurrogateLoss& loss, const Vec& theta_init, const NewtonOptions& opts) {
  return m_estimate(LossFunction::from(loss), theta_init, opts);
}

MEstimate gaussian_m_estimate(const NaturalBelief& belief, const ModelSet& models) {
  double precision = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto* g = dynamic_cast<const GaussianLocationModel*>(models[i].get());
    if (g == nullptr) {
      throw Error(ErrorCode::UnsupportedModel, "closed-form estimate needs gaussian agents");
    }
    precision += belief.w(static_cast<Eigen::Index>(i)) / (g->sigma() * g->sigma());
  }
  MEstimate est;
  est.iters = 0;
  if (precision > 0.0) {
    est.theta_hat = Vec::Constant(1, belief.chi(0) / precision);
    est.converged = true;
  } else {
    est.theta_hat = Vec::Zero(1);
  }
  return est;
}

MEstimate detection_m_estimate(const SurrogateLoss& loss, int coarse_n) {
  // Coarse search; strict comparison keeps the lowest linear index on ties.
  Vec best = Eigen::Vector2d(0.0, 0.0);
  double best_f = std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < coarse_n; ++iy) {
    for (int ix = 0; ix < coarse_n; ++ix) {
      const Vec th = Eigen::Vector2d(static_cast<double>(ix) / (coarse_n - 1),
                                     static_cast<double>(iy) / (coarse_n - 1));
      const double f = loss.value(th);
      if (f < best_f) {
        best_f = f;
        best = th;
      }
    }
  }

  MEstimate est;
  Vec theta = best;
  double f = best_f;
  for (int iter = 0; iter <= 100; ++iter) {
    est.iters = iter;
    const Vec g = loss.grad(theta);
    // Coordinates pinned at a face with the gradient pushing outward are held fixed.
    std::vector<Eigen::Index> free;
    Vec pg = g;
    for (Eigen::Index i = 0; i < 2; ++i) {
      const bool pinned = (theta(i) <= 0.0 && g(i) > 0.0) || (theta(i) >= 1.0 && g(i) < 0.0);
      if (pinned) {
        pg(i) = 0.0;
      } else {
        free.push_back(i);
      }
    }
    est.theta_hat = theta;
    est.value = f;
    est.grad_norm = pg.norm();
    const double tol = 1e-10 * (1.0 + std::abs(f));
    if (est.grad_norm < tol || free.empty()) {
      est.converged = true;
      break;
    }
    if (iter == 100) break;

    const Mat h = symmetrize(loss.hess(theta));
    const auto nf = static_cast<Eigen::Index>(free.size());
    Mat hf(nf, nf);
    Vec gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf(a) = g(free[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < nf; ++b)
        hf(a, b) = h(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    }
    // Levenberg fallback: shift until the free block is positive definite.
    const double scale = std::max(1.0, hf.cwiseAbs().maxCoeff());
    double mu = 0.0;
    Eigen::LLT<Mat> llt(hf);
    while (llt.info() != Eigen::Success) {
      mu = mu == 0.0 ? 1e-10 * scale : mu * 10.0;
      llt.compute(hf + mu * Mat::Identity(nf, nf));
    }
    const Vec df = -llt.solve(gf);
    Vec d = Vec::Zero(2);
    for (Eigen::Index a = 0; a < nf; ++a) d(free[static_cast<std::size_t>(a)]) = df(a);

    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      const Vec cand = clamp_unit(theta + step * d);
      const double fc = loss.value(cand);
      if (std::isfinite(fc) && fc <= f + 1e-14 * (1.0 + std::abs(f))) {
        accepted = (cand - theta).norm() > 0.0 || fc < f;
        theta = cand;
        f = fc;
        break;
      }
    }
    if (!accepted) {
      est.theta_hat = theta;
      est.value = f;
      est.converged = est.grad_norm < 1e-8 * (1.0 + std::abs(f));
      break;
    }
  }
  est.boundary = on_unit_boundary(est.theta_hat);
  return est;
}

Mat average_fisher(const ModelSet& models, const Vec& theta) {
  const auto p = theta.size();
  Mat v = Mat::Zero(p, p);
  for (const auto& model : models) {
    if (const auto* ef = dynamic_cast<const ExpFamilyModel*>(model.get())) {
      v += ef->hess_psi(theta);
    } else if (const auto* det = dynamic_cast<const DetectionModel*>(model.get())) {
      v += detection_fisher(*det, theta);
    } else {
      throw Error(ErrorCode::UnsupportedModel,
                  to_string(model->kind()) + " Fisher information needs the observed covariates");
    }
  }
  return check_fisher(v / static_cast<double>(models.size()));
}

Mat average_fisher(const ModelSet& models, const Vec& theta, const History& history,
                   std::int64_t t) {
  if (models.empty() || models.front()->kind() != ModelKind::Logistic) {
    return average_fisher(models, theta);
  }
  const int m = history.m();
  const auto p = theta.size();
  Mat v = Mat::Zero(p, p);
  for (std::int64_t k = 1; k <= t; ++k) {
    for (int i = 0; i < m; ++i) {
      const Observation& obs = history.at(k, i);
      const double eta = theta.dot(obs.x);
      v += sigmoid(eta) * sigmoid(-eta) * obs.x * obs.x.transpose();
    }
  }
  return check_fisher(v / (static_cast<double>(m) * static_cast<double>(t)));
}

LaplaceApprox LaplaceApprox::expected(const Vec& center, const Mat& fisher, double t) {
  LaplaceApprox la;
  la.center = center;
  la.fisher = symmetrize(fisher);
  la.t = t;
  const Eigen::LLT<Mat> llt(la.fisher);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularFisher, "Fisher information is not positive definite");
  }
  la.covariance = symmetrize(llt.solve(Mat::Identity(center.size(), center.size())) / t);
  return la;
}

LaplaceApprox LaplaceApprox::observed(const SurrogateLoss& loss, const Vec& center) {
  const Mat h = symmetrize(loss.hess(center));
  if (Eigen::LLT<Mat>(h).info() != Eigen::Success) {
    throw Error(ErrorCode::IndefiniteHessian, "loss Hessian at the estimate is not positive definite");
  }
  return expected(center, h, loss.t());
}

double LaplaceApprox::log_density(const Vec& theta) const {
  return mvn_log_pdf(theta, center, covariance);
}

double CredibleRegion::quad_form(const Vec& theta) const {
  const Vec d = center - theta;
  return d.dot(shape * d);
}

CredibleRegion credible_region(const LaplaceApprox& laplace, double alpha, double t) {
  CredibleRegion r;
  r.center = laplace.center;
  r.shape = laplace.fisher;
  r.alpha = alpha;
  r.radius_sq = chi2_quantile(1.0 - alpha, static_cast<int>(laplace.center.size())) / t;
  return r;
}

}  // namespace disbayes
