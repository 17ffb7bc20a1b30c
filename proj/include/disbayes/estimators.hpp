#pragma once

#include <cstdint>
#include <functional>

#include "disbayes/belief.hpp"
#include "disbayes/models.hpp"
#include "disbayes/numeric.hpp"
#include "disbayes/surrogate.hpp"

namespace disbayes {

struct MEstimate {
  Vec theta_hat;
  double value = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
  /// Minimizer sits on the boundary of the constraint box.
  bool boundary = false;
};

/// Value, gradient and Hessian of a smooth loss.
struct LossFunction {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;

  static LossFunction from(const SurrogateLoss& loss);
};

struct NewtonOptions {
  int max_iters = 100;
  double grad_tol = 1e-10;
  /// Iterates beyond this norm are reported as divergent rather than clamped.
  double divergence_norm = 1e6;
};

/// Damped Newton with step halving on the loss value. Stops when the gradient norm falls below
/// grad_tol (1 + |f|) and the Newton step has collapsed. Returns converged = false on divergence
/// or when the iteration budget runs out; throws IndefiniteHessian on negative curvature.
MEstimate m_estimate(const LossFunction& loss, const Vec& theta_init, const NewtonOptions& opts = {});
MEstimate m_estimate(const SurrogateLoss& loss, const Vec& theta_init, const NewtonOptions& opts = {});

/// Exponential-family shortcut: solves grad B(theta) = chi for Gaussian location agents,
/// theta = chi / sum_i (w_i / sigma_i^2).
MEstimate gaussian_m_estimate(const NaturalBelief& belief, const ModelSet& models);

/// Coarse lattice argmin over the unit square (ties to the lowest linear index), then projected
/// Newton with a Levenberg shift wherever the Hessian is not positive definite.
MEstimate detection_m_estimate(const SurrogateLoss& loss, int coarse_n = 101);

/// (1/m) sum_i V^i(theta) for exponential-family and detection agents.
Mat average_fisher(const ModelSet& models, const Vec& theta);
/// Logistic form (1/m) sum_i (1/t) sum_k x x' s(1 - s) over the first t steps of each agent.
Mat average_fisher(const ModelSet& models, const Vec& theta, const History& history, std::int64_t t);

/// Covariance fisher^{-1} / t around `center`.
struct LaplaceApprox {
  Vec center;
  Mat fisher;
  Mat covariance;
  double t = 0.0;

  /// Expected form from a supplied average Fisher matrix.
  static LaplaceApprox expected(const Vec& center, const Mat& fisher, double t);
  /// Observed form from the loss Hessian at the center.
  static LaplaceApprox observed(const SurrogateLoss& loss, const Vec& center);

  double log_density(const Vec& theta) const;
};

/// Ellipsoid {theta : (c - theta)' V (c - theta) <= chi2_{1-alpha, p} / t}.
struct CredibleRegion {
  Vec center;
  Mat shape;
  double radius_sq = 0.0;
  double alpha = 0.0;

  double quad_form(const Vec& theta) const;
  bool contains(const Vec& theta) const { return quad_form(theta) <= radius_sq; }
};

CredibleRegion credible_region(const LaplaceApprox& laplace, double alpha, double t);

}  // namespace disbayes
