#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "disbayes/numeric.hpp"
#include "disbayes/rng.hpp"

namespace disbayes {

enum class ModelKind { Gaussian, Logistic, Detection };

std::string to_string(ModelKind kind);

/// One agent's observation at one step. Gaussian and detection models read only `y`
/// (value or distance); logistic reads covariates `x` and the 0/1 label `y`.
struct Observation {
  double y = 0.0;
  Vec x;
};

/// An agent's private likelihood family p_theta(x).
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual int dim() const = 0;

  virtual double log_lik(const Vec& theta, const Observation& obs) const = 0;
  virtual Vec grad_log_lik(const Vec& theta, const Observation& obs) const = 0;
  virtual Mat hess_log_lik(const Vec& theta, const Observation& obs) const = 0;

  /// Throws ObservationOutOfSupport for data the model cannot have produced.
  virtual void check_observation(const Observation& obs) const;
  virtual bool in_support(const Vec& theta) const;

  /// Draw from p_theta.
  virtual Observation sample(const Vec& theta, CounterRng& rng) const = 0;

  /// Length of a summary s(x) in which the log-likelihood is affine, or 0 when the model has
  /// none. A weighted sum of summaries then stands in for the weighted sum of log-likelihoods.
  virtual int summary_dim() const { return 0; }
  virtual Vec summary(const Observation& obs) const;
  /// sum_k w_k log p_theta(x_k) given S = sum_k w_k s(x_k).
  virtual double summary_log_lik(const Vec& theta, const Vec& s) const;
  virtual Vec summary_grad(const Vec& theta, const Vec& s) const;
  virtual Mat summary_hess(const Vec& theta, const Vec& s) const;
};

/// log p_theta(x) = h(x) + <theta, T(x)> - psi(theta).
class ExpFamilyModel : public Model {
 public:
  virtual int stat_dim() const = 0;
  virtual Vec suff_stat(const Observation& obs) const = 0;
  virtual double log_partition(const Vec& theta) const = 0;
  virtual Vec grad_psi(const Vec& theta) const = 0;
  virtual Mat hess_psi(const Vec& theta) const = 0;
  virtual double base_log_density(const Observation& obs) const = 0;

  double log_lik(const Vec& theta, const Observation& obs) const override;
  Vec grad_log_lik(const Vec& theta, const Observation& obs) const override;
  Mat hess_log_lik(const Vec& theta, const Observation& obs) const override;
};

/// N(theta, sigma^2) with sigma known. The parameter is the mean, written canonically with
/// T(x) = x / sigma^2 and psi(theta) = theta^2 / (2 sigma^2), so the same theta is shared by
/// agents with different sigma and its Fisher information is 1 / sigma^2.
class GaussianLocationModel final : public ExpFamilyModel {
 public:
  explicit GaussianLocationModel(double sigma);

  double sigma() const noexcept { return sigma_; }

  ModelKind kind() const override { return ModelKind::Gaussian; }
  int dim() const override { return 1; }
  int stat_dim() const override { return 1; }
  Vec suff_stat(const Observation& obs) const override;
  double log_partition(const Vec& theta) const override;
  Vec grad_psi(const Vec& theta) const override;
  Mat hess_psi(const Vec& theta) const override;
  double base_log_density(const Observation& obs) const override;

  Observation sample(const Vec& theta, CounterRng& rng) const override;

  int summary_dim() const override { return 3; }
  Vec summary(const Observation& obs) const override;
  double summary_log_lik(const Vec& theta, const Vec& s) const override;
  Vec summary_grad(const Vec& theta, const Vec& s) const override;
  Mat summary_hess(const Vec& theta, const Vec& s) const override;

 private:
  double sigma_;
  double inv_var_;
};

/// log(1 + e^eta), switching to the asymptotic branches for |eta| > 30.
double softplus(double eta);
double sigmoid(double eta);

/// Bernoulli(sigmoid(<theta, x>)) labels with standard normal covariates.
class LogisticModel final : public Model {
 public:
  explicit LogisticModel(int p);

  ModelKind kind() const override { return ModelKind::Logistic; }
  int dim() const override { return p_; }
  double log_lik(const Vec& theta, const Observation& obs) const override;
  Vec grad_log_lik(const Vec& theta, const Observation& obs) const override;
  Mat hess_log_lik(const Vec& theta, const Observation& obs) const override;
  void check_observation(const Observation& obs) const override;
  Observation sample(const Vec& theta, CounterRng& rng) const override;

 private:
  int p_;
};

double logistic_loglik(const Vec& theta, const Observation& obs);

/// Sensor at z reports the target distance |theta - z| with N(0, sigma^2) noise, truncated to
/// [0, |z| + 1/2]. Target lives in the unit square.
class DetectionModel final : public Model {
 public:
  DetectionModel(Vec z, double sigma);

  const Vec& z() const noexcept { return z_; }
  double sigma() const noexcept { return sigma_; }
  double upper() const noexcept { return upper_; }

  ModelKind kind() const override { return ModelKind::Detection; }
  int dim() const override { return 2; }
  double log_lik(const Vec& theta, const Observation& obs) const override;
  Vec grad_log_lik(const Vec& theta, const Observation& obs) const override;
  Mat hess_log_lik(const Vec& theta, const Observation& obs) const override;
  void check_observation(const Observation& obs) const override;
  bool in_support(const Vec& theta) const override;
  Observation sample(const Vec& theta, CounterRng& rng) const override;

  int summary_dim() const override { return 3; }
  Vec summary(const Observation& obs) const override;
  double summary_log_lik(const Vec& theta, const Vec& s) const override;
  Vec summary_grad(const Vec& theta, const Vec& s) const override;
  Mat summary_hess(const Vec& theta, const Vec& s) const override;

  /// Variance of the truncated distance at mean r, divided by sigma^4: the Fisher information
  /// along the radial direction.
  double radial_fisher(double r) const;

 private:
  struct Radial {
    double r;      // distance |theta - z|, floored away from 0
    Vec g;         // unit direction (theta - z) / r
    double log_z;  // log(Phi(b) - Phi(a))
    double q;      // (phi(b) - phi(a)) / (Phi(b) - Phi(a))
    double v;      // truncated variance / sigma^2
  };
  Radial radial(const Vec& theta) const;
  Radial radial_at(double r) const;

  Vec z_;
  double sigma_;
  double upper_;
};

/// Standalone form of the detection log-density; throws OutOfSupport outside [0, |z| + 1/2].
double detection_loglik(const Vec& theta, double distance, const DetectionModel& model);

/// Per-sensor Fisher information at theta, radial variance form.
Mat detection_fisher(const DetectionModel& model, const Vec& theta);
/// The squared mean-shift bracket alone, kept for comparison with the variance form.
Mat detection_fisher_as_printed(const DetectionModel& model, const Vec& theta);

/// The data-generating distribution. Every agent draws from its own model at theta0 unless
/// per-agent Gaussian truth scales are supplied, in which case agent j sees N(theta0, sigma0_j^2).
struct TrueDistribution {
  Vec theta0;
  std::vector<double> sigma0;

  bool misspecified() const noexcept { return !sigma0.empty(); }
  double sigma0_for(int agent) const;
};

Observation sample_observation(const Model& model, const TrueDistribution& truth, int agent,
                               CounterRng& rng);

/// log p0(x) for agent j's true distribution.
double truth_log_density(const Model& model, const TrueDistribution& truth, int agent,
                         const Observation& obs);

struct KlEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool closed_form = true;
};

/// KL(P0^j || P_theta^j). Gaussian pairs use the closed form; other models average
/// log p0 - log p_theta over mc_draws samples from the truth.
KlEstimate kl_to_model(const TrueDistribution& truth, const Model& model, int agent,
                       const Vec& theta, std::size_t mc_draws = 20000, std::uint64_t seed = 0);

/// E0 log p0 for a N(mu, sigma0^2) truth: -1/2 log(2 pi e sigma0^2).
double gaussian_neg_entropy(double sigma0);

/// CSV with header x1,...,xp,y.
void write_logistic_csv(std::ostream& out, const std::vector<Observation>& data);
std::vector<Observation> read_logistic_csv(std::istream& in);

using ModelSet = std::vector<std::shared_ptr<const Model>>;

}  // namespace disbayes
