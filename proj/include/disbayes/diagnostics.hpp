#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "disbayes/belief.hpp"
#include "disbayes/estimators.hpp"
#include "disbayes/graph.hpp"
#include "disbayes/models.hpp"
#include "disbayes/numeric.hpp"
#include "disbayes/rng.hpp"
#include "disbayes/simulation.hpp"

namespace disbayes {

/// A normalized density on R^p: either an explicit normal or a log-density on a support box.
struct Density {
  std::optional<GaussianDensity> gaussian;
  std::function<double(const Vec&)> log_pdf;
  Box support;
  /// Optional exact sampler, used by the Monte Carlo route.
  std::function<Vec(CounterRng&)> sampler;

  static Density normal(const Vec& mean, const Mat& cov);
  static Density from_log_pdf(std::function<double(const Vec&)> log_pdf, Box support,
                              std::function<Vec(CounterRng&)> sampler = {});
  static Density from_grid(const GridBelief& grid);

  int dim() const;
  /// -inf outside the support.
  double log_density(const Vec& theta) const;
  /// Box holding essentially all of the mass (12 sd for normals).
  Box integration_box() const;
};

enum class DivergenceKind { KL, Renyi, Hellinger, TV, ChiSq };
enum class DivergenceMethod { ClosedForm, Quadrature, MonteCarlo };

std::string to_string(DivergenceKind kind);
std::string to_string(DivergenceMethod method);

/// TV here is (1/2) int |p - q|, at most 1.
struct DivergenceReport {
  DivergenceKind kind = DivergenceKind::KL;
  double rho = 0.0;
  double value = 0.0;
  DivergenceMethod method = DivergenceMethod::ClosedForm;
  double tol = 0.0;
  std::size_t n = 0;
  double std_error = 0.0;
};

struct DivergenceOptions {
  /// Renyi order.
  double rho = 2.0;
  /// Closed forms are used for normal pairs unless Quadrature or MonteCarlo is requested.
  DivergenceMethod method = DivergenceMethod::ClosedForm;
  double tol = 1e-8;
  std::size_t mc_draws = 200000;
  std::uint64_t seed = 0;
};

DivergenceReport divergence(const Density& p, const Density& q, DivergenceKind kind,
                            const DivergenceOptions& options = {});

/// Closed forms for normal pairs.
double gaussian_kl(const GaussianDensity& p, const GaussianDensity& q);
double gaussian_renyi(const GaussianDensity& p, const GaussianDensity& q, double rho);
/// (1/2) int |p - q| for two univariate normals, exact through the density crossing points.
double gaussian_tv_1d(double mean_p, double var_p, double mean_q, double var_q);

/// int |q_t - N(0, V^{-1})| where q_t is the density of the rescaled parameter; at most 2.
struct BvmReport {
  std::int64_t t = 0;
  int agent = 0;
  double tv_to_gaussian = 0.0;
  Vec center;
  /// Scale s in x = (theta - center) / s; 1/sqrt(t) for the estimate-centred version.
  double scale = 0.0;
  /// Laplace mass falling outside the lattice (lattice beliefs only).
  double tail_mass = 0.0;
  std::string chart;
};

/// Belief rescaled around the Laplace center by sqrt(t), compared with N(0, V^{-1}).
BvmReport bvm_tv(const GaussianDensity& belief, const LaplaceApprox& laplace, int agent);
BvmReport bvm_tv(const GridBelief& belief, const LaplaceApprox& laplace);
/// General rescaling: x = (theta - center) / scale compared with N(0, target_cov).
BvmReport bvm_tv(const GaussianDensity& belief, const Vec& center, double scale,
                 const Mat& target_cov, std::int64_t t, int agent);

/// (1/m) sum_j KL(P0 || P^j_theta) for Gaussian agents, with the truth's per-agent spread.
double average_kl_to_models(const ModelSet& models, const TrueDistribution& truth, double theta);
/// (1/m) sum_j inf_theta KL(P0 || P^j_theta), the misspecification baseline.
double baseline_kl(const ModelSet& models, const TrueDistribution& truth);
/// max_j |E0 log p0^j| + max_i inf_theta KL(P0 || P^i_theta).
double misspecification_constant(const ModelSet& models, const TrueDistribution& truth);

/// Upper bound on gamma^2 after t steps: static graph when lambda >= 1, otherwise the
/// time-varying branches; infinite when lambda = 0.
double gamma_sq_bound(int m, std::int64_t t, double lambda, double nu, double k_const);

struct ContractionReport {
  int m = 0;
  std::int64_t t = 0;
  double lambda = 1.0;
  double nu = 0.0;
  int agent = 0;
  std::size_t replications = 0;
  /// E_P |theta - theta0|^2 averaged over replications.
  double sq_error = 0.0;
  /// E_P (1/m) sum_j KL(P0 || P^j_theta) averaged over replications.
  double kl_loss = 0.0;
  /// KL(P^j_t || P_t) / (mt), mean and standard error over replications.
  double gamma_sq = 0.0;
  double gamma_sq_se = 0.0;
  double mean_kl = 0.0;
  double bound = 0.0;
  double baseline = 0.0;
};

/// Monte Carlo estimate of gamma^2 for Gaussian agents (closed-form inner KL).
ContractionReport gamma_sq(const Scenario& scenario, std::int64_t t, int agent,
                           std::size_t replications);

/// Squared-error and KL posterior losses of one Gaussian belief.
double posterior_sq_error(const GaussianDensity& belief, const Vec& theta0);
double posterior_kl_loss(const GaussianDensity& belief, const ModelSet& models,
                         const TrueDistribution& truth);

/// Posterior mass of the KL neighbourhood {theta : (1/m) sum_j KL(P0 || P^j_theta) < eps}.
double consistency_mass(const GaussianDensity& belief, const ModelSet& models,
                        const TrueDistribution& truth, double eps);
/// Lattice beliefs use the Euclidean ball {theta : |theta - theta0| < eps} instead.
double consistency_mass(const GridBelief& belief, const TrueDistribution& truth, double eps);

struct CoverageTrial {
  bool covered = false;
  /// Mass the agent's own posterior puts on the credible region.
  double credible_mass = 0.0;
  Vec theta_hat;
};

/// Checks whether the credible region of one Gaussian agent contains theta0.
CoverageTrial coverage_trial(const AgentCheckpoint& checkpoint, const TrueDistribution& truth,
                             double alpha);

struct CoverageReport {
  int successes = 0;
  int trials = 0;
  double coverage = 0.0;
  Interval wilson;
  double mean_credible_mass = 0.0;
};

CoverageReport coverage_experiment(const Scenario& scenario, std::int64_t t, int agent,
                                   std::size_t replications, double alpha);
CoverageReport summarize_coverage(const std::vector<CoverageTrial>& trials);

/// Independent per-agent scalar streams S_k^i ~ N(mean_i, sd_i^2).
struct StreamMoments {
  std::vector<double> means;
  std::vector<double> sds;
};

/// Graph-weighted running sums sum_{k,i} [prod_{tau=k}^{t-1} A_tau]_{ij} (S_k^i - shift_i) for
/// every receiving agent j.
Vec weighted_stream_sums(const GraphSchedule& schedule, const StreamMoments& moments,
                         std::int64_t t, std::uint64_t seed, std::uint64_t replication,
                         const std::vector<double>& shift);

struct LlnCltReport {
  /// Z_t^j for every agent, and the network mean (1/m) sum_i E S^i.
  Vec z_lln;
  double network_mean = 0.0;
  double max_lln_error = 0.0;
  /// Standardized statistic of one agent across replications.
  std::vector<double> z_clt;
  double ks_distance = 0.0;
};

LlnCltReport distributed_lln_clt_check(const GraphSchedule& schedule, const StreamMoments& moments,
                                       std::int64_t t_lln, std::int64_t t_clt,
                                       std::size_t replications, std::uint64_t seed,
                                       int agent = 0);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Fit y = c + b / x by least squares; returns {c, b}.
std::pair<double, double> fit_asymptote(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace disbayes
