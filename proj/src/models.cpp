#include "disbayes/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "disbayes/error.hpp"

namespace disbayes {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_phi(double u) { return -0.5 * u * u - kHalfLog2Pi; }

[[noreturn]] void no_summary() {
  throw Error(ErrorCode::UnsupportedModel, "model has no affine log-likelihood summary");
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Gaussian: return "gaussian";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Detection: return "detection";
  }
  return "unknown";
}

void Model::check_observation(const Observation&) const {}
bool Model::in_support(const Vec&) const { return true; }
Vec Model::summary(const Observation&) const { no_summary(); }
double Model::summary_log_lik(const Vec&, const Vec&) const { no_summary(); }
Vec Model::summary_grad(const Vec&, const Vec&) const { no_summary(); }
Mat Model::summary_hess(const Vec&, const Vec&) const { no_summary(); }

double ExpFamilyModel::log_lik(const Vec& theta, const Observation& obs) const {
  return base_log_density(obs) + theta.dot(suff_stat(obs)) - log_partition(theta);
}

Vec ExpFamilyModel::grad_log_lik(const Vec& theta, const Observation& obs) const {
  return suff_stat(obs) - grad_psi(theta);
}

Mat ExpFamilyModel::hess_log_lik(const Vec& theta, const Observation&) const {
  return -hess_psi(theta);
}

// Gaussian location ----------------------------------------------------------------------------

GaussianLocationModel::GaussianLocationModel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::NonpositiveScale, "gaussian sigma must be positive, got " +
                                                 std::to_string(sigma));
  }
  inv_var_ = 1.0 / (sigma * sigma);
}

Vec GaussianLocationModel::suff_stat(const Observation& obs) const {
  return Vec::Constant(1, obs.y * inv_var_);
}

double GaussianLocationModel::log_partition(const Vec& theta) const {
  return 0.5 * theta(0) * theta(0) * inv_var_;
}

Vec GaussianLocationModel::grad_psi(const Vec& theta) const {
  return Vec::Constant(1, theta(0) * inv_var_);
}

Mat GaussianLocationModel::hess_psi(const Vec&) const { return Mat::Constant(1, 1, inv_var_); }

double GaussianLocationModel::base_log_density(const Observation& obs) const {
  return -0.5 * obs.y * obs.y * inv_var_ - kHalfLog2Pi - std::log(sigma_);
}

Observation GaussianLocationModel::sample(const Vec& theta, CounterRng& rng) const {
  return Observation{theta(0) + sigma_ * rng.normal(), {}};
}

Vec GaussianLocationModel::summary(const Observation& obs) const {
  return Eigen::Vector3d(1.0, obs.y, obs.y * obs.y);
}

double GaussianLocationModel::summary_log_lik(const Vec& theta, const Vec& s) const {
  const double th = theta(0);
  return -s(0) * (kHalfLog2Pi + std::log(sigma_)) -
         0.5 * inv_var_ * (s(2) - 2.0 * th * s(1) + th * th * s(0));
}

Vec GaussianLocationModel::summary_grad(const Vec& theta, const Vec& s) const {
  return Vec::Constant(1, inv_var_ * (s(1) - theta(0) * s(0)));
}

Mat GaussianLocationModel::summary_hess(const Vec&, const Vec& s) const {
  return Mat::Constant(1, 1, -inv_var_ * s(0));
}

// Logistic -------------------------------------------------------------------------------------

double softplus(double eta) {
  if (eta > 30.0) return eta + std::exp(-eta);
  if (eta < -30.0) return std::exp(eta);
  return std::log1p(std::exp(eta));
}

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

LogisticModel::LogisticModel(int p) : p_(p) {
  if (p < 1) throw Error(ErrorCode::ConfigInvalid, "logistic dimension must be at least 1");
}

double logistic_loglik(const Vec& theta, const Observation& obs) {
  const double eta = theta.dot(obs.x);
  return obs.y * eta - softplus(eta);
}

double LogisticModel::log_lik(const Vec& theta, const Observation& obs) const {
  return logistic_loglik(theta, obs);
}

Vec LogisticModel::grad_log_lik(const Vec& theta, const Observation& obs) const {
  // y - sigmoid(eta) written without cancellation so tiny residuals stay nonzero.
  const double eta = theta.dot(obs.x);
  const double r = obs.y == 1.0 ? sigmoid(-eta) : -sigmoid(eta);
  return r * obs.x;
}

Mat LogisticModel::hess_log_lik(const Vec& theta, const Observation& obs) const {
  const double eta = theta.dot(obs.x);
  return -sigmoid(eta) * sigmoid(-eta) * obs.x * obs.x.transpose();
}

void LogisticModel::check_observation(const Observation& obs) const {
  if (obs.x.size() != p_) {
    throw Error(ErrorCode::ObservationOutOfSupport, "logistic covariate has dimension " +
                                                        std::to_string(obs.x.size()));
  }
  if (obs.y != 0.0 && obs.y != 1.0) {
    throw Error(ErrorCode::ObservationOutOfSupport, "logistic label must be 0 or 1");
  }
}

Observation LogisticModel::sample(const Vec& theta, CounterRng& rng) const {
  Observation obs;
  obs.x.resize(p_);
  for (int i = 0; i < p_; ++i) obs.x(i) = rng.normal();
  obs.y = rng.uniform() < sigmoid(theta.dot(obs.x)) ? 1.0 : 0.0;
  return obs;
}

// Detection ------------------------------------------------------------------------------------

DetectionModel::DetectionModel(Vec z, double sigma) : z_(std::move(z)), sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::NonpositiveScale, "detection sigma must be positive");
  }
  if (z_.size() != 2) throw Error(ErrorCode::ConfigInvalid, "sensor location must be 2-D");
  upper_ = z_.norm() + 0.5;
}

DetectionModel::Radial DetectionModel::radial_at(double r) const {
  Radial out;
  out.r = r;
  const double a = -r / sigma_;
  const double b = (upper_ - r) / sigma_;
  out.log_z = log_normal_cdf_diff(a, b);
  const double ea = std::exp(log_phi(a) - out.log_z);
  const double eb = std::exp(log_phi(b) - out.log_z);
  out.q = eb - ea;
  out.v = 1.0 + a * ea - b * eb - out.q * out.q;
  return out;
}

DetectionModel::Radial DetectionModel::radial(const Vec& theta) const {
  const Vec d = theta - z_;
  const double n = d.norm();
  Radial out = radial_at(std::max(n, 1e-12));
  out.g = n > 0.0 ? Vec(d / n) : Vec(Eigen::Vector2d(1.0, 0.0));
  return out;
}

double DetectionModel::radial_fisher(double r) const {
  return radial_at(r).v / (sigma_ * sigma_);
}

void DetectionModel::check_observation(const Observation& obs) const {
  if (!(obs.y >= 0.0 && obs.y <= upper_)) {
    throw Error(ErrorCode::ObservationOutOfSupport,
                "distance " + std::to_string(obs.y) + " outside [0, " + std::to_string(upper_) + "]");
  }
}

bool DetectionModel::in_support(const Vec& theta) const {
  return theta.size() == 2 && theta(0) >= 0.0 && theta(0) <= 1.0 && theta(1) >= 0.0 &&
         theta(1) <= 1.0;
}

double DetectionModel::log_lik(const Vec& theta, const Observation& obs) const {
  const Radial rd = radial(theta);
  const double u = (obs.y - rd.r) / sigma_;
  return log_phi(u) - std::log(sigma_) - rd.log_z;
}

Vec DetectionModel::grad_log_lik(const Vec& theta, const Observation& obs) const {
  const Radial rd = radial(theta);
  const double dr = (obs.y - rd.r) / (sigma_ * sigma_) + rd.q / sigma_;
  return dr * rd.g;
}

Mat DetectionModel::hess_log_lik(const Vec& theta, const Observation& obs) const {
  const Radial rd = radial(theta);
  const double dr = (obs.y - rd.r) / (sigma_ * sigma_) + rd.q / sigma_;
  const double drr = -rd.v / (sigma_ * sigma_);
  const Mat ggt = rd.g * rd.g.transpose();
  return drr * ggt + dr / rd.r * (Mat::Identity(2, 2) - ggt);
}

Observation DetectionModel::sample(const Vec& theta, CounterRng& rng) const {
  const double r = (theta - z_).norm();
  const double a = -r / sigma_;
  const double b = (upper_ - r) / sigma_;
  const double u = rng.uniform();
  // a <= 0 always, so the lower-tail CDF never rounds to 1 at the left end.
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  const double x = r + sigma_ * normal_quantile(pa + u * (pb - pa));
  return Observation{std::clamp(x, 0.0, upper_), {}};
}

Vec DetectionModel::summary(const Observation& obs) const {
  return Eigen::Vector3d(1.0, obs.y, obs.y * obs.y);
}

double DetectionModel::summary_log_lik(const Vec& theta, const Vec& s) const {
  const Radial rd = radial(theta);
  const double iv = 1.0 / (sigma_ * sigma_);
  return s(0) * (-std::log(sigma_) - kHalfLog2Pi - 0.5 * rd.r * rd.r * iv - rd.log_z) +
         s(1) * rd.r * iv - 0.5 * s(2) * iv;
}

Vec DetectionModel::summary_grad(const Vec& theta, const Vec& s) const {
  const Radial rd = radial(theta);
  const double iv = 1.0 / (sigma_ * sigma_);
  const double lr = s(0) * (-rd.r * iv + rd.q / sigma_) + s(1) * iv;
  return lr * rd.g;
}

Mat DetectionModel::summary_hess(const Vec& theta, const Vec& s) const {
  const Radial rd = radial(theta);
  const double iv = 1.0 / (sigma_ * sigma_);
  const double lr = s(0) * (-rd.r * iv + rd.q / sigma_) + s(1) * iv;
  const double lrr = -s(0) * rd.v * iv;
  const Mat ggt = rd.g * rd.g.transpose();
  return lrr * ggt + lr / rd.r * (Mat::Identity(2, 2) - ggt);
}

double detection_loglik(const Vec& theta, double distance, const DetectionModel& model) {
  if (!(distance >= 0.0 && distance <= model.upper())) {
    throw Error(ErrorCode::OutOfSupport, "distance " + std::to_string(distance) +
                                             " outside the truncation interval");
  }
  return model.log_lik(theta, Observation{distance, {}});
}

Mat detection_fisher(const DetectionModel& model, const Vec& theta) {
  const Vec d = theta - model.z();
  const double r = d.norm();
  const Vec g = d / r;
  return model.radial_fisher(r) * g * g.transpose();
}

Mat detection_fisher_as_printed(const DetectionModel& model, const Vec& theta) {
  const Vec d = theta - model.z();
  const double r = d.norm();
  const double s = model.sigma();
  const double a = -r / s;
  const double b = (model.upper() - r) / s;
  const double log_z = log_normal_cdf_diff(a, b);
  const double q = std::exp(log_phi(b) - log_z) - std::exp(log_phi(a) - log_z);
  return d * d.transpose() / (s * s * s * s * r * r) * (q * q);
}

// Truth ----------------------------------------------------------------------------------------

double TrueDistribution::sigma0_for(int agent) const {
  if (sigma0.empty()) return std::numeric_limits<double>::quiet_NaN();
  return sigma0.size() == 1 ? sigma0.front() : sigma0.at(static_cast<std::size_t>(agent));
}

Observation sample_observation(const Model& model, const TrueDistribution& truth, int agent,
                               CounterRng& rng) {
  if (truth.misspecified()) {
    if (model.kind() != ModelKind::Gaussian) {
      throw Error(ErrorCode::UnsupportedModel, "scale misspecification applies to gaussian agents");
    }
    return Observation{truth.theta0(0) + truth.sigma0_for(agent) * rng.normal(), {}};
  }
  return model.sample(truth.theta0, rng);
}

double truth_log_density(const Model& model, const TrueDistribution& truth, int agent,
                         const Observation& obs) {
  if (truth.misspecified()) {
    const double s0 = truth.sigma0_for(agent);
    const double u = (obs.y - truth.theta0(0)) / s0;
    return log_phi(u) - std::log(s0);
  }
  return model.log_lik(truth.theta0, obs);
}

KlEstimate kl_to_model(const TrueDistribution& truth, const Model& model, int agent,
                       const Vec& theta, std::size_t mc_draws, std::uint64_t seed) {
  if (const auto* g = dynamic_cast<const GaussianLocationModel*>(&model)) {
    const double s0 = truth.misspecified() ? truth.sigma0_for(agent) : g->sigma();
    const double sj = g->sigma();
    if (!(s0 > 0.0)) throw Error(ErrorCode::SupportMismatch, "degenerate gaussian truth");
    const double diff = theta(0) - truth.theta0(0);
    const double ratio = (s0 * s0) / (sj * sj);
    return {0.5 * (ratio + diff * diff / (sj * sj) - 1.0 - std::log(ratio)), 0.0, true};
  }
  if (!model.in_support(theta)) {
    throw Error(ErrorCode::SupportMismatch, "theta outside the model parameter space");
  }
  CounterRng rng(seed, 0, static_cast<std::uint64_t>(agent), 0, Purpose::MonteCarlo);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t n = 0; n < mc_draws; ++n) {
    const Observation x = sample_observation(model, truth, agent, rng);
    double diff = 0.0;
    if (model.kind() == ModelKind::Logistic) {
      // Integrate the label out exactly; only the covariate is sampled.
      const double p0 = sigmoid(truth.theta0.dot(x.x));
      const double eta0 = truth.theta0.dot(x.x);
      const double eta = theta.dot(x.x);
      diff = p0 * (eta0 - eta) - softplus(eta0) + softplus(eta);
    } else {
      diff = truth_log_density(model, truth, agent, x) - model.log_lik(theta, x);
    }
    sum += diff;
    sum_sq += diff * diff;
  }
  const double n = static_cast<double>(mc_draws);
  const double mu = sum / n;
  const double var = std::max(0.0, sum_sq / n - mu * mu);
  return {std::max(0.0, mu), std::sqrt(var / n), false};
}

double gaussian_neg_entropy(double sigma0) {
  return -0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sigma0 * sigma0);
}

// Logistic CSV ---------------------------------------------------------------------------------

void write_logistic_csv(std::ostream& out, const std::vector<Observation>& data) {
  const Eigen::Index p = data.empty() ? 0 : data.front().x.size();
  for (Eigen::Index i = 0; i < p; ++i) out << 'x' << (i + 1) << ',';
  out << "y\n";
  char buf[32];
  for (const auto& d : data) {
    for (Eigen::Index i = 0; i < p; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", d.x(i));
      out << buf << ',';
    }
    out << static_cast<int>(d.y) << '\n';
  }
}

std::vector<Observation> read_logistic_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "logistic csv: missing header");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      header.push_back(cell);
    }
  }
  if (header.size() < 2 || header.back() != "y") {
    throw Error(ErrorCode::IoError, "logistic csv: header must be x1,...,xp,y");
  }
  const auto p = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (header[static_cast<std::size_t>(i)] != "x" + std::to_string(i + 1)) {
      throw Error(ErrorCode::IoError, "logistic csv: unexpected column '" +
                                          header[static_cast<std::size_t>(i)] + "'");
    }
  }
  std::vector<Observation> data;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    std::string cell;
    Observation obs;
    obs.x.resize(p);
    for (Eigen::Index i = 0; i <= p; ++i) {
      if (!std::getline(ls, cell, ',')) {
        throw Error(ErrorCode::IoError, "logistic csv: short row " + std::to_string(row));
      }
      const double v = std::stod(cell);
      if (i < p) {
        obs.x(i) = v;
      } else {
        if (v != 0.0 && v != 1.0) {
          throw Error(ErrorCode::ObservationOutOfSupport,
                      "logistic csv: label on row " + std::to_string(row) + " is not 0/1");
        }
        obs.y = v;
      }
    }
    data.push_back(std::move(obs));
  }
  return data;
}

}  // namespace disbayes
