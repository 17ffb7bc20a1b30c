#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "disbayes/models.hpp"
#include "disbayes/numeric.hpp"
#include "disbayes/surrogate.hpp"

namespace disbayes {

/// Axis-aligned parameter box.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const noexcept { return static_cast<int>(lo.size()); }
  double volume() const;
  bool contains(const Vec& theta) const;
  static Box unit_square();
  /// center +- half_width along each axis, optionally clipped to `clip`.
  static Box around(const Vec& center, const Vec& half_width, const Box* clip = nullptr);
};

/// Conjugate prior exp(<theta, u> - psi0(theta)) with psi0(theta) = theta' P theta / 2, i.e. the
/// normal N(P^{-1} u, P^{-1}).
struct ConjugatePrior {
  Vec u;
  Mat precision;

  static ConjugatePrior gaussian(const Vec& mean, const Mat& cov);
  Vec mean() const;
  Mat cov() const;
  double log_partition(const Vec& theta) const { return 0.5 * theta.dot(precision * theta); }
};

/// Exponential-family belief of one agent: log p(theta) = <theta, chi + u> - sum_i w_i psi^i(theta)
/// - psi0(theta) + const.
struct NaturalBelief {
  int agent = 0;
  std::int64_t step = 0;
  Vec chi;
  Vec w;
};

struct GaussianDensity {
  Vec mean;
  Mat cov;
};

/// Closed form when every model is a Gaussian location model; nullopt otherwise.
std::optional<GaussianDensity> gaussian_form(const NaturalBelief& belief, const ModelSet& models,
                                             const ConjugatePrior& prior);

/// Log-density on a regular lattice with n points per axis (endpoints included); cell index
/// runs fastest along axis 0. Integrals use the trapezoid rule.
class GridBelief {
 public:
  GridBelief() = default;
  GridBelief(Box box, int n_per_dim);

  const Box& box() const noexcept { return box_; }
  int n() const noexcept { return n_; }
  int dim() const noexcept { return box_.dim(); }
  Eigen::Index cells() const noexcept { return logw_.size(); }
  const Mat& points() const noexcept { return points_; }
  Vec point(Eigen::Index cell) const { return points_.col(cell); }
  double spacing(int axis) const;

  Vec& logw() noexcept { return logw_; }
  const Vec& logw() const noexcept { return logw_; }

  double log_normalizer() const;
  void normalize();
  /// Trapezoid mass of exp(logw).
  double mass() const;
  /// Normalized cell masses (trapezoid weight times density), summing to 1.
  Vec cell_masses() const;
  /// Normalized log-density at theta, interpolated multilinearly in log space.
  double density_at(const Vec& theta) const;

  int agent = 0;
  std::int64_t step = 0;

 private:
  double trapezoid_weight(Eigen::Index cell) const;

  Box box_;
  int n_ = 0;
  Mat points_;
  Vec logw_;
};

/// Uniform log-density over the box.
GridBelief uniform_grid(const Box& box, int n_per_dim);
/// Normal prior restricted to the box.
GridBelief gaussian_grid(const Box& box, int n_per_dim, const Vec& mean, const Mat& cov);

enum class BeliefKind { Natural, Grid };

/// Every agent's belief at one step. All agents share one representation and one lattice.
class NetworkState {
 public:
  static NetworkState natural(ModelSet models, ConjugatePrior prior);
  /// `prior` carries the log prior on the lattice; every agent starts from it.
  static NetworkState grid(ModelSet models, const GridBelief& prior);

  BeliefKind kind() const noexcept { return kind_; }
  int m() const noexcept { return static_cast<int>(models_.size()); }
  std::int64_t step() const noexcept { return step_; }
  const ModelSet& models() const noexcept { return models_; }
  const ConjugatePrior& prior() const noexcept { return prior_; }

  const std::vector<NaturalBelief>& natural_beliefs() const { return natural_; }
  const std::vector<GridBelief>& grid_beliefs() const { return grids_; }

  /// Use the OpenMP lattice kernels (the serial ones otherwise).
  bool parallel = true;

 private:
  friend void advance(NetworkState&, const std::vector<Observation>&, const Mat&);

  BeliefKind kind_ = BeliefKind::Natural;
  ModelSet models_;
  ConjugatePrior prior_;
  std::vector<NaturalBelief> natural_;
  std::vector<GridBelief> grids_;
  std::int64_t step_ = 0;
};

/// One round of the distributed Bayes rule in place. Agent j raises agent i's belief to the power
/// a(i, j): row = sender, column = receiver.
void advance(NetworkState& state, const std::vector<Observation>& observations, const Mat& a);
NetworkState distributed_update(NetworkState state, const std::vector<Observation>& observations,
                                const Mat& a);

/// Normalized log-density. Gaussian models use the closed form; otherwise the normalizer is
/// integrated over `box` (required then, p <= 2).
double density_at(const NaturalBelief& belief, const ModelSet& models, const ConjugatePrior& prior,
                  const Vec& theta, const Box* box = nullptr);
double density_at(const GridBelief& belief, const Vec& theta);

/// Posterior under the 1/m-tempered product of all agents' likelihoods.
NaturalBelief ideal_posterior(const ModelSet& models, const History& history, std::int64_t t);
GridBelief ideal_posterior(const History& history, const ModelSet& models, std::int64_t t,
                           const GridBelief& prior);

/// 1/m geometric mean of the priors, normalized.
ConjugatePrior prior_merge(const std::vector<ConjugatePrior>& priors);
GridBelief prior_merge(const std::vector<GridBelief>& priors);

/// Belief defined directly from its loss: log prior - t f(theta), normalized on the lattice.
GridBelief grid_from_loss(const SurrogateLoss& loss, const GridBelief& prior, bool parallel = true);

/// Snapshot {kind, step, agent, chi | logw, w, box}. Doubles survive the round trip exactly.
nlohmann::json to_json(const NaturalBelief& belief);
nlohmann::json to_json(const GridBelief& belief);
NaturalBelief natural_from_json(const nlohmann::json& j);
GridBelief grid_from_json(const nlohmann::json& j);

}  // namespace disbayes
