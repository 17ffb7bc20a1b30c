#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "disbayes/graph.hpp"
#include "disbayes/models.hpp"

namespace disbayes {

/// All observations seen so far: row k-1 holds x_k^0 .. x_k^{m-1} for steps k = 1..t.
class History {
 public:
  explicit History(int m = 0) : m_(m) {}

  int m() const noexcept { return m_; }
  std::int64_t steps() const noexcept { return static_cast<std::int64_t>(rows_.size()); }
  void append(std::vector<Observation> row);
  /// Observation of `agent` at step k (1-based).
  const Observation& at(std::int64_t k, int agent) const;
  const std::vector<Observation>& row(std::int64_t k) const;

 private:
  int m_;
  std::vector<std::vector<Observation>> rows_;
};

/// t steps of data for every agent, drawn from the truth on per-(replication, agent, step)
/// streams so any prefix is reproducible independently of t.
History generate_history(const ModelSet& models, const TrueDistribution& truth, std::int64_t t,
                         std::uint64_t seed, std::uint64_t replication);

/// f(theta) = -(1/t) sum_{k,i} w_{k,i} log p^i_theta(x_k^i).
///
/// Terms from models with an affine summary collapse into one weighted summary per source agent,
/// so evaluation cost is O(m) regardless of t; other models keep every weighted observation.
class SurrogateLoss {
 public:
  SurrogateLoss() = default;
  SurrogateLoss(ModelSet models, double t);

  void add(int source, double weight, const Observation& obs);

  int dim() const;
  double t() const noexcept { return t_; }
  const ModelSet& models() const noexcept { return models_; }
  /// sum of all term weights
  double total_weight() const noexcept { return total_weight_; }
  double source_weight(int source) const { return source_weight_.at(static_cast<std::size_t>(source)); }
  const Vec& summary(int source) const { return summaries_.at(static_cast<std::size_t>(source)); }

  /// sum_{k,i} w_{k,i} log p^i_theta(x_k^i); equals -t f(theta).
  double weighted_log_lik(const Vec& theta) const;
  double value(const Vec& theta) const;
  Vec grad(const Vec& theta) const;
  Mat hess(const Vec& theta) const;

 private:
  ModelSet models_;
  double t_ = 0.0;
  double total_weight_ = 0.0;
  std::vector<double> source_weight_;
  std::vector<Vec> summaries_;
  std::vector<std::vector<std::pair<double, Observation>>> raw_;
};

/// Surrogate loss of every agent after t steps. The weight of x_k^i for agent j is
/// [prod_{tau=k}^{t-1} A_tau]_{ij}, obtained from backward products P_t = I, P_k = A_k P_{k+1}.
std::vector<SurrogateLoss> surrogate_losses(const History& history, const GraphSchedule& schedule,
                                            const ModelSet& models, std::int64_t t);

/// The fully mixed loss in which every observation carries weight 1/m.
SurrogateLoss ideal_loss(const History& history, const ModelSet& models, std::int64_t t);

}  // namespace disbayes
