#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "disbayes/belief.hpp"
#include "disbayes/estimators.hpp"
#include "disbayes/graph.hpp"
#include "disbayes/models.hpp"
#include "disbayes/surrogate.hpp"

namespace disbayes {

/// Everything needed to replay one experiment cell: agents, truth, prior, graph and seeds.
struct Scenario {
  ModelSet models;
  TrueDistribution truth;
  /// Gaussian agents: conjugate prior. Logistic agents: N(mean, cov) prior on the lattice.
  ConjugatePrior prior = ConjugatePrior::gaussian(Vec::Zero(1), Mat::Identity(1, 1));
  AdjacencyMatrix base;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t graph_seed = 0;
  int grid_n = 200;

  int m() const { return static_cast<int>(models.size()); }
  ModelKind kind() const { return models.front()->kind(); }
  /// Static for lambda >= 1, otherwise a Bernoulli switch with its own stream per replication.
  GraphSchedule schedule(std::uint64_t replication) const;
};

struct RunOptions {
  /// Build lattice beliefs for non-Gaussian agents (needed for TV and posterior mass).
  bool grid = true;
  /// Only these agents get lattice beliefs; empty means all.
  std::vector<int> grid_agents;
  /// Also compute the ideal posterior at each checkpoint (Gaussian agents).
  bool ideal = false;
  bool parallel = true;
};

struct AgentCheckpoint {
  int agent = 0;
  std::int64_t t = 0;
  MEstimate estimate;
  /// Exact belief for Gaussian agents.
  std::optional<GaussianDensity> gaussian;
  std::optional<NaturalBelief> natural;
  /// Lattice belief for the other models, centred on the estimate.
  std::optional<GridBelief> grid;
  /// Laplace approximation with the average Fisher information at the estimate.
  std::optional<LaplaceApprox> laplace;
  /// Laplace approximation with the observed loss Hessian at the estimate.
  std::optional<LaplaceApprox> observed;
};

struct Checkpoint {
  std::int64_t t = 0;
  std::vector<AgentCheckpoint> agents;
  std::optional<GaussianDensity> ideal;
};

struct ReplicationRun {
  History history;
  std::vector<Checkpoint> checkpoints;
};

/// Simulates one replication to the last checkpoint. Gaussian agents follow the exact
/// natural-parameter recursion; other models rebuild each agent's surrogate loss at the
/// checkpoint and evaluate the belief from it on a lattice around the estimate.
ReplicationRun run_replication(const Scenario& scenario, std::uint64_t replication,
                               const std::vector<std::int64_t>& checkpoints,
                               const RunOptions& options = {});

}  // namespace disbayes
