#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disbayes/numeric.hpp"

namespace disbayes {

/// Undirected simple graph on agents 0..m-1.
class Topology {
 public:
  using Edge = std::pair<int, int>;

  Topology() = default;
  /// Validates indices, rejects self-loops and duplicate pairs; edges are stored as (lo, hi).
  Topology(int m, std::vector<Edge> edges);

  static Topology complete(int m);
  static Topology ring(int m);
  static Topology path(int m);
  static Topology star(int m);
  /// complete | ring | path | star
  static Topology named(std::string_view family, int m);
  /// Random spanning tree plus each remaining pair independently with probability extra_p.
  static Topology random_connected(int m, double extra_p, std::uint64_t seed);

  /// Edge-list text: first line "m", then one zero-based "i j" pair per line.
  static Topology read_edge_list(std::istream& in);
  static Topology load(const std::string& path);
  void write_edge_list(std::ostream& out) const;

  int m() const noexcept { return m_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::vector<int> degrees() const;
  bool has_edge(int i, int j) const;
  /// Every node reachable from node 0.
  bool connected() const;

 private:
  int m_ = 0;
  std::vector<Edge> edges_;
};

/// Symmetric doubly stochastic consensus weights with positive diagonal.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  /// Checks the invariants (row/column sums within 1e-12, exact symmetry, positive diagonal).
  explicit AdjacencyMatrix(Mat weights);

  static AdjacencyMatrix identity(int m);

  int m() const noexcept { return static_cast<int>(w_.rows()); }
  const Mat& weights() const noexcept { return w_; }
  double operator()(int i, int j) const { return w_(i, j); }
  /// Smallest strictly positive entry.
  double nu() const noexcept { return nu_; }
  /// 1 - nu / (4 m^2), the per-step contraction factor used by the consensus bounds.
  double delta() const noexcept { return delta_; }
  bool is_identity() const noexcept { return identity_; }

  /// Row-major CSV, 17 significant digits.
  void write_csv(std::ostream& out) const;

 private:
  Mat w_;
  double nu_ = 1.0;
  double delta_ = 1.0;
  bool identity_ = false;
};

/// Max-degree Metropolis weights: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges, diagonal fills
/// the row. Throws EmptyGraph for m = 0 and DisconnectedGraph when the topology is not connected.
AdjacencyMatrix metropolis_weights(const Topology& topology);

/// Sequence of communication matrices A_0, A_1, ... The update that produces the step-(tau+1)
/// belief uses matrix_at(tau).
class GraphSchedule {
 public:
  enum class Mode { Static, BernoulliSwitch };

  GraphSchedule() = default;
  static GraphSchedule fixed(AdjacencyMatrix base);
  /// A_tau = base with probability lambda and the identity otherwise, independently per step,
  /// drawn from a stream keyed by (seed, tau).
  static GraphSchedule bernoulli_switch(AdjacencyMatrix base, double lambda, std::uint64_t seed);

  Mode mode() const noexcept { return mode_; }
  int m() const noexcept { return base_.m(); }
  double lambda() const noexcept { return lambda_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const AdjacencyMatrix& base() const noexcept { return base_; }

  bool communicates(std::int64_t step) const;
  const Mat& matrix_at(std::int64_t step) const;

 private:
  Mode mode_ = Mode::Static;
  AdjacencyMatrix base_;
  AdjacencyMatrix identity_;
  double lambda_ = 1.0;
  std::uint64_t seed_ = 0;
};

/// prod_{tau=k}^{t-1} A_tau, accumulated left to right with row renormalization every 64
/// factors. Identity when k == t; throws IndexOrder when k > t.
Mat matrix_power_product(const GraphSchedule& schedule, std::int64_t k, std::int64_t t);

/// sum_{k=1}^{t} sum_j |[prod_{tau=k}^{t-1} A_tau]_{ij} - 1/m| for agent i (zero-based).
double consensus_deviation(const GraphSchedule& schedule, int agent, std::int64_t t);
/// The same quantity for every agent at once.
Vec consensus_deviation_all(const GraphSchedule& schedule, std::int64_t t);

/// 16 m^2 ln m / nu: the uniform-in-t bound for a static connected graph.
double static_consensus_bound(int m, double nu);

struct RegimeBound {
  enum class Regime { Frequent, Infrequent, Never };
  Regime regime = Regime::Frequent;
  double value = 0.0;  // +inf for Never
  /// Frequent-regime formula evaluated as written exceeds the 4 m^3 / nu value of the
  /// infrequent branch.
  bool dominated_by_infrequent_branch = false;
};

/// Consensus-deviation bound under the Bernoulli switch:
///   lambda >= 2/m : (16 m^2 ln m + 8 m^2 ln lambda) / (lambda nu)
///   0 < lambda < 2/m : 4 m^3 / nu
///   lambda = 0 : infinite
RegimeBound regime_bound(int m, double lambda, double nu);

}  // namespace disbayes
