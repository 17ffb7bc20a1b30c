#include "disbayes/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "disbayes/error.hpp"
#include "disbayes/rng.hpp"

namespace disbayes {

namespace {

constexpr int kRenormalizeEvery = 64;

void renormalize_rows(Mat& p) {
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double s = p.row(r).sum();
    if (s > 0.0) p.row(r) /= s;
  }
}

double row_deviation(const Eigen::Ref<const Eigen::RowVectorXd>& row, double inv_m) {
  return (row.array() - inv_m).abs().sum();
}

}  // namespace

Topology::Topology(int m, std::vector<Edge> edges) : m_(m) {
  if (m < 0) throw Error(ErrorCode::InvalidTopology, "negative agent count");
  std::set<Edge> seen;
  edges_.reserve(edges.size());
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= m || j >= m) {
      throw Error(ErrorCode::InvalidTopology,
                  "edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
    }
    if (i == j) throw Error(ErrorCode::InvalidTopology, "self-loop at " + std::to_string(i));
    const Edge e{std::min(i, j), std::max(i, j)};
    if (!seen.insert(e).second) {
      throw Error(ErrorCode::InvalidTopology, "duplicate edge (" + std::to_string(e.first) +
                                                  ", " + std::to_string(e.second) + ")");
    }
    edges_.push_back(e);
  }
  std::sort(edges_.begin(), edges_.end());
}

Topology Topology::complete(int m) {
  std::vector<Edge> e;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) e.emplace_back(i, j);
  return Topology(m, std::move(e));
}

Topology Topology::ring(int m) {
  if (m < 3) return path(m);
  std::vector<Edge> e;
  for (int i = 0; i < m; ++i) e.emplace_back(i, (i + 1) % m);
  return Topology(m, std::move(e));
}

Topology Topology::path(int m) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < m; ++i) e.emplace_back(i, i + 1);
  return Topology(m, std::move(e));
}

Topology Topology::star(int m) {
  std::vector<Edge> e;
  for (int i = 1; i < m; ++i) e.emplace_back(0, i);
  return Topology(m, std::move(e));
}

Topology Topology::named(std::string_view family, int m) {
  if (family == "complete") return complete(m);
  if (family == "ring") return ring(m);
  if (family == "path") return path(m);
  if (family == "star") return star(m);
  throw Error(ErrorCode::InvalidTopology, "unknown graph family '" + std::string(family) + "'");
}

Topology Topology::random_connected(int m, double extra_p, std::uint64_t seed) {
  CounterRng rng(seed, 0, 0, 0, Purpose::Topology);
  std::vector<int> order(static_cast<std::size_t>(std::max(m, 0)));
  std::iota(order.begin(), order.end(), 0);
  for (int i = m - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::set<Edge> edges;
  for (int k = 1; k < m; ++k) {
    const auto parent = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
    const int a = order[static_cast<std::size_t>(k)];
    const int b = order[static_cast<std::size_t>(parent)];
    edges.emplace(std::min(a, b), std::max(a, b));
  }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (!edges.count({i, j}) && rng.uniform() < extra_p) edges.emplace(i, j);
  return Topology(m, std::vector<Edge>(edges.begin(), edges.end()));
}

Topology Topology::read_edge_list(std::istream& in) {
  std::string line;
  int m = -1;
  std::vector<Edge> edges;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    if (m < 0) {
      if (!(ls >> m)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        throw Error(ErrorCode::InvalidTopology, "edge list: expected agent count on line " +
                                                    std::to_string(line_no));
      }
      continue;
    }
    int i = 0;
    int j = 0;
    if (!(ls >> i)) continue;
    if (!(ls >> j)) {
      throw Error(ErrorCode::InvalidTopology,
                  "edge list: incomplete pair on line " + std::to_string(line_no));
    }
    edges.emplace_back(i, j);
  }
  if (m < 0) throw Error(ErrorCode::InvalidTopology, "edge list: missing agent count");
  return Topology(m, std::move(edges));
}

Topology Topology::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open edge list '" + path + "'");
  return read_edge_list(in);
}

void Topology::write_edge_list(std::ostream& out) const {
  out << m_ << '\n';
  for (auto [i, j] : edges_) out << i << ' ' << j << '\n';
}

std::vector<int> Topology::degrees() const {
  std::vector<int> deg(static_cast<std::size_t>(m_), 0);
  for (auto [i, j] : edges_) {
    ++deg[static_cast<std::size_t>(i)];
    ++deg[static_cast<std::size_t>(j)];
  }
  return deg;
}

bool Topology::has_edge(int i, int j) const {
  const Edge e{std::min(i, j), std::max(i, j)};
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

bool Topology::connected() const {
  if (m_ == 0) return false;
  std::vector<int> parent(static_cast<std::size_t>(m_));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  int components = m_;
  for (auto [i, j] : edges_) {
    const int a = find(i);
    const int b = find(j);
    if (a != b) {
      parent[static_cast<std::size_t>(a)] = b;
      --components;
    }
  }
  return components == 1;
}

AdjacencyMatrix::AdjacencyMatrix(Mat weights) : w_(std::move(weights)) {
  const auto m = w_.rows();
  if (m == 0) throw Error(ErrorCode::EmptyGraph, "adjacency matrix has no agents");
  if (w_.cols() != m) throw Error(ErrorCode::InvalidTopology, "adjacency matrix is not square");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(w_(i, i) > 0.0)) {
      throw Error(ErrorCode::InvalidTopology, "diagonal entry " + std::to_string(i) +
                                                  " is not positive");
    }
    if (std::abs(w_.row(i).sum() - 1.0) > 1e-12 || std::abs(w_.col(i).sum() - 1.0) > 1e-12) {
      throw Error(ErrorCode::InvalidTopology, "row/column " + std::to_string(i) +
                                                  " does not sum to one");
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      if (w_(i, j) < 0.0 || w_(i, j) != w_(j, i)) {
        throw Error(ErrorCode::InvalidTopology, "adjacency matrix must be symmetric and nonnegative");
      }
    }
  }
  nu_ = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    const double v = w_.data()[i];
    if (v > 0.0) nu_ = std::min(nu_, v);
  }
  const double md = static_cast<double>(m);
  delta_ = 1.0 - nu_ / (4.0 * md * md);
  identity_ = w_.isIdentity(0.0);
}

AdjacencyMatrix AdjacencyMatrix::identity(int m) {
  return AdjacencyMatrix(Mat::Identity(m, m));
}

void AdjacencyMatrix::write_csv(std::ostream& out) const {
  char buf[32];
  for (Eigen::Index i = 0; i < w_.rows(); ++i) {
    for (Eigen::Index j = 0; j < w_.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", w_(i, j));
      if (j > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

AdjacencyMatrix metropolis_weights(const Topology& topology) {
  const int m = topology.m();
  if (m == 0) throw Error(ErrorCode::EmptyGraph, "topology has no agents");
  if (!topology.connected()) throw Error(ErrorCode::DisconnectedGraph, "topology is not connected");
  const auto deg = topology.degrees();
  Mat w = Mat::Zero(m, m);
  for (auto [i, j] : topology.edges()) {
    const double v =
        1.0 / (1.0 + std::max(deg[static_cast<std::size_t>(i)], deg[static_cast<std::size_t>(j)]));
    w(i, j) = v;
    w(j, i) = v;
  }
  for (int i = 0; i < m; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return AdjacencyMatrix(std::move(w));
}

GraphSchedule GraphSchedule::fixed(AdjacencyMatrix base) {
  GraphSchedule s;
  s.mode_ = Mode::Static;
  s.identity_ = AdjacencyMatrix::identity(base.m());
  s.base_ = std::move(base);
  return s;
}

GraphSchedule GraphSchedule::bernoulli_switch(AdjacencyMatrix base, double lambda,
                                              std::uint64_t seed) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "switch probability must lie in [0, 1]");
  }
  GraphSchedule s;
  s.mode_ = Mode::BernoulliSwitch;
  s.identity_ = AdjacencyMatrix::identity(base.m());
  s.base_ = std::move(base);
  s.lambda_ = lambda;
  s.seed_ = seed;
  return s;
}

bool GraphSchedule::communicates(std::int64_t step) const {
  if (mode_ == Mode::Static) return true;
  if (lambda_ >= 1.0) return true;
  if (lambda_ <= 0.0) return false;
  CounterRng rng(seed_, 0, 0, static_cast<std::uint64_t>(step), Purpose::Schedule);
  return rng.uniform() < lambda_;
}

const Mat& GraphSchedule::matrix_at(std::int64_t step) const {
  return communicates(step) ? base_.weights() : identity_.weights();
}

Mat matrix_power_product(const GraphSchedule& schedule, std::int64_t k, std::int64_t t) {
  if (k > t) {
    throw Error(ErrorCode::IndexOrder,
                "product start " + std::to_string(k) + " exceeds end " + std::to_string(t));
  }
  const int m = schedule.m();
  Mat p = Mat::Identity(m, m);
  int since = 0;
  for (std::int64_t tau = k; tau < t; ++tau) {
    if (!schedule.communicates(tau)) continue;
    p = p * schedule.base().weights();
    if (++since == kRenormalizeEvery) {
      renormalize_rows(p);
      since = 0;
    }
  }
  return p;
}

Vec consensus_deviation_all(const GraphSchedule& schedule, std::int64_t t) {
  const int m = schedule.m();
  const double inv_m = 1.0 / m;
  Vec out = Vec::Zero(m);
  if (t <= 0) return out;
  // P_k = A_k P_{k+1}, starting from P_t = I and walking k down to 1.
  Mat p = Mat::Identity(m, m);
  const Mat& a = schedule.base().weights();
  int since = 0;
  for (std::int64_t k = t; k >= 1; --k) {
    if (k < t && schedule.communicates(k)) {
      p = a * p;
      if (++since == kRenormalizeEvery) {
        renormalize_rows(p);
        since = 0;
      }
    }
    for (int i = 0; i < m; ++i) out(i) += row_deviation(p.row(i), inv_m);
  }
  return out;
}

double consensus_deviation(const GraphSchedule& schedule, int agent, std::int64_t t) {
  const int m = schedule.m();
  if (agent < 0 || agent >= m) {
    throw Error(ErrorCode::IndexOutOfRange, "agent " + std::to_string(agent) + " out of range");
  }
  if (schedule.mode() != GraphSchedule::Mode::Static) {
    return consensus_deviation_all(schedule, t)(agent);
  }
  // Static graph: row i of A^s for s = 0..t-1.
  const double inv_m = 1.0 / m;
  const Mat& a = schedule.base().weights();
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(m);
  v(agent) = 1.0;
  double acc = 0.0;
  for (std::int64_t s = 0; s < t; ++s) {
    acc += row_deviation(v, inv_m);
    v = v * a;
    if ((s + 1) % kRenormalizeEvery == 0) v /= v.sum();
  }
  return acc;
}

double static_consensus_bound(int m, double nu) {
  const double md = m;
  return 16.0 * md * md * std::log(md) / nu;
}

RegimeBound regime_bound(int m, double lambda, double nu) {
  RegimeBound b;
  const double md = m;
  const double infrequent = 4.0 * md * md * md / nu;
  if (lambda <= 0.0) {
    b.regime = RegimeBound::Regime::Never;
    b.value = std::numeric_limits<double>::infinity();
  } else if (lambda < 2.0 / md) {
    b.regime = RegimeBound::Regime::Infrequent;
    b.value = infrequent;
  } else {
    b.regime = RegimeBound::Regime::Frequent;
    b.value = (16.0 * md * md * std::log(md) + 8.0 * md * md * std::log(lambda)) / (lambda * nu);
    b.dominated_by_infrequent_branch = b.value > infrequent;
  }
  return b;
}

}  // namespace disbayes
