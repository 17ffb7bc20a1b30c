#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "disbayes/graph.hpp"
#include "disbayes/models.hpp"
#include "disbayes/simulation.hpp"

namespace disbayes {

struct ModelConfig {
  ModelKind kind = ModelKind::Gaussian;
  /// Gaussian noise scale per agent; one value is shared by all agents.
  std::vector<double> sigma{1.0};
  /// Gaussian prior, used as N(prior_mean, prior_var I) for logistic agents too.
  double prior_mean = 0.0;
  double prior_var = 1.0;
  /// Logistic covariate dimension.
  int dim = 2;
  /// Detection sensor positions, one per agent, and their noise scales.
  std::vector<Vec> sensors;
  std::vector<double> sensor_sigma{0.1};
  /// Lattice resolution per axis for non-conjugate beliefs.
  int grid_n = 101;
};

struct TruthConfig {
  Vec theta0;
  /// Non-empty for a misspecified gaussian truth N(theta0, sigma0^2).
  std::vector<double> sigma0;
};

struct GraphConfig {
  std::string family = "ring";
  /// Edge-list file; overrides family and m when set.
  std::string edge_list;
  int m = 4;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::int64_t t_max = 100;
  std::vector<std::int64_t> checkpoints;
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  double alpha = 0.1;
  double eps = 0.1;
  bool grid = true;
  std::vector<int> grid_agents;
  /// Highest tolerated fraction of non-converged estimates at the final checkpoint.
  double max_nonconverged = 0.01;
};

struct SweepConfig {
  std::vector<int> m;
  std::vector<std::int64_t> t;
  std::vector<double> lambda;
};

struct LlnCltConfig {
  std::vector<double> means{0.0, 1.0, 2.0};
  std::vector<double> sds{1.0, 1.0, 1.0};
  std::int64_t t_lln = 10000;
  std::int64_t t_clt = 2000;
  std::size_t replications = 400;
};

struct ExperimentConfig {
  ModelConfig model;
  TruthConfig truth;
  GraphConfig graph;
  RunConfig run;
  SweepConfig sweep;
  LlnCltConfig lln_clt;
  std::string output_dir = "out";
  /// Directory of the config file; relative paths inside it resolve against this.
  std::filesystem::path base_dir;

  /// Throws ConfigInvalid naming the offending field.
  static ExperimentConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  void validate() const;

  /// Agent count of the configured graph (the edge list wins over graph.m).
  int graph_m() const;
  Topology topology(int m) const;
  ModelSet models(int m) const;
  TrueDistribution true_distribution() const;
  Scenario scenario(int m, double lambda) const;
  int param_dim() const;
};

}  // namespace disbayes
