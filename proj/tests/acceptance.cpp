// Acceptance run: one PASS/FAIL line per criterion on stdout, harness progress on stderr.
// Exit status is 0 only when every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "disbayes/belief.hpp"
#include "disbayes/config.hpp"
#include "disbayes/diagnostics.hpp"
#include "disbayes/estimators.hpp"
#include "disbayes/graph.hpp"
#include "disbayes/harness.hpp"
#include "disbayes/numeric.hpp"
#include "disbayes/simulation.hpp"
#include "disbayes/surrogate.hpp"

using namespace disbayes;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(DISBAYES_SOURCE_DIR) / "configs" / "acceptance";

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double minutes;
  std::function<Outcome()> run;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

ExperimentConfig load(const std::string& name) { return ExperimentConfig::load(kConfigs / name); }

fs::path out_root() { return fs::current_path() / "acceptance_out"; }

// Every harness run lands here; criterion 10 replays them into a second tree.
struct HarnessRun {
  Command command;
  std::string config;
  std::string label;
};
std::vector<HarnessRun> g_runs;

RunResult run(Command command, const std::string& config, const std::string& label,
              const fs::path& root = out_root()) {
  if (root == out_root()) g_runs.push_back({command, config, label});
  HarnessOptions o;
  o.out_dir = root / label;
  return run_experiment(command, load(config), o);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1 ---------------------------------------------------------------------------------------------

// Brute force: log prior + sum_k sum_i [A_k ... A_{t-1}]_{ij} log p_i(x_k^i), normalized
// numerically.
Outcome recursion_matches_definition() {
  double worst = 0.0;
  for (std::uint64_t g = 0; g < 25; ++g) {
    const int m = 2 + static_cast<int>(g % 4);
    const Topology topo = Topology::random_connected(m, 0.4, 1000 + g);
    const AdjacencyMatrix base = metropolis_weights(topo);
    const GraphSchedule schedule =
        g % 2 == 0 ? GraphSchedule::fixed(base) : GraphSchedule::bernoulli_switch(base, 0.5, 77 + g);
    ModelSet models;
    for (int j = 0; j < m; ++j) {
      models.push_back(std::make_shared<GaussianLocationModel>(0.5 + 0.25 * ((j + g) % 5)));
    }
    const TrueDistribution truth{Vec::Constant(1, 0.5), {}};
    const ConjugatePrior prior = ConjugatePrior::gaussian(Vec::Zero(1), Mat::Identity(1, 1));
    const std::int64_t t = 30;
    const History h = generate_history(models, truth, t, 11 + g, 0);

    NetworkState state = NetworkState::natural(models, prior);
    for (std::int64_t k = 0; k < t; ++k) advance(state, h.row(k + 1), schedule.matrix_at(k));

    for (int j = 0; j < m; ++j) {
      std::vector<Vec> weights;
      for (std::int64_t k = 1; k <= t; ++k) {
        Mat p = Mat::Identity(m, m);
        for (std::int64_t tau = k; tau <= t - 1; ++tau) p = p * schedule.matrix_at(tau);
        weights.push_back(p.col(j));
      }
      auto unnormalized = [&](double th) {
        const Vec theta = Vec::Constant(1, th);
        double u = -0.5 * th * th;
        for (std::int64_t k = 1; k <= t; ++k) {
          for (int i = 0; i < m; ++i) {
            const double w = weights[static_cast<std::size_t>(k - 1)](i);
            if (w != 0.0) u += w * models[static_cast<std::size_t>(i)]->log_lik(theta, h.at(k, i));
          }
        }
        return u;
      };
      // Trapezoid rule on a fine lattice; the integrand is smooth and decays like a normal with
      // sd below 0.2, so [-3, 4] holds all of its mass.
      const double ref = unnormalized(0.5);
      const double h_step = 1e-3;
      double z = 0.0;
      for (int q = 0; q <= 7000; ++q) {
        const double w = (q == 0 || q == 7000) ? 0.5 : 1.0;
        z += w * std::exp(unnormalized(-3.0 + q * h_step) - ref);
      }
      z *= h_step;
      const double log_z = ref + std::log(z);
      const NaturalBelief& b = state.natural_beliefs()[static_cast<std::size_t>(j)];
      for (int q = 0; q < 100; ++q) {
        const double th = -0.5 + 2.0 * q / 99.0;
        const double rec = density_at(b, models, prior, Vec::Constant(1, th));
        worst = std::max(worst, std::abs(rec - (unnormalized(th) - log_z)));
      }
    }
  }
  return {worst < 1e-8, "max |log-density gap| " + num(worst) + " over 25 graphs"};
}

// 2 ---------------------------------------------------------------------------------------------

Outcome consensus_bounds() {
  bool ok = true;
  double worst_ratio = 0.0;
  for (int m = 2; m <= 8; ++m) {
    std::vector<Topology> graphs;
    for (const char* family : {"complete", "ring", "path", "star"}) graphs.push_back(Topology::named(family, m));
    graphs.push_back(Topology::random_connected(m, 0.3, 50 + m));
    for (const Topology& topo : graphs) {
      const AdjacencyMatrix a = metropolis_weights(topo);
      const GraphSchedule s = GraphSchedule::fixed(a);
      const double bound = static_consensus_bound(m, a.nu());
      for (const std::int64_t t : {1, 2, 5, 10, 50, 100, 250, 500}) {
        const double dev = consensus_deviation_all(s, t).maxCoeff();
        worst_ratio = std::max(worst_ratio, dev / bound);
        ok = ok && dev <= bound;
      }
    }
  }
  std::string detail = "static max deviation/bound " + num(worst_ratio);
  const int m = 8;
  const AdjacencyMatrix base = metropolis_weights(Topology::ring(m));
  for (const double lambda : {0.05, 0.25, 0.5, 1.0}) {
    const double bound = regime_bound(m, lambda, base.nu()).value;
    double total = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const GraphSchedule sch = GraphSchedule::bernoulli_switch(base, lambda, splitmix64(9000 + s));
      total += consensus_deviation_all(sch, 500).maxCoeff();
    }
    const double avg = total / 100.0;
    ok = ok && avg <= bound;
    detail += "; lambda " + num(lambda, 2) + ": " + num(avg) + " <= " + num(bound);
  }
  return {ok, detail};
}

// 3 ---------------------------------------------------------------------------------------------

Outcome bvm_decay() {
  const RunResult r = run(Command::Bvm, "bvm.toml", "bvm");
  const auto& cps = r.summary["cells"][0]["checkpoints"];
  const double early = cps[0]["median_tv_bvm"].get<double>();
  const double late = cps[1]["median_tv_bvm"].get<double>();
  return {late < 0.05 && late < early,
          "median TV t=50 " + num(early) + ", t=1000 " + num(late) + " (needs < 0.05 and decreasing)"};
}

// 4 ---------------------------------------------------------------------------------------------

Outcome coverage() {
  const RunResult r = run(Command::Coverage, "coverage.toml", "coverage");
  const double c = r.summary["coverage"].get<double>();
  return {c >= 0.86 && c <= 0.94,
          "agent-0 coverage " + num(c) + " over " + std::to_string(r.summary["trials"].get<int>()) +
              " replications (target [0.86, 0.94]); all agents " +
              num(r.summary["coverage_all_agents"].get<double>())};
}

// 5 ---------------------------------------------------------------------------------------------

Outcome contraction() {
  const RunResult well = run(Command::Contraction, "contraction.toml", "contraction");
  const double slope = well.summary["slope"].get<double>();
  const RunResult miss = run(Command::Contraction, "contraction_misspecified.toml", "contraction_misspecified");
  const auto& cell = miss.summary["cells"][0];
  const double asym = cell["asymptote_sq_error"].get<double>();
  const double base = cell["baseline_kl"].get<double>();
  const bool slope_ok = std::abs(slope + 1.0) <= 0.15;
  const bool asym_ok = asym >= base / 2.0 && asym <= 2.0 * base;
  return {slope_ok && asym_ok,
          "slope " + num(slope) + (slope_ok ? " ok" : " out of -1 +- 0.15") +
              "; misspecified squared-error asymptote " + num(asym) + " vs baseline KL " + num(base) +
              (asym_ok ? " ok" : " not within x2") + " (KL-loss asymptote " +
              num(cell["asymptote_kl_loss"].get<double>()) + ")"};
}

// 6 ---------------------------------------------------------------------------------------------

Outcome gamma_bound() {
  const RunResult r = run(Command::Timevary, "timevary.toml", "timevary");
  bool ok = true;
  double worst = 0.0;
  double gt_005 = NAN;
  double gt_05 = NAN;
  for (const auto& cell : r.summary["cells"]) {
    const double lambda = cell["lambda"].get<double>();
    for (const auto& cp : cell["checkpoints"]) {
      const double g = cp["mean_gamma_sq"].get<double>();
      const double b = cp["gamma_sq_bound"].get<double>();
      ok = ok && g <= b;
      worst = std::max(worst, g / b);
    }
    const auto& last = cell["checkpoints"].back();
    if (lambda == 0.05) gt_005 = last["gamma_sq_times_t"].get<double>();
    if (lambda == 0.5) gt_05 = last["gamma_sq_times_t"].get<double>();
  }
  const bool order = gt_005 > gt_05;
  return {ok && order, "max gamma^2/bound " + num(worst) + "; gamma^2 t at lambda 0.05 " + num(gt_005) +
                           " vs 0.5 " + num(gt_05)};
}

// 7 ---------------------------------------------------------------------------------------------

// Quantile of the Mahalanobis statistic under a lattice belief: sort cells by the statistic and
// interpolate the cumulative mass.
double statistic_quantile(const std::vector<std::pair<double, double>>& sorted, double prob) {
  double cum = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double next = cum + sorted[i].second;
    if (next >= prob) {
      if (i == 0) return sorted[0].first;
      const double f = (prob - cum) / sorted[i].second;
      return sorted[i - 1].first + f * (sorted[i].first - sorted[i - 1].first);
    }
    cum = next;
  }
  return sorted.back().first;
}

Outcome logistic_bvm() {
  const ExperimentConfig cfg = load("logistic.toml");
  const Scenario sc = cfg.scenario(cfg.graph_m(), cfg.graph.lambda);
  RunOptions opt;
  const ReplicationRun rr = run_replication(sc, 0, {cfg.run.t_max}, opt);
  const double q50 = chi2_quantile(0.5, 2);
  const double q90 = chi2_quantile(0.9, 2);
  bool ok = true;
  std::string detail;
  for (const AgentCheckpoint& ac : rr.checkpoints.back().agents) {
    if (!ac.grid || !ac.laplace) return {false, "agent " + std::to_string(ac.agent) + " has no lattice belief"};
    const GridBelief& g = *ac.grid;
    const Vec mass = g.cell_masses();
    const double t = static_cast<double>(ac.t);
    std::vector<std::pair<double, double>> cells;
    for (Eigen::Index c = 0; c < g.cells(); ++c) {
      const Vec d = g.point(c) - ac.estimate.theta_hat;
      cells.emplace_back(t * d.dot(ac.laplace->fisher * d), mass(c));
    }
    std::sort(cells.begin(), cells.end());
    const double e50 = statistic_quantile(cells, 0.5) / q50 - 1.0;
    const double e90 = statistic_quantile(cells, 0.9) / q90 - 1.0;
    ok = ok && std::abs(e50) <= 0.1 && std::abs(e90) <= 0.1;
    detail += (detail.empty() ? "" : "; ") + std::string("agent ") + std::to_string(ac.agent) +
              " rel err q50 " + num(e50, 3) + " q90 " + num(e90, 3);
  }
  return {ok, detail};
}

// 8 ---------------------------------------------------------------------------------------------

Outcome detection() {
  const RunResult r = run(Command::Simulate, "detection.toml", "detection");
  const CsvTable table = CsvTable::read(r.csv);
  const ExperimentConfig cfg = load("detection.toml");
  const Scenario sc = cfg.scenario(cfg.graph_m(), cfg.graph.lambda);
  const std::int64_t t_final = cfg.run.t_max;

  std::vector<double> errors;
  int boundary = 0;
  int finals = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (static_cast<std::int64_t>(table.number(i, "t")) != t_final) continue;
    ++finals;
    const Vec th = Eigen::Vector2d(table.number(i, "theta_hat_1"), table.number(i, "theta_hat_2"));
    errors.push_back((th - sc.truth.theta0).norm());
    boundary += table.number(i, "boundary_flag") != 0.0 ? 1 : 0;
  }
  const double med = median(errors);

  // Laplace covariance from the loss Hessian against the closed form at the estimate.
  RunOptions opt;
  opt.grid = false;
  double worst = 0.0;
  for (std::uint64_t rep = 0; rep < cfg.run.replications; ++rep) {
    const ReplicationRun rr = run_replication(sc, rep, {t_final}, opt);
    for (const AgentCheckpoint& ac : rr.checkpoints.back().agents) {
      if (!ac.observed) {
        worst = INFINITY;
        continue;
      }
      const Mat closed = (average_fisher(sc.models, ac.estimate.theta_hat) * static_cast<double>(t_final)).inverse();
      worst = std::max(worst, (ac.observed->covariance - closed).norm() / closed.norm());
    }
  }
  const bool ok = med < 0.02 && boundary == 0 && worst <= 0.05;
  return {ok, "median error " + num(med) + ", boundary " + std::to_string(boundary) + "/" +
                  std::to_string(finals) + ", max Laplace covariance deviation " + num(worst)};
}

// 9 ---------------------------------------------------------------------------------------------

Outcome lln_clt() {
  const RunResult r = run(Command::LlnClt, "lln_clt.toml", "lln_clt");
  const double lln = r.summary["max_lln_error"].get<double>();
  const double ks = r.summary["ks_distance"].get<double>();
  return {lln <= 0.05 && ks < 0.08, "max |Z - mean| " + num(lln) + ", KS " + num(ks)};
}

// 10 --------------------------------------------------------------------------------------------

Outcome determinism() {
  const fs::path replay = fs::current_path() / "acceptance_replay";
  fs::remove_all(replay);
  const std::vector<HarnessRun> runs = g_runs;
  if (runs.empty()) return {false, "no harness runs to replay"};
  bool ok = true;
  std::string detail;
  for (const HarnessRun& hr : runs) {
    const RunResult again = run(hr.command, hr.config, hr.label, replay);
    const fs::path first = out_root() / hr.label / again.csv.filename();
    const bool same = slurp(first) == slurp(again.csv) && !slurp(first).empty();
    ok = ok && same;
    detail += (detail.empty() ? "" : ", ") + hr.label + (same ? " identical" : " DIFFERS");
  }
  return {ok, detail};
}

}  // namespace

int main() {
  fs::remove_all(out_root());
  const std::vector<Criterion> criteria{
      {1, "recursion matches the definition", 1, recursion_matches_definition},
      {2, "consensus bounds", 2, consensus_bounds},
      {3, "BvM decay", 3, bvm_decay},
      {4, "credible region coverage", 5, coverage},
      {5, "contraction slope and misspecified asymptote", 5, contraction},
      {6, "gamma^2 bound", 5, gamma_bound},
      {7, "logistic BvM", 5, logistic_bvm},
      {8, "detection consistency", 5, detection},
      {9, "distributed LLN/CLT", 2, lln_clt},
      {10, "determinism", 60, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < 60.0 * c.minutes;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s %2d %s: %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(),
                secs, in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
