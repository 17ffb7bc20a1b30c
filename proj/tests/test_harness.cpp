#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "disbayes/error.hpp"
#include "disbayes/harness.hpp"
#include "disbayes/surrogate.hpp"

using namespace disbayes;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("disbayes_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

HarnessOptions to(const fs::path& dir, int workers = 1, bool resume = false) {
  HarnessOptions o;
  o.out_dir = dir;
  o.workers = workers;
  o.resume = resume;
  return o;
}

const char* kGaussian = R"(
[graph]
family = "ring"
m = 3
[run]
t_max = 40
checkpoints = [1, 10, 40]
replications = 5
seed = 3
)";

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("command names") {
  CHECK(parse_command("lln-clt") == Command::LlnClt);
  CHECK(to_string(Command::LlnClt) == "lln-clt");
  CHECK_FALSE(parse_command("simulation").has_value());
}

TEST_CASE("simulate is deterministic across runs and worker counts") {
  const ExperimentConfig cfg = ExperimentConfig::parse(kGaussian);
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  const RunResult ra = run_simulate(cfg, to(a, 1));
  const RunResult rb = run_simulate(cfg, to(b, 2));
  CHECK(slurp(ra.csv) == slurp(rb.csv));
  CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));
  const RunResult again = run_simulate(cfg, to(a, 1));
  CHECK(slurp(again.csv) == slurp(rb.csv));

  const CsvTable table = CsvTable::read(ra.csv);
  CHECK(table.header.front() == "seed");
  CHECK(table.rows.size() == 5u * 3u * 3u);
  CHECK(fs::exists(a / "graph.edges"));
  CHECK(fs::exists(a / "adjacency.csv"));

  HarnessOptions seeded = to(b, 1);
  seeded.seed = 4;
  CHECK(slurp(run_simulate(cfg, seeded).csv) != slurp(ra.csv));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("resume reproduces a fresh run") {
  const ExperimentConfig cfg = ExperimentConfig::parse(kGaussian);
  const fs::path dir = scratch("resume");
  const std::string fresh = slurp(run_simulate(cfg, to(dir)).csv);
  // Simulate an interrupted run: one unit and the merged output are missing.
  const fs::path units = dir / "units" / "simulate";
  std::size_t n_units = 0;
  for (const auto& e : fs::directory_iterator(units)) n_units += e.is_regular_file() ? 1 : 0;
  CHECK(n_units == 5);
  fs::remove(units / "c000_r000002.csv");
  fs::remove(dir / "simulate.csv");
  CHECK(slurp(run_simulate(cfg, to(dir, 2, true)).csv) == fresh);
  fs::remove_all(dir);
}

TEST_CASE("a single checkpoint gives one row per replication and agent") {
  ExperimentConfig cfg = ExperimentConfig::parse(kGaussian);
  cfg.run.checkpoints = {1};
  const fs::path dir = scratch("count");
  const CsvTable table = CsvTable::read(run_simulate(cfg, to(dir)).csv);
  CHECK(table.rows.size() == 5u * 3u);
  fs::remove_all(dir);
}

TEST_CASE("a single agent reports the conjugate shrinkage of the running mean") {
  const ExperimentConfig cfg = ExperimentConfig::parse(R"(
[graph]
family = "complete"
m = 1
[run]
t_max = 10
checkpoints = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
replications = 2
seed = 21
)");
  const fs::path dir = scratch("shrink");
  const CsvTable table = CsvTable::read(run_simulate(cfg, to(dir)).csv);
  REQUIRE(table.rows.size() == 20);
  const Scenario sc = cfg.scenario(1, 1.0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto rep = static_cast<std::uint64_t>(table.number(r, "replication"));
    const auto t = static_cast<std::int64_t>(table.number(r, "t"));
    const History h = generate_history(sc.models, sc.truth, t, sc.seed, rep);
    double sum = 0.0;
    for (std::int64_t k = 1; k <= t; ++k) sum += h.at(k, 0).y;
    CHECK(table.number(r, "theta_hat_1") == doctest::Approx(sum / (t + 1.0)).epsilon(1e-13));
    CHECK(table.number(r, "gamma_sq") == doctest::Approx(0.0).epsilon(1e-15));
  }
  fs::remove_all(dir);
}

TEST_CASE("rows carry the sweep coordinates") {
  ExperimentConfig cfg = ExperimentConfig::parse(R"(
[graph]
family = "ring"
m = 4
[run]
replications = 3
seed = 1
[sweep]
t = [20, 80]
lambda = [0.5, 1.0]
)");
  const fs::path dir = scratch("timevary");
  const RunResult r = run_timevary(cfg, to(dir));
  const CsvTable table = CsvTable::read(r.csv);
  for (const char* col : {"seed", "replication", "m", "t", "lambda", "model", "agent", "gamma_sq"}) {
    CHECK_NOTHROW(table.column(col));
  }
  bool saw_half = false;
  for (std::size_t i = 0; i < table.rows.size(); ++i) saw_half |= table.number(i, "lambda") == 0.5;
  CHECK(saw_half);
  CHECK(table.text(0, "model") == "gaussian");
  fs::remove_all(dir);
}

TEST_CASE("contraction needs closed-form agents") {
  const ExperimentConfig cfg = ExperimentConfig::parse(
      "[model]\nkind = \"logistic\"\n[truth]\ntheta0 = [1.0, 0.0]\n[sweep]\nt = [10, 20]\n");
  try {
    run_contraction(cfg, to(scratch("contraction_logistic")));
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigInvalid);
  }
  fs::remove_all(scratch("contraction_logistic"));
}

TEST_CASE("non-converged estimates raise after the outputs are written") {
  // With one observation per agent the logistic loss usually has no finite minimizer.
  const ExperimentConfig cfg = ExperimentConfig::parse(R"(
[model]
kind = "logistic"
dim = 1
[truth]
theta0 = [3.0]
[graph]
family = "complete"
m = 2
[run]
t_max = 1
replications = 4
grid = false
)");
  const fs::path dir = scratch("noconv");
  try {
    run_simulate(cfg, to(dir));
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoConvergence);
    CHECK(is_numerical(e.code()));
  }
  CHECK(fs::exists(dir / "simulate.csv"));
  fs::remove_all(dir);
}

}  // TEST_SUITE
