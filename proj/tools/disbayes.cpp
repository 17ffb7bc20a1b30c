// disbayes: run one distributed Bayesian learning experiment from a TOML config.
//
//   disbayes simulate|bvm|contraction|timevary|coverage|lln-clt --config <path>
//            [--seed N] [--out DIR] [--workers K] [--resume]
//
// Exit status: 0 success, 2 configuration error, 3 numerical failure, 1 anything else.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "disbayes/config.hpp"
#include "disbayes/error.hpp"
#include "disbayes/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kOther = 1;
constexpr int kConfig = 2;
constexpr int kNumerical = 3;

int exit_code_for(disbayes::ErrorCode code) {
  if (code == disbayes::ErrorCode::ConfigInvalid) return kConfig;
  if (disbayes::is_numerical(code)) return kNumerical;
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Bayesian learning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;
  bool resume = false;

  for (const char* name : {"simulate", "bvm", "contraction", "timevary", "coverage", "lln-clt"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", config_path, "TOML experiment config")->required();
    sub->add_option("--seed", seed, "master seed (overrides run.seed)");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--workers", workers, "parallel replication workers")->check(CLI::PositiveNumber);
    sub->add_flag("--resume", resume, "reuse finished replication units in the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const auto command = disbayes::parse_command(chosen->get_name());

  try {
    const auto config = disbayes::ExperimentConfig::load(config_path);
    disbayes::HarnessOptions options;
    options.out_dir = out_dir;
    if (chosen->count("--seed") > 0) options.seed = seed;
    options.workers = workers;
    options.resume = resume;
    const auto result = disbayes::run_experiment(*command, config, options);
    std::cout << result.summary.dump(2) << '\n';
    return kOk;
  } catch (const disbayes::Error& e) {
    std::cerr << "disbayes: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "disbayes: " << e.what() << '\n';
    return kOther;
  }
}
