#include "disbayes/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "disbayes/diagnostics.hpp"
#include "disbayes/error.hpp"
#include "disbayes/simulation.hpp"

namespace disbayes {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Command command) {
  switch (command) {
    case Command::Simulate: return "simulate";
    case Command::Bvm: return "bvm";
    case Command::Contraction: return "contraction";
    case Command::Timevary: return "timevary";
    case Command::Coverage: return "coverage";
    case Command::LlnClt: return "lln-clt";
  }
  return "unknown";
}

std::optional<Command> parse_command(std::string_view name) {
  for (const Command c : {Command::Simulate, Command::Bvm, Command::Contraction, Command::Timevary,
                          Command::Coverage, Command::LlnClt}) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

// CSV reading -----------------------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable CsvTable::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split_line(line));
  }
  return t;
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::IoError, "missing column " + std::string(name));
  return static_cast<std::size_t>(it - header.begin());
}

const std::string& CsvTable::text(std::size_t row, std::string_view name) const {
  return rows.at(row).at(column(name));
}

double CsvTable::number(std::size_t row, std::string_view name) const {
  const std::string& s = text(row, name);
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

namespace {

// Output plumbing -------------------------------------------------------------------------------

void log_line(const std::string& msg) {
#pragma omp critical(disbayes_log)
  std::cerr << "[disbayes] " << msg << '\n';
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string();
}

struct Context {
  ExperimentConfig cfg;
  fs::path out;
  int workers = 1;
  bool resume = false;
  std::string command;
};

Context make_context(Command command, const ExperimentConfig& config, const HarnessOptions& opt) {
  Context ctx;
  ctx.cfg = config;
  if (opt.seed) ctx.cfg.run.seed = *opt.seed;
  if (opt.workers > 0) ctx.cfg.run.workers = opt.workers;
  ctx.cfg.validate();
  ctx.out = opt.out_dir.empty() ? fs::path(ctx.cfg.output_dir) : opt.out_dir;
  ctx.workers = ctx.cfg.run.workers;
  ctx.resume = opt.resume;
  ctx.command = to_string(command);
  return ctx;
}

std::string prefix_header() { return "seed,replication,m,t,lambda,model,agent"; }

std::string prefix(const Context& ctx, std::uint64_t rep, int m, std::int64_t t, double lambda,
                   const std::string& model, int agent) {
  std::ostringstream s;
  s << ctx.cfg.run.seed << ',' << rep << ',' << m << ',' << t << ',' << fmt(lambda) << ',' << model
    << ',' << agent;
  return s.str();
}

std::string theta_header(int p) {
  std::string h;
  for (int i = 1; i <= p; ++i) h += ",theta_hat_" + std::to_string(i);
  return h;
}

std::string theta_cells(const Vec& theta) {
  std::string s;
  for (Eigen::Index i = 0; i < theta.size(); ++i) s += "," + fmt(theta(i));
  return s;
}

// Trajectory rows report the posterior mean when the belief is an exact normal and the
// loss minimizer otherwise.
const Vec& reported_theta(const AgentCheckpoint& ac) {
  return ac.gaussian ? ac.gaussian->mean : ac.estimate.theta_hat;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Unit {
  std::string name;
  std::function<std::string()> body;
};

std::string unit_name(std::size_t cell, std::uint64_t rep) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "c%03zu_r%06llu", cell, static_cast<unsigned long long>(rep));
  return buf;
}

fs::path run_units(const Context& ctx, const std::string& header, const std::vector<Unit>& units) {
  const fs::path dir = ctx.out / "units" / ctx.command;
  std::error_code ec;
  if (!ctx.resume) fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  const auto n = static_cast<long>(units.size());
  std::vector<std::exception_ptr> failures(units.size());
  int skipped = 0;
  int done = 0;
#pragma omp parallel for schedule(dynamic) num_threads(ctx.workers) reduction(+ : skipped)
  for (long i = 0; i < n; ++i) {
    const Unit& unit = units[static_cast<std::size_t>(i)];
    const fs::path path = dir / (unit.name + ".csv");
    if (ctx.resume && fs::exists(path)) {
      ++skipped;
      continue;
    }
    try {
      write_atomic(path, unit.body());
    } catch (...) {
      failures[static_cast<std::size_t>(i)] = std::current_exception();
    }
    int finished = 0;
#pragma omp atomic capture
    finished = ++done;
    if (finished % std::max<long>(1, n / 10) == 0 || finished == n) {
      log_line(ctx.command + ": " + std::to_string(finished) + " units finished");
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  if (skipped > 0) log_line(ctx.command + ": resumed, " + std::to_string(skipped) + " units reused");

  std::string merged = header + "\n";
  for (const Unit& unit : units) merged += slurp(dir / (unit.name + ".csv"));
  fs::create_directories(ctx.out, ec);
  const fs::path csv = ctx.out / (ctx.command + ".csv");
  write_atomic(csv, merged);
  return csv;
}

RunResult finish(const Context& ctx, const fs::path& csv, json summary) {
  summary["command"] = ctx.command;
  summary["seed"] = ctx.cfg.run.seed;
  summary["csv"] = csv.filename().string();
  RunResult r;
  r.csv = csv;
  r.summary_path = ctx.out / (ctx.command + "_summary.json");
  r.summary = std::move(summary);
  write_atomic(r.summary_path, r.summary.dump(2) + "\n");
  log_line(ctx.command + ": wrote " + csv.string() + " and " + r.summary_path.string());
  return r;
}

// Fails the run when too many final-checkpoint estimates did not converge.
void enforce_convergence(const Context& ctx, const json& summary) {
  const double frac = summary.value("nonconverged_fraction", 0.0);
  if (frac > ctx.cfg.run.max_nonconverged) {
    throw Error(ErrorCode::NoConvergence,
                std::to_string(summary.value("nonconverged_final", 0)) +
                    " final estimates did not converge (fraction " + fmt(frac) + ", tolerated " +
                    fmt(ctx.cfg.run.max_nonconverged) + ")");
  }
}

std::vector<int> sweep_m(const ExperimentConfig& cfg) {
  return cfg.sweep.m.empty() ? std::vector<int>{cfg.graph_m()} : cfg.sweep.m;
}

std::vector<double> sweep_lambda(const ExperimentConfig& cfg) {
  return cfg.sweep.lambda.empty() ? std::vector<double>{cfg.graph.lambda} : cfg.sweep.lambda;
}

std::vector<std::int64_t> sweep_t(const ExperimentConfig& cfg) {
  return cfg.sweep.t.empty() ? cfg.run.checkpoints : cfg.sweep.t;
}

struct Cell {
  int m = 0;
  double lambda = 1.0;
};

std::vector<Cell> cells_of(const ExperimentConfig& cfg) {
  std::vector<Cell> out;
  for (const int m : sweep_m(cfg)) {
    for (const double l : sweep_lambda(cfg)) out.push_back({m, l});
  }
  return out;
}

void require_gaussian(const ExperimentConfig& cfg, const std::string& command) {
  if (cfg.model.kind != ModelKind::Gaussian) {
    throw Error(ErrorCode::ConfigInvalid,
                "model.kind: " + command + " needs gaussian agents (closed-form KL)");
  }
}

RunOptions run_options(const Context& ctx) {
  RunOptions o;
  o.grid = ctx.cfg.run.grid;
  o.grid_agents = ctx.cfg.run.grid_agents;
  o.parallel = ctx.workers == 1;
  return o;
}

std::optional<double> tv_of(const AgentCheckpoint& ac) {
  if (!ac.laplace) return std::nullopt;
  if (ac.gaussian) return bvm_tv(*ac.gaussian, *ac.laplace, ac.agent).tv_to_gaussian;
  if (ac.grid) return bvm_tv(*ac.grid, *ac.laplace).tv_to_gaussian;
  return std::nullopt;
}

std::optional<double> mass_of(const AgentCheckpoint& ac, const Scenario& sc, double eps) {
  if (ac.gaussian) return consistency_mass(*ac.gaussian, sc.models, sc.truth, eps);
  if (ac.grid) return consistency_mass(*ac.grid, sc.truth, eps);
  return std::nullopt;
}

double sq(double x) { return x * x; }

// Summary statistics over rows selected by a predicate.
std::vector<double> collect(const CsvTable& t, std::string_view column,
                            const std::function<bool(std::size_t)>& keep) {
  std::vector<double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (!keep(r)) continue;
    const double v = t.number(r, column);
    if (!std::isnan(v)) out.push_back(v);
  }
  return out;
}

double median_or_nan(std::vector<double> v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : median(std::move(v));
}

double mean_or_nan(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(v);
}

json convergence_summary(const CsvTable& t, std::int64_t final_t) {
  int total = 0;
  int failed = 0;
  int boundary = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (static_cast<std::int64_t>(t.number(r, "t")) != final_t) continue;
    ++total;
    if (t.number(r, "converged") == 0.0) ++failed;
    if (t.number(r, "boundary_flag") != 0.0) ++boundary;
  }
  json j;
  j["final_t"] = final_t;
  j["final_rows"] = total;
  j["nonconverged_final"] = failed;
  j["nonconverged_fraction"] = total > 0 ? static_cast<double>(failed) / total : 0.0;
  j["boundary_rate_final"] = total > 0 ? static_cast<double>(boundary) / total : 0.0;
  return j;
}

double theta_error(const CsvTable& t, std::size_t r, const Vec& theta0) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < theta0.size(); ++i) {
    s += sq(t.number(r, "theta_hat_" + std::to_string(i + 1)) - theta0(i));
  }
  return std::sqrt(s);
}

}  // namespace

// simulate --------------------------------------------------------------------------------------

RunResult run_simulate(const ExperimentConfig& config, const HarnessOptions& options) {
  const Context ctx = make_context(Command::Simulate, config, options);
  const ExperimentConfig& cfg = ctx.cfg;
  const int m = cfg.graph_m();
  const Scenario sc = cfg.scenario(m, cfg.graph.lambda);
  const int p = cfg.param_dim();
  const std::string model = to_string(cfg.model.kind);

  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  {
    std::ostringstream edges, adj;
    cfg.topology(m).write_edge_list(edges);
    sc.base.write_csv(adj);
    write_atomic(ctx.out / "graph.edges", edges.str());
    write_atomic(ctx.out / "adjacency.csv", adj.str());
  }

  RunOptions ropt = run_options(ctx);
  ropt.ideal = cfg.model.kind == ModelKind::Gaussian;
  std::vector<Unit> units;
  for (std::uint64_t rep = 0; rep < cfg.run.replications; ++rep) {
    units.push_back({unit_name(0, rep), [&, rep] {
                       const ReplicationRun run = run_replication(sc, rep, cfg.run.checkpoints, ropt);
                       std::string rows;
                       for (const Checkpoint& cp : run.checkpoints) {
                         for (const AgentCheckpoint& ac : cp.agents) {
                           std::optional<double> gamma;
                           if (ac.gaussian && cp.ideal) {
                             gamma = cp.t > 0 ? gaussian_kl(*ac.gaussian, *cp.ideal) /
                                                    (static_cast<double>(m) * static_cast<double>(cp.t))
                                              : 0.0;
                           }
                           rows += prefix(ctx, rep, m, cp.t, sc.lambda, model, ac.agent) +
                                   theta_cells(reported_theta(ac)) + "," + fmt_opt(tv_of(ac)) +
                                   "," + fmt_opt(mass_of(ac, sc, cfg.run.eps)) + "," +
                                   fmt_opt(gamma) + "," + (ac.estimate.boundary ? "1" : "0") + "," +
                                   (ac.estimate.converged ? "1" : "0") + "\n";
                         }
                       }
                       return rows;
                     }});
  }
  const fs::path csv = run_units(ctx, prefix_header() + theta_header(p) +
                                          ",tv_bvm,mass_eps,gamma_sq,boundary_flag,converged",
                                 units);

  const CsvTable table = CsvTable::read(csv);
  const std::int64_t final_t = cfg.run.checkpoints.back();
  json s = convergence_summary(table, final_t);
  auto at_final = [&](std::size_t r) {
    return static_cast<std::int64_t>(table.number(r, "t")) == final_t;
  };
  std::vector<double> errors;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (at_final(r)) errors.push_back(theta_error(table, r, sc.truth.theta0));
  }
  s["model"] = model;
  s["m"] = m;
  s["lambda"] = sc.lambda;
  s["replications"] = cfg.run.replications;
  s["rows"] = table.rows.size();
  s["median_error_final"] = median_or_nan(errors);
  s["median_tv_bvm_final"] = median_or_nan(collect(table, "tv_bvm", at_final));
  s["mean_mass_eps_final"] = mean_or_nan(collect(table, "mass_eps", at_final));
  s["eps"] = cfg.run.eps;
  s["mass_eps_neighbourhood"] =
      cfg.model.kind == ModelKind::Gaussian ? "average KL to the truth" : "Euclidean ball";
  RunResult result = finish(ctx, csv, s);
  enforce_convergence(ctx, result.summary);
  return result;
}

// bvm -------------------------------------------------------------------------------------------

RunResult run_bvm(const ExperimentConfig& config, const HarnessOptions& options) {
  const Context ctx = make_context(Command::Bvm, config, options);
  const ExperimentConfig& cfg = ctx.cfg;
  const int p = cfg.param_dim();
  const std::string model = to_string(cfg.model.kind);
  const std::vector<Cell> cells = cells_of(cfg);
  std::vector<Scenario> scenarios;
  for (const Cell& c : cells) scenarios.push_back(cfg.scenario(c.m, c.lambda));
  const RunOptions ropt = run_options(ctx);

  std::vector<Unit> units;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::uint64_t rep = 0; rep < cfg.run.replications; ++rep) {
      units.push_back({unit_name(ci, rep), [&, ci, rep] {
        const Scenario& sc = scenarios[ci];
        const ReplicationRun run = run_replication(sc, rep, cfg.run.checkpoints, ropt);
        // Gaussian agents: LAN information V and the sandwich J / V^2 under the truth.
        double v = 0.0, jv = 0.0;
        if (sc.kind() == ModelKind::Gaussian) {
          for (int j = 0; j < sc.m(); ++j) {
            const double s = dynamic_cast<const GaussianLocationModel&>(*sc.models[static_cast<std::size_t>(j)]).sigma();
            const double s0 = sc.truth.misspecified() ? sc.truth.sigma0_for(j) : s;
            v += 1.0 / (s * s);
            jv += (s0 * s0) / (s * s * s * s);
          }
          v /= sc.m();
          jv /= sc.m();
        }
        std::string rows;
        for (const Checkpoint& cp : run.checkpoints) {
          for (const AgentCheckpoint& ac : cp.agents) {
            std::optional<double> tv0, tv0x2, tvs, tail;
            if (ac.gaussian && cp.t > 0) {
              const double eps_t = 1.0 / std::sqrt(static_cast<double>(cp.t));
              const Mat lan = Mat::Constant(1, 1, 1.0 / v);
              const Mat sandwich = Mat::Constant(1, 1, jv / (v * v));
              tv0 = bvm_tv(*ac.gaussian, sc.truth.theta0, eps_t, lan, cp.t, ac.agent).tv_to_gaussian;
              tv0x2 = bvm_tv(*ac.gaussian, sc.truth.theta0, 2.0 * eps_t, lan, cp.t, ac.agent)
                          .tv_to_gaussian;
              tvs = bvm_tv(*ac.gaussian, sc.truth.theta0, eps_t, sandwich, cp.t, ac.agent)
                        .tv_to_gaussian;
            }
            if (ac.grid && ac.laplace) tail = bvm_tv(*ac.grid, *ac.laplace).tail_mass;
            rows += prefix(ctx, rep, sc.m(), cp.t, sc.lambda, model, ac.agent) +
                    theta_cells(ac.estimate.theta_hat) + "," + fmt_opt(tv_of(ac)) + "," +
                    fmt_opt(tv0) + "," + fmt_opt(tv0x2) + "," + fmt_opt(tvs) + "," +
                    fmt_opt(tail) + "," + (ac.estimate.boundary ? "1" : "0") + "," +
                    (ac.estimate.converged ? "1" : "0") + "\n";
          }
        }
        return rows;
      }});
    }
  }
  const fs::path csv =
      run_units(ctx,
                prefix_header() + theta_header(p) +
                    ",tv_bvm,tv_theta0,tv_theta0_x2,tv_sandwich,tail_mass,boundary_flag,converged",
                units);

  const CsvTable table = CsvTable::read(csv);
  json s = convergence_summary(table, cfg.run.checkpoints.back());
  s["model"] = model;
  s["misspecified"] = cfg.truth.sigma0.size() > 0;
  s["eps_t"] = "t^-1/2, with a x2 rescaling reported as tv_theta0_x2";
  json by_cell = json::array();
  for (const Cell& c : cells) {
    json cell{{"m", c.m}, {"lambda", c.lambda}};
    json series = json::array();
    double previous = std::numeric_limits<double>::infinity();
    bool decreasing = true;
    for (const std::int64_t t : cfg.run.checkpoints) {
      auto keep = [&](std::size_t r) {
        return static_cast<int>(table.number(r, "m")) == c.m && table.number(r, "lambda") == c.lambda &&
               static_cast<std::int64_t>(table.number(r, "t")) == t;
      };
      const double med = median_or_nan(collect(table, "tv_bvm", keep));
      if (!std::isnan(med)) {
        decreasing = decreasing && med < previous;
        previous = med;
      }
      series.push_back({{"t", t},
                        {"median_tv_bvm", med},
                        {"median_tv_theta0", median_or_nan(collect(table, "tv_theta0", keep))},
                        {"median_tv_theta0_x2", median_or_nan(collect(table, "tv_theta0_x2", keep))},
                        {"median_tv_sandwich", median_or_nan(collect(table, "tv_sandwich", keep))}});
    }
    cell["checkpoints"] = series;
    cell["median_tv_decreasing"] = decreasing;
    by_cell.push_back(cell);
  }
  s["cells"] = by_cell;
  RunResult result = finish(ctx, csv, s);
  enforce_convergence(ctx, result.summary);
  return result;
}

// contraction -----------------------------------------------------------------------------------

RunResult run_contraction(const ExperimentConfig& config, const HarnessOptions& options) {
  const Context ctx = make_context(Command::Contraction, config, options);
  const ExperimentConfig& cfg = ctx.cfg;
  require_gaussian(cfg, ctx.command);
  const std::vector<std::int64_t> ts = sweep_t(cfg);
  const std::vector<Cell> cells = cells_of(cfg);
  std::vector<Scenario> scenarios;
  for (const Cell& c : cells) scenarios.push_back(cfg.scenario(c.m, c.lambda));
  RunOptions ropt;
  ropt.grid = false;
  ropt.ideal = true;

  std::vector<Unit> units;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::uint64_t rep = 0; rep < cfg.run.replications; ++rep) {
      units.push_back({unit_name(ci, rep), [&, ci, rep] {
        const Scenario& sc = scenarios[ci];
        const ReplicationRun run = run_replication(sc, rep, ts, ropt);
        const double k_const = misspecification_constant(sc.models, sc.truth);
        const double base = baseline_kl(sc.models, sc.truth);
        std::string rows;
        for (const Checkpoint& cp : run.checkpoints) {
          const double mt = static_cast<double>(sc.m()) * static_cast<double>(cp.t);
          const double bound = gamma_sq_bound(sc.m(), cp.t, sc.lambda, sc.base.nu(), k_const);
          for (const AgentCheckpoint& ac : cp.agents) {
            rows += prefix(ctx, rep, sc.m(), cp.t, sc.lambda, "gaussian", ac.agent) +
                    theta_cells(ac.estimate.theta_hat) + "," +
                    fmt(posterior_sq_error(*ac.gaussian, sc.truth.theta0)) + "," +
                    fmt(posterior_kl_loss(*ac.gaussian, sc.models, sc.truth)) + "," +
                    fmt(gaussian_kl(*ac.gaussian, *cp.ideal) / mt) + "," + fmt(bound) + "," +
                    fmt(base) + "\n";
          }
        }
        return rows;
      }});
    }
  }
  const fs::path csv = run_units(
      ctx, prefix_header() + theta_header(1) + ",sq_error,kl_loss,gamma_sq,gamma_sq_bound,baseline_kl",
      units);

  const CsvTable table = CsvTable::read(csv);
  json s;
  s["model"] = "gaussian";
  s["metric"] = "squared Euclidean";
  s["misspecified"] = cfg.truth.sigma0.size() > 0;
  json by_cell = json::array();
  std::vector<double> all_ratio;
  for (const Cell& c : cells) {
    std::vector<double> tx, err, kl, gam;
    double base = 0.0;
    bool within_bound = true;
    for (const std::int64_t t : ts) {
      auto keep = [&](std::size_t r) {
        return static_cast<int>(table.number(r, "m")) == c.m && table.number(r, "lambda") == c.lambda &&
               static_cast<std::int64_t>(table.number(r, "t")) == t;
      };
      tx.push_back(static_cast<double>(t));
      err.push_back(mean_or_nan(collect(table, "sq_error", keep)));
      kl.push_back(mean_or_nan(collect(table, "kl_loss", keep)));
      gam.push_back(mean_or_nan(collect(table, "gamma_sq", keep)));
      const auto bounds = collect(table, "gamma_sq_bound", keep);
      const auto bl = collect(table, "baseline_kl", keep);
      if (!bl.empty()) base = bl.front();
      if (!bounds.empty() && gam.back() > bounds.front()) within_bound = false;
    }
    json cell{{"m", c.m}, {"lambda", c.lambda}};
    json series = json::array();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double ratio = err[i] / (1.0 / tx[i] + gam[i] + base);
      all_ratio.push_back(ratio);
      series.push_back({{"t", ts[i]},
                        {"mean_sq_error", err[i]},
                        {"mean_kl_loss", kl[i]},
                        {"mean_gamma_sq", gam[i]},
                        {"fitted_c", ratio}});
    }
    cell["checkpoints"] = series;
    cell["slope"] = ts.size() >= 2 ? loglog_slope(tx, err) : std::numeric_limits<double>::quiet_NaN();
    const auto [c_sq, b_sq] = fit_asymptote(tx, err);
    const auto [c_kl, b_kl] = fit_asymptote(tx, kl);
    cell["asymptote_sq_error"] = c_sq;
    cell["asymptote_kl_loss"] = c_kl;
    cell["baseline_kl"] = base;
    cell["gamma_sq_within_bound"] = within_bound;
    by_cell.push_back(cell);
  }
  s["cells"] = by_cell;
  if (!all_ratio.empty()) {
    const double c_mean = mean(all_ratio);
    double spread = 0.0;
    for (const double r : all_ratio) spread = std::max(spread, std::abs(r / c_mean - 1.0));
    s["fitted_c"] = c_mean;
    s["fitted_c_max_relative_deviation"] = spread;
  }
  if (by_cell.size() == 1) s["slope"] = by_cell.front()["slope"];
  return finish(ctx, csv, s);
}

// timevary --------------------------------------------------------------------------------------

RunResult run_timevary(const ExperimentConfig& config, const HarnessOptions& options) {
  const Context ctx = make_context(Command::Timevary, config, options);
  const ExperimentConfig& cfg = ctx.cfg;
  require_gaussian(cfg, ctx.command);
  const std::vector<std::int64_t> ts = sweep_t(cfg);
  const std::vector<Cell> cells = cells_of(cfg);
  std::vector<Scenario> scenarios;
  for (const Cell& c : cells) scenarios.push_back(cfg.scenario(c.m, c.lambda));
  RunOptions ropt;
  ropt.grid = false;
  ropt.ideal = true;

  std::vector<Unit> units;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::uint64_t rep = 0; rep < cfg.run.replications; ++rep) {
      units.push_back({unit_name(ci, rep), [&, ci, rep] {
        const Scenario& sc = scenarios[ci];
        const ReplicationRun run = run_replication(sc, rep, ts, ropt);
        const GraphSchedule schedule = sc.schedule(rep);
        const double k_const = misspecification_constant(sc.models, sc.truth);
        const double cbound = regime_bound(sc.m(), sc.lambda, sc.base.nu()).value;
        std::string rows;
        for (const Checkpoint& cp : run.checkpoints) {
          const Vec dev = consensus_deviation_all(schedule, cp.t);
          const double mt = static_cast<double>(sc.m()) * static_cast<double>(cp.t);
          const double gbound = gamma_sq_bound(sc.m(), cp.t, sc.lambda, sc.base.nu(), k_const);
          for (const AgentCheckpoint& ac : cp.agents) {
            const double kl = gaussian_kl(*ac.gaussian, *cp.ideal);
            rows += prefix(ctx, rep, sc.m(), cp.t, sc.lambda, "gaussian", ac.agent) + "," +
                    fmt(kl / mt) + "," + fmt(kl) + "," + fmt(dev(ac.agent)) + "," + fmt(gbound) +
                    "," + fmt(cbound) + "\n";
          }
        }
        return rows;
      }});
    }
  }
  const fs::path csv = run_units(
      ctx,
      prefix_header() + ",gamma_sq,kl_to_ideal,consensus_deviation,gamma_sq_bound,consensus_bound",
      units);

  const CsvTable table = CsvTable::read(csv);
  json s;
  s["model"] = "gaussian";
  json by_cell = json::array();
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const Cell& c = cells[ci];
    json cell{{"m", c.m}, {"lambda", c.lambda}};
    const RegimeBound rb = regime_bound(c.m, c.lambda, scenarios[ci].base.nu());
    cell["regime"] = rb.regime == RegimeBound::Regime::Frequent     ? "frequent"
                     : rb.regime == RegimeBound::Regime::Infrequent ? "infrequent"
                                                                    : "never";
    json series = json::array();
    for (const std::int64_t t : ts) {
      auto keep = [&](std::size_t r) {
        return static_cast<int>(table.number(r, "m")) == c.m && table.number(r, "lambda") == c.lambda &&
               static_cast<std::int64_t>(table.number(r, "t")) == t;
      };
      const double g = mean_or_nan(collect(table, "gamma_sq", keep));
      const auto gb = collect(table, "gamma_sq_bound", keep);
      const auto cb = collect(table, "consensus_bound", keep);
      series.push_back({{"t", t},
                        {"mean_gamma_sq", g},
                        {"gamma_sq_times_t", g * static_cast<double>(t)},
                        {"mean_kl_to_ideal", mean_or_nan(collect(table, "kl_to_ideal", keep))},
                        {"mean_consensus_deviation", mean_or_nan(collect(table, "consensus_deviation", keep))},
                        {"gamma_sq_bound", gb.empty() ? 0.0 : gb.front()},
                        {"consensus_bound", cb.empty() ? 0.0 : cb.front()}});
    }
    cell["checkpoints"] = series;
    by_cell.push_back(cell);
  }
  s["cells"] = by_cell;
  return finish(ctx, csv, s);
}

// coverage --------------------------------------------------------------------------------------

RunResult run_coverage(const ExperimentConfig& config, const HarnessOptions& options) {
  const Context ctx = make_context(Command::Coverage, config, options);
  const ExperimentConfig& cfg = ctx.cfg;
  require_gaussian(cfg, ctx.command);
  const int m = cfg.graph_m();
  const Scenario sc = cfg.scenario(m, cfg.graph.lambda);
  const std::int64_t t = cfg.run.t_max;
  const double alpha = cfg.run.alpha;
  RunOptions ropt;
  ropt.grid = false;

  std::vector<Unit> units;
  for (std::uint64_t rep = 0; rep < cfg.run.replications; ++rep) {
    units.push_back({unit_name(0, rep), [&, rep] {
                       const ReplicationRun run = run_replication(sc, rep, {t}, ropt);
                       std::string rows;
                       for (const AgentCheckpoint& ac : run.checkpoints.back().agents) {
                         const CoverageTrial trial = coverage_trial(ac, sc.truth, alpha);
                         rows += prefix(ctx, rep, m, t, sc.lambda, "gaussian", ac.agent) +
                                 theta_cells(ac.estimate.theta_hat) + "," +
                                 (trial.covered ? "1" : "0") + "," + fmt(trial.credible_mass) + "\n";
                       }
                       return rows;
                     }});
  }
  const fs::path csv =
      run_units(ctx, prefix_header() + theta_header(1) + ",covered,credible_mass", units);

  const CsvTable table = CsvTable::read(csv);
  auto report_for = [&](const std::function<bool(std::size_t)>& keep) {
    std::vector<CoverageTrial> trials;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!keep(r)) continue;
      CoverageTrial tr;
      tr.covered = table.number(r, "covered") != 0.0;
      tr.credible_mass = table.number(r, "credible_mass");
      trials.push_back(tr);
    }
    return summarize_coverage(trials);
  };
  const CoverageReport head = report_for([&](std::size_t r) { return table.number(r, "agent") == 0.0; });
  const CoverageReport all = report_for([](std::size_t) { return true; });
  json s;
  s["model"] = "gaussian";
  s["alpha"] = alpha;
  s["t"] = t;
  s["m"] = m;
  s["agent"] = 0;
  s["coverage"] = head.coverage;
  s["wilson_lo"] = head.wilson.lo;
  s["wilson_hi"] = head.wilson.hi;
  s["trials"] = head.trials;
  s["coverage_all_agents"] = all.coverage;
  s["mean_credible_mass"] = all.mean_credible_mass;
  s["misspecified"] = cfg.truth.sigma0.size() > 0;
  return finish(ctx, csv, s);
}

// lln-clt ---------------------------------------------------------------------------------------

RunResult run_lln_clt(const ExperimentConfig& config, const HarnessOptions& options) {
  const Context ctx = make_context(Command::LlnClt, config, options);
  const ExperimentConfig& cfg = ctx.cfg;
  const LlnCltConfig& lc = cfg.lln_clt;
  const int m = static_cast<int>(lc.means.size());
  const AdjacencyMatrix base = metropolis_weights(cfg.topology(m));
  const double lambda = cfg.graph.lambda;
  const StreamMoments moments{lc.means, lc.sds};
  double var_bar = 0.0;
  for (const double s : lc.sds) var_bar += s * s;
  var_bar /= m;
  auto schedule_for = [&](std::uint64_t rep) {
    return lambda >= 1.0
               ? GraphSchedule::fixed(base)
               : GraphSchedule::bernoulli_switch(base, lambda, splitmix64(cfg.graph.seed ^ rep));
  };

  constexpr std::uint64_t kChunk = 25;
  std::vector<Unit> units;
  units.push_back({"lln", [&] {
                     const Vec z = weighted_stream_sums(schedule_for(0), moments, lc.t_lln,
                                                        cfg.run.seed, 0, {}) /
                                   static_cast<double>(lc.t_lln);
                     std::string rows;
                     for (int j = 0; j < m; ++j) {
                       rows += prefix(ctx, 0, m, lc.t_lln, lambda, "stream", j) + ",lln," +
                               fmt(z(j)) + "\n";
                     }
                     return rows;
                   }});
  for (std::uint64_t start = 0; start < lc.replications; start += kChunk) {
    const std::uint64_t stop = std::min<std::uint64_t>(start + kChunk, lc.replications);
    units.push_back({unit_name(1, start), [&, start, stop] {
                       std::string rows;
                       const double scale =
                           std::sqrt(static_cast<double>(m) / static_cast<double>(lc.t_clt) / var_bar);
                       for (std::uint64_t r = start; r < stop; ++r) {
                         const Vec sums = weighted_stream_sums(schedule_for(r + 1), moments, lc.t_clt,
                                                               cfg.run.seed, r + 1, lc.means);
                         rows += prefix(ctx, r + 1, m, lc.t_clt, lambda, "stream", 0) + ",clt," +
                                 fmt(scale * sums(0)) + "\n";
                       }
                       return rows;
                     }});
  }
  const fs::path csv = run_units(ctx, prefix_header() + ",statistic,value", units);

  const CsvTable table = CsvTable::read(csv);
  const double target = mean(lc.means);
  double max_err = 0.0;
  std::vector<double> clt;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.text(r, "statistic") == "lln") {
      max_err = std::max(max_err, std::abs(table.number(r, "value") - target));
    } else {
      clt.push_back(table.number(r, "value"));
    }
  }
  json s;
  s["m"] = m;
  s["lambda"] = lambda;
  s["network_mean"] = target;
  s["t_lln"] = lc.t_lln;
  s["max_lln_error"] = max_err;
  s["t_clt"] = lc.t_clt;
  s["replications"] = clt.size();
  s["ks_distance"] = clt.empty() ? 0.0 : ks_distance_normal(clt);
  return finish(ctx, csv, s);
}

RunResult run_experiment(Command command, ExperimentConfig config, const HarnessOptions& options) {
  switch (command) {
    case Command::Simulate: return run_simulate(config, options);
    case Command::Bvm: return run_bvm(config, options);
    case Command::Contraction: return run_contraction(config, options);
    case Command::Timevary: return run_timevary(config, options);
    case Command::Coverage: return run_coverage(config, options);
    case Command::LlnClt: return run_lln_clt(config, options);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown command");
}

}  // namespace disbayes
