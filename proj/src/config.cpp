#include "disbayes/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"

#include "disbayes/error.hpp"

namespace disbayes {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ConfigInvalid, field + ": " + why);
}

void reject_unknown(const toml::table& tbl, const std::string& where,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, node] : tbl) {
    const std::string k(key.str());
    if (!allowed.contains(k)) invalid(where.empty() ? k : where + "." + k, "unknown key");
  }
}

const toml::table* subtable(const toml::table& root, const std::string& name) {
  const toml::node* node = root.get(name);
  if (node == nullptr) return nullptr;
  if (!node->is_table()) invalid(name, "expected a table");
  return node->as_table();
}

double as_double(const toml::node& node, const std::string& field) {
  if (auto v = node.value<double>()) return *v;
  invalid(field, "expected a number");
}

std::int64_t as_int(const toml::node& node, const std::string& field) {
  if (!node.is_integer()) invalid(field, "expected an integer");
  return *node.value<std::int64_t>();
}

void read_double(const toml::table& t, const std::string& where, const char* key, double& out) {
  if (const toml::node* n = t.get(key)) out = as_double(*n, where + "." + key);
}

template <typename Int>
void read_int(const toml::table& t, const std::string& where, const char* key, Int& out) {
  if (const toml::node* n = t.get(key)) {
    const std::int64_t v = as_int(*n, where + "." + key);
    if constexpr (std::is_unsigned_v<Int>) {
      if (v < 0) invalid(where + "." + key, "must be non-negative");
    }
    out = static_cast<Int>(v);
  }
}

void read_string(const toml::table& t, const std::string& where, const char* key, std::string& out) {
  if (const toml::node* n = t.get(key)) {
    if (!n->is_string()) invalid(where + "." + key, "expected a string");
    out = *n->value<std::string>();
  }
}

void read_bool(const toml::table& t, const std::string& where, const char* key, bool& out) {
  if (const toml::node* n = t.get(key)) {
    if (!n->is_boolean()) invalid(where + "." + key, "expected true or false");
    out = *n->value<bool>();
  }
}

const toml::array& as_array(const toml::node& node, const std::string& field) {
  if (!node.is_array()) invalid(field, "expected an array");
  return *node.as_array();
}

std::vector<double> double_list(const toml::node& node, const std::string& field) {
  std::vector<double> out;
  if (node.is_number()) return {as_double(node, field)};
  const auto& arr = as_array(node, field);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(as_double(arr[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

template <typename Int>
std::vector<Int> int_list(const toml::node& node, const std::string& field) {
  std::vector<Int> out;
  const auto& arr = as_array(node, field);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(static_cast<Int>(as_int(arr[i], field + "[" + std::to_string(i) + "]")));
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ModelKind parse_kind(const std::string& s) {
  if (s == "gaussian") return ModelKind::Gaussian;
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "detection") return ModelKind::Detection;
  invalid("model.kind", "expected gaussian, logistic or detection, got '" + s + "'");
}

void parse_model(const toml::table& t, ModelConfig& m) {
  const std::string w = "model";
  reject_unknown(t, w, {"kind", "sigma", "prior_mean", "prior_var", "dim", "sensors", "sensor_sigma",
                        "grid_n"});
  std::string kind = "gaussian";
  read_string(t, w, "kind", kind);
  m.kind = parse_kind(kind);
  if (const toml::node* n = t.get("sigma")) m.sigma = double_list(*n, "model.sigma");
  read_double(t, w, "prior_mean", m.prior_mean);
  read_double(t, w, "prior_var", m.prior_var);
  read_int(t, w, "dim", m.dim);
  read_int(t, w, "grid_n", m.grid_n);
  if (const toml::node* n = t.get("sensors")) {
    const auto& arr = as_array(*n, "model.sensors");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = "model.sensors[" + std::to_string(i) + "]";
      const auto xy = double_list(arr[i], f);
      if (xy.size() != 2) invalid(f, "expected a pair [x, y]");
      m.sensors.push_back(to_vec(xy));
    }
  }
  if (const toml::node* n = t.get("sensor_sigma")) {
    m.sensor_sigma = double_list(*n, "model.sensor_sigma");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text,
                                         const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " at line " << e.source().begin.line;
    throw Error(ErrorCode::ConfigInvalid, msg.str());
  }
  reject_unknown(root, "", {"model", "truth", "graph", "run", "sweep", "lln_clt", "output"});

  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  if (const auto* t = subtable(root, "model")) parse_model(*t, cfg.model);

  if (const auto* t = subtable(root, "truth")) {
    reject_unknown(*t, "truth", {"theta0", "sigma0"});
    if (const toml::node* n = t->get("theta0")) cfg.truth.theta0 = to_vec(double_list(*n, "truth.theta0"));
    if (const toml::node* n = t->get("sigma0")) cfg.truth.sigma0 = double_list(*n, "truth.sigma0");
  }
  if (cfg.truth.theta0.size() == 0) {
    if (cfg.model.kind != ModelKind::Gaussian) invalid("truth.theta0", "required for this model");
    cfg.truth.theta0 = Vec::Zero(1);
  }

  if (const auto* t = subtable(root, "graph")) {
    const std::string w = "graph";
    reject_unknown(*t, w, {"family", "edge_list", "m", "lambda", "seed"});
    read_string(*t, w, "family", cfg.graph.family);
    read_string(*t, w, "edge_list", cfg.graph.edge_list);
    read_int(*t, w, "m", cfg.graph.m);
    read_double(*t, w, "lambda", cfg.graph.lambda);
    read_int(*t, w, "seed", cfg.graph.seed);
  }

  if (const auto* t = subtable(root, "run")) {
    const std::string w = "run";
    reject_unknown(*t, w, {"t_max", "checkpoints", "replications", "seed", "workers", "alpha", "eps",
                           "grid", "grid_agents", "max_nonconverged"});
    read_int(*t, w, "t_max", cfg.run.t_max);
    if (const toml::node* n = t->get("checkpoints")) {
      cfg.run.checkpoints = int_list<std::int64_t>(*n, "run.checkpoints");
    }
    read_int(*t, w, "replications", cfg.run.replications);
    read_int(*t, w, "seed", cfg.run.seed);
    read_int(*t, w, "workers", cfg.run.workers);
    read_double(*t, w, "alpha", cfg.run.alpha);
    read_double(*t, w, "eps", cfg.run.eps);
    read_bool(*t, w, "grid", cfg.run.grid);
    if (const toml::node* n = t->get("grid_agents")) {
      cfg.run.grid_agents = int_list<int>(*n, "run.grid_agents");
    }
    read_double(*t, w, "max_nonconverged", cfg.run.max_nonconverged);
  }
  if (cfg.run.checkpoints.empty()) cfg.run.checkpoints = {cfg.run.t_max};

  if (const auto* t = subtable(root, "sweep")) {
    reject_unknown(*t, "sweep", {"m", "t", "lambda"});
    if (const toml::node* n = t->get("m")) cfg.sweep.m = int_list<int>(*n, "sweep.m");
    if (const toml::node* n = t->get("t")) cfg.sweep.t = int_list<std::int64_t>(*n, "sweep.t");
    if (const toml::node* n = t->get("lambda")) cfg.sweep.lambda = double_list(*n, "sweep.lambda");
  }

  if (const auto* t = subtable(root, "lln_clt")) {
    const std::string w = "lln_clt";
    reject_unknown(*t, w, {"means", "sds", "t_lln", "t_clt", "replications"});
    if (const toml::node* n = t->get("means")) cfg.lln_clt.means = double_list(*n, "lln_clt.means");
    if (const toml::node* n = t->get("sds")) cfg.lln_clt.sds = double_list(*n, "lln_clt.sds");
    read_int(*t, w, "t_lln", cfg.lln_clt.t_lln);
    read_int(*t, w, "t_clt", cfg.lln_clt.t_clt);
    read_int(*t, w, "replications", cfg.lln_clt.replications);
  }

  if (const auto* t = subtable(root, "output")) {
    reject_unknown(*t, "output", {"dir"});
    read_string(*t, "output", "dir", cfg.output_dir);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

void ExperimentConfig::validate() const {
  const RunConfig& r = run;
  if (r.t_max < 0) invalid("run.t_max", "must be non-negative");
  for (std::size_t i = 0; i < r.checkpoints.size(); ++i) {
    if (r.checkpoints[i] < 0) invalid("run.checkpoints", "must be non-negative");
    if (i > 0 && r.checkpoints[i] <= r.checkpoints[i - 1]) {
      invalid("run.checkpoints", "must be strictly increasing");
    }
    if (r.checkpoints[i] > r.t_max) {
      invalid("run.checkpoints", "value " + std::to_string(r.checkpoints[i]) + " exceeds run.t_max");
    }
  }
  if (r.replications == 0) invalid("run.replications", "must be at least 1");
  if (r.workers < 1) invalid("run.workers", "must be at least 1");
  if (!(r.alpha > 0.0 && r.alpha < 1.0)) invalid("run.alpha", "must lie in (0, 1)");
  if (!(r.eps > 0.0)) invalid("run.eps", "must be positive");
  if (!(r.max_nonconverged >= 0.0 && r.max_nonconverged <= 1.0)) {
    invalid("run.max_nonconverged", "must lie in [0, 1]");
  }

  if (!(graph.lambda >= 0.0 && graph.lambda <= 1.0)) invalid("graph.lambda", "must lie in [0, 1]");
  for (const double l : sweep.lambda) {
    if (!(l >= 0.0 && l <= 1.0)) invalid("sweep.lambda", "values must lie in [0, 1]");
  }
  if (graph.edge_list.empty()) {
    if (graph.m < 1) invalid("graph.m", "must be at least 1");
    const std::set<std::string> families{"complete", "ring", "path", "star"};
    if (!families.contains(graph.family)) {
      invalid("graph.family", "expected complete, ring, path or star, got '" + graph.family + "'");
    }
  }
  for (const int m : sweep.m) {
    if (m < 1) invalid("sweep.m", "values must be at least 1");
  }
  for (std::size_t i = 0; i < sweep.t.size(); ++i) {
    if (sweep.t[i] < 1) invalid("sweep.t", "values must be positive");
    if (i > 0 && sweep.t[i] <= sweep.t[i - 1]) invalid("sweep.t", "must be strictly increasing");
  }

  const ModelConfig& md = model;
  if (md.grid_n < 3) invalid("model.grid_n", "must be at least 3");
  if (!(md.prior_var > 0.0)) invalid("model.prior_var", "must be positive");
  switch (md.kind) {
    case ModelKind::Gaussian:
      if (md.sigma.empty()) invalid("model.sigma", "must not be empty");
      for (const double s : md.sigma) {
        if (!(s > 0.0)) invalid("model.sigma", "values must be positive");
      }
      if (truth.theta0.size() != 1) invalid("truth.theta0", "gaussian agents need a scalar");
      break;
    case ModelKind::Logistic:
      if (md.dim < 1) invalid("model.dim", "must be at least 1");
      if (md.dim > 2 && r.grid) invalid("model.dim", "lattice beliefs support at most 2 dimensions");
      if (truth.theta0.size() != md.dim) invalid("truth.theta0", "length must equal model.dim");
      break;
    case ModelKind::Detection:
      if (md.sensors.empty()) invalid("model.sensors", "detection needs sensor positions");
      for (const double s : md.sensor_sigma) {
        if (!(s > 0.0)) invalid("model.sensor_sigma", "values must be positive");
      }
      if (truth.theta0.size() != 2) invalid("truth.theta0", "detection needs a point in the plane");
      if ((truth.theta0.array() < 0.0).any() || (truth.theta0.array() > 1.0).any()) {
        invalid("truth.theta0", "must lie in the unit square");
      }
      break;
  }
  if (!truth.sigma0.empty()) {
    if (md.kind != ModelKind::Gaussian) invalid("truth.sigma0", "only supported for gaussian agents");
    for (const double s : truth.sigma0) {
      if (!(s > 0.0)) invalid("truth.sigma0", "values must be positive");
    }
  }

  if (lln_clt.means.empty() || lln_clt.means.size() != lln_clt.sds.size()) {
    invalid("lln_clt.sds", "needs one value per entry of lln_clt.means");
  }
  for (const double s : lln_clt.sds) {
    if (!(s > 0.0)) invalid("lln_clt.sds", "values must be positive");
  }
  if (lln_clt.t_lln < 1) invalid("lln_clt.t_lln", "must be positive");
  if (lln_clt.t_clt < 1) invalid("lln_clt.t_clt", "must be positive");
  if (output_dir.empty()) invalid("output.dir", "must not be empty");
}

int ExperimentConfig::graph_m() const {
  if (!graph.edge_list.empty()) return topology(0).m();
  return graph.m;
}

Topology ExperimentConfig::topology(int m) const {
  try {
    if (!graph.edge_list.empty()) {
      std::filesystem::path p(graph.edge_list);
      if (p.is_relative()) p = base_dir / p;
      Topology topo = Topology::load(p.string());
      if (m > 0 && topo.m() != m) {
        invalid("graph.edge_list", "file has " + std::to_string(topo.m()) + " agents, sweep asks for " +
                                       std::to_string(m));
      }
      return topo;
    }
    return Topology::named(graph.family, m);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::IoError) throw;
    invalid("graph", e.what());
  }
}

ModelSet ExperimentConfig::models(int m) const {
  ModelSet out;
  auto pick = [](const std::vector<double>& v, int j, const std::string& field) {
    if (v.size() == 1) return v.front();
    if (j >= static_cast<int>(v.size())) invalid(field, "needs one value per agent");
    return v[static_cast<std::size_t>(j)];
  };
  for (int j = 0; j < m; ++j) {
    switch (model.kind) {
      case ModelKind::Gaussian:
        out.push_back(std::make_shared<GaussianLocationModel>(pick(model.sigma, j, "model.sigma")));
        break;
      case ModelKind::Logistic:
        out.push_back(std::make_shared<LogisticModel>(model.dim));
        break;
      case ModelKind::Detection:
        if (static_cast<int>(model.sensors.size()) != m) {
          invalid("model.sensors", "has " + std::to_string(model.sensors.size()) +
                                       " sensors for " + std::to_string(m) + " agents");
        }
        out.push_back(std::make_shared<DetectionModel>(model.sensors[static_cast<std::size_t>(j)],
                                                       pick(model.sensor_sigma, j, "model.sensor_sigma")));
        break;
    }
  }
  if (!truth.sigma0.empty() && truth.sigma0.size() != 1 && truth.sigma0.size() != out.size()) {
    invalid("truth.sigma0", "needs one value or one per agent");
  }
  return out;
}

TrueDistribution ExperimentConfig::true_distribution() const {
  return TrueDistribution{truth.theta0, truth.sigma0};
}

int ExperimentConfig::param_dim() const {
  switch (model.kind) {
    case ModelKind::Gaussian: return 1;
    case ModelKind::Logistic: return model.dim;
    case ModelKind::Detection: return 2;
  }
  return 1;
}

Scenario ExperimentConfig::scenario(int m, double lambda) const {
  Scenario sc;
  sc.models = models(m);
  sc.truth = true_distribution();
  const int p = param_dim();
  sc.prior = ConjugatePrior::gaussian(Vec::Constant(p, model.prior_mean),
                                      model.prior_var * Mat::Identity(p, p));
  try {
    sc.base = metropolis_weights(topology(m));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::IoError) throw;
    invalid("graph", e.what());
  }
  sc.lambda = lambda;
  sc.seed = run.seed;
  sc.graph_seed = graph.seed;
  sc.grid_n = model.grid_n;
  return sc;
}

}  // namespace disbayes
