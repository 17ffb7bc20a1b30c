#include "disbayes/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "disbayes/error.hpp"
#include "disbayes/rng.hpp"

namespace disbayes {

GraphSchedule Scenario::schedule(std::uint64_t replication) const {
  if (lambda >= 1.0) return GraphSchedule::fixed(base);
  // The stream depends on the replication but not on lambda, so sweeps over lambda share their
  // uniforms and differ only in the threshold.
  return GraphSchedule::bernoulli_switch(base, lambda, splitmix64(graph_seed ^ replication));
}

namespace {

bool wants_grid(const RunOptions& options, int agent) {
  if (!options.grid) return false;
  if (options.grid_agents.empty()) return true;
  return std::find(options.grid_agents.begin(), options.grid_agents.end(), agent) !=
         options.grid_agents.end();
}

Box full_box(const Scenario& sc) {
  if (sc.kind() == ModelKind::Detection) return Box::unit_square();
  const Vec sd = sc.prior.cov().diagonal().cwiseSqrt();
  return Box{sc.prior.mean() - 8.0 * sd, sc.prior.mean() + 8.0 * sd};
}

GridBelief lattice_belief(const Scenario& sc, const SurrogateLoss& loss, const AgentCheckpoint& ac,
                          bool parallel) {
  const Box full = full_box(sc);
  Box box = full;
  if (ac.estimate.converged && ac.observed) {
    const Vec half = 8.0 * ac.observed->covariance.diagonal().cwiseSqrt();
    try {
      box = Box::around(ac.estimate.theta_hat, half, &full);
    } catch (const Error&) {
      box = full;
    }
  }
  GridBelief prior = sc.kind() == ModelKind::Detection
                         ? uniform_grid(box, sc.grid_n)
                         : gaussian_grid(box, sc.grid_n, sc.prior.mean(), sc.prior.cov());
  GridBelief g = grid_from_loss(loss, prior, parallel);
  g.agent = ac.agent;
  g.step = ac.t;
  return g;
}

void gaussian_checkpoint(const Scenario& sc, const NetworkState& state, Checkpoint& cp) {
  for (int j = 0; j < sc.m(); ++j) {
    AgentCheckpoint ac;
    ac.agent = j;
    ac.t = cp.t;
    ac.natural = state.natural_beliefs()[static_cast<std::size_t>(j)];
    ac.gaussian = gaussian_form(*ac.natural, sc.models, sc.prior);
    ac.estimate = gaussian_m_estimate(*ac.natural, sc.models);
    if (cp.t > 0) {
      const Mat v = average_fisher(sc.models, ac.estimate.theta_hat);
      ac.laplace = LaplaceApprox::expected(ac.estimate.theta_hat, v, static_cast<double>(cp.t));
      ac.observed = ac.laplace;
    }
    cp.agents.push_back(std::move(ac));
  }
}

void loss_checkpoint(const Scenario& sc, const History& history, const GraphSchedule& schedule,
                     const RunOptions& options, const std::vector<AgentCheckpoint>* previous,
                     Checkpoint& cp) {
  const auto losses = surrogate_losses(history, schedule, sc.models, cp.t);
  const int p = sc.models.front()->dim();
  for (int j = 0; j < sc.m(); ++j) {
    const SurrogateLoss& loss = losses[static_cast<std::size_t>(j)];
    AgentCheckpoint ac;
    ac.agent = j;
    ac.t = cp.t;
    if (sc.kind() == ModelKind::Detection) {
      ac.estimate = detection_m_estimate(loss);
    } else {
      Vec init = sc.prior.mean();
      if (previous != nullptr) {
        const MEstimate& prev = (*previous)[static_cast<std::size_t>(j)].estimate;
        if (prev.converged && prev.theta_hat.size() == p) init = prev.theta_hat;
      }
      ac.estimate = m_estimate(loss, init);
    }
    if (cp.t > 0 && ac.estimate.converged) {
      try {
        const Mat v = average_fisher(sc.models, ac.estimate.theta_hat, history, cp.t);
        ac.laplace = LaplaceApprox::expected(ac.estimate.theta_hat, v, static_cast<double>(cp.t));
      } catch (const Error&) {
      }
      try {
        ac.observed = LaplaceApprox::observed(loss, ac.estimate.theta_hat);
      } catch (const Error&) {
      }
    }
    if (wants_grid(options, j)) ac.grid = lattice_belief(sc, loss, ac, options.parallel);
    cp.agents.push_back(std::move(ac));
  }
}

}  // namespace

ReplicationRun run_replication(const Scenario& sc, std::uint64_t replication,
                               const std::vector<std::int64_t>& checkpoints,
                               const RunOptions& options) {
  if (sc.models.empty()) throw Error(ErrorCode::EmptyGraph, "scenario has no agents");
  if (sc.base.m() != sc.m()) {
    throw Error(ErrorCode::InvalidTopology, "graph size differs from the number of agents");
  }
  for (std::size_t c = 1; c < checkpoints.size(); ++c) {
    if (checkpoints[c] <= checkpoints[c - 1]) {
      throw Error(ErrorCode::IndexOrder, "checkpoints must be strictly increasing");
    }
  }
  const std::int64_t t_max = checkpoints.empty() ? 0 : checkpoints.back();
  ReplicationRun run;
  run.history = generate_history(sc.models, sc.truth, t_max, sc.seed, replication);
  const GraphSchedule schedule = sc.schedule(replication);

  if (sc.kind() == ModelKind::Gaussian) {
    NetworkState state = NetworkState::natural(sc.models, sc.prior);
    std::size_t next = 0;
    for (std::int64_t k = 0;; ++k) {
      while (next < checkpoints.size() && checkpoints[next] == k) {
        Checkpoint cp;
        cp.t = k;
        gaussian_checkpoint(sc, state, cp);
        if (options.ideal) {
          cp.ideal = gaussian_form(ideal_posterior(sc.models, run.history, k), sc.models, sc.prior);
        }
        run.checkpoints.push_back(std::move(cp));
        ++next;
      }
      if (k >= t_max) break;
      advance(state, run.history.row(k + 1), schedule.matrix_at(k));
    }
    return run;
  }

  for (const std::int64_t t : checkpoints) {
    Checkpoint cp;
    cp.t = t;
    const std::vector<AgentCheckpoint>* previous =
        run.checkpoints.empty() ? nullptr : &run.checkpoints.back().agents;
    loss_checkpoint(sc, run.history, schedule, options, previous, cp);
    run.checkpoints.push_back(std::move(cp));
  }
  return run;
}

}  // namespace disbayes
