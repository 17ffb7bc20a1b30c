#include "disbayes/surrogate.hpp"

#include "disbayes/error.hpp"
#include "disbayes/rng.hpp"

namespace disbayes {

void History::append(std::vector<Observation> row) {
  if (static_cast<int>(row.size()) != m_) {
    throw Error(ErrorCode::IndexOutOfRange, "history row needs one observation per agent");
  }
  rows_.push_back(std::move(row));
}

const Observation& History::at(std::int64_t k, int agent) const {
  return row(k).at(static_cast<std::size_t>(agent));
}

const std::vector<Observation>& History::row(std::int64_t k) const {
  if (k < 1 || k > steps()) {
    throw Error(ErrorCode::IndexOutOfRange, "history step " + std::to_string(k) + " not recorded");
  }
  return rows_[static_cast<std::size_t>(k - 1)];
}

History generate_history(const ModelSet& models, const TrueDistribution& truth, std::int64_t t,
                         std::uint64_t seed, std::uint64_t replication) {
  const int m = static_cast<int>(models.size());
  History h(m);
  for (std::int64_t k = 1; k <= t; ++k) {
    std::vector<Observation> row;
    row.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      CounterRng rng(seed, replication, static_cast<std::uint64_t>(i),
                     static_cast<std::uint64_t>(k), Purpose::Observation);
      row.push_back(sample_observation(*models[static_cast<std::size_t>(i)], truth, i, rng));
    }
    h.append(std::move(row));
  }
  return h;
}

SurrogateLoss::SurrogateLoss(ModelSet models, double t)
    : models_(std::move(models)), t_(t) {
  const auto m = models_.size();
  source_weight_.assign(m, 0.0);
  summaries_.resize(m);
  raw_.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int d = models_[i]->summary_dim();
    if (d > 0) summaries_[i] = Vec::Zero(d);
  }
}

void SurrogateLoss::add(int source, double weight, const Observation& obs) {
  const auto i = static_cast<std::size_t>(source);
  const Model& model = *models_.at(i);
  model.check_observation(obs);
  source_weight_[i] += weight;
  total_weight_ += weight;
  if (model.summary_dim() > 0) {
    summaries_[i] += weight * model.summary(obs);
  } else if (weight != 0.0) {
    raw_[i].emplace_back(weight, obs);
  }
}

int SurrogateLoss::dim() const { return models_.empty() ? 0 : models_.front()->dim(); }

double SurrogateLoss::weighted_log_lik(const Vec& theta) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const Model& model = *models_[i];
    if (model.summary_dim() > 0) {
      if (source_weight_[i] != 0.0) acc += model.summary_log_lik(theta, summaries_[i]);
    } else {
      for (const auto& [w, obs] : raw_[i]) acc += w * model.log_lik(theta, obs);
    }
  }
  return acc;
}

double SurrogateLoss::value(const Vec& theta) const {
  if (t_ <= 0.0) return 0.0;
  return -weighted_log_lik(theta) / t_;
}

Vec SurrogateLoss::grad(const Vec& theta) const {
  Vec g = Vec::Zero(theta.size());
  if (t_ <= 0.0) return g;
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const Model& model = *models_[i];
    if (model.summary_dim() > 0) {
      if (source_weight_[i] != 0.0) g += model.summary_grad(theta, summaries_[i]);
    } else {
      for (const auto& [w, obs] : raw_[i]) g += w * model.grad_log_lik(theta, obs);
    }
  }
  return -g / t_;
}

Mat SurrogateLoss::hess(const Vec& theta) const {
  Mat h = Mat::Zero(theta.size(), theta.size());
  if (t_ <= 0.0) return h;
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const Model& model = *models_[i];
    if (model.summary_dim() > 0) {
      if (source_weight_[i] != 0.0) h += model.summary_hess(theta, summaries_[i]);
    } else {
      for (const auto& [w, obs] : raw_[i]) h += w * model.hess_log_lik(theta, obs);
    }
  }
  return -h / t_;
}

std::vector<SurrogateLoss> surrogate_losses(const History& history, const GraphSchedule& schedule,
                                            const ModelSet& models, std::int64_t t) {
  const int m = history.m();
  if (schedule.m() != m || static_cast<int>(models.size()) != m) {
    throw Error(ErrorCode::IndexOutOfRange, "history, schedule and models disagree on m");
  }
  if (t > history.steps()) {
    throw Error(ErrorCode::IndexOrder, "loss requested beyond recorded history");
  }
  std::vector<SurrogateLoss> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) out.emplace_back(models, static_cast<double>(t));

  const Mat& a = schedule.base().weights();
  Mat p = Mat::Identity(m, m);
  int since = 0;
  for (std::int64_t k = t; k >= 1; --k) {
    if (k < t && schedule.communicates(k)) {
      p = a * p;
      if (++since == 64) {
        for (int r = 0; r < m; ++r) p.row(r) /= p.row(r).sum();
        since = 0;
      }
    }
    const auto& row = history.row(k);
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) {
        const double w = p(i, j);
        if (w != 0.0) out[static_cast<std::size_t>(j)].add(i, w, row[static_cast<std::size_t>(i)]);
      }
    }
  }
  return out;
}

SurrogateLoss ideal_loss(const History& history, const ModelSet& models, std::int64_t t) {
  const int m = history.m();
  SurrogateLoss loss(models, static_cast<double>(t));
  const double w = 1.0 / m;
  for (std::int64_t k = 1; k <= t; ++k) {
    const auto& row = history.row(k);
    for (int i = 0; i < m; ++i) loss.add(i, w, row[static_cast<std::size_t>(i)]);
  }
  return loss;
}

}  // namespace disbayes
