#include "disbayes/kernels.hpp"

#include <limits>

namespace disbayes::kernels {

namespace {

inline double mix_cell(const Mat& a, const Mat& logw, Eigen::Index c, Eigen::Index j) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double w = a(i, j);
    if (w != 0.0) acc += w * logw(c, i);
  }
  return acc;
}

}  // namespace

void consensus_mix_serial(const Mat& a, const Mat& logw, const Mat& add, Mat& out) {
  out.resize(logw.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index c = 0; c < logw.rows(); ++c) out(c, j) = add(c, j) + mix_cell(a, logw, c, j);
}

void consensus_mix_parallel(const Mat& a, const Mat& logw, const Mat& add, Mat& out) {
  out.resize(logw.rows(), a.cols());
  const Eigen::Index cells = logw.rows();
  const Eigen::Index m = a.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < cells; ++c)
    for (Eigen::Index j = 0; j < m; ++j) out(c, j) = add(c, j) + mix_cell(a, logw, c, j);
}

void loglik_on_grid_serial(const Model& model, const Observation& obs, const Mat& points,
                           Vec& out) {
  out.resize(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) out(c) = model.log_lik(points.col(c), obs);
}

void loglik_on_grid_parallel(const Model& model, const Observation& obs, const Mat& points,
                             Vec& out) {
  out.resize(points.cols());
  const Eigen::Index cells = points.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < cells; ++c) out(c) = model.log_lik(points.col(c), obs);
}

void loss_on_grid_serial(const SurrogateLoss& loss, const Mat& points, Vec& out) {
  out.resize(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c)
    out(c) = loss.weighted_log_lik(points.col(c));
}

void loss_on_grid_parallel(const SurrogateLoss& loss, const Mat& points, Vec& out) {
  out.resize(points.cols());
  const Eigen::Index cells = points.cols();
#pragma omp parallel for schedule(dynamic, 64)
  for (Eigen::Index c = 0; c < cells; ++c) out(c) = loss.weighted_log_lik(points.col(c));
}

}  // namespace disbayes::kernels
