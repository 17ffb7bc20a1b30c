#pragma once

#include "disbayes/models.hpp"
#include "disbayes/numeric.hpp"
#include "disbayes/surrogate.hpp"

// Lattice kernels behind the grid beliefs. Each has a serial reference and an OpenMP version;
// both visit cells independently, so their outputs agree bit for bit.
namespace disbayes::kernels {

/// out(c, j) = add(c, j) + sum_i a(i, j) * logw(c, i), skipping zero weights so that -inf cells
/// of non-neighbours do not poison the sum. Rows are lattice cells, columns agents.
void consensus_mix_serial(const Mat& a, const Mat& logw, const Mat& add, Mat& out);
void consensus_mix_parallel(const Mat& a, const Mat& logw, const Mat& add, Mat& out);

/// out(c) = log p_theta_c(obs) for every lattice point (columns of `points`).
void loglik_on_grid_serial(const Model& model, const Observation& obs, const Mat& points, Vec& out);
void loglik_on_grid_parallel(const Model& model, const Observation& obs, const Mat& points,
                             Vec& out);

/// out(c) = the loss's weighted log-likelihood at every lattice point.
void loss_on_grid_serial(const SurrogateLoss& loss, const Mat& points, Vec& out);
void loss_on_grid_parallel(const SurrogateLoss& loss, const Mat& points, Vec& out);

}  // namespace disbayes::kernels
