#pragma once

/// Monte Carlo companion to the tree: ensembles of Gaussian increment paths
/// in dimension d >= 1, used for moment checks and closed-form cross-checks.
/// Generation parallelizes across paths (one counter-derived RNG stream per
/// path), reductions run in fixed path order, so every statistic is
/// bit-reproducible and independent of the worker count.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bsde/lattice.hpp"

namespace bsde {

struct PathEnsemble {
  TimeGrid grid;
  int dim = 1;
  std::size_t n_paths = 0;
  /// increments[p * steps * dim + k * dim + c] = component c of dW at step k.
  std::vector<double> increments;

  double dw(std::size_t path, int step, int comp) const {
    return increments[(path * grid.steps + step) * dim + comp];
  }
  /// Accumulated value W_{t_k} (sum of the first k increments).
  double w_at(std::size_t path, int step, int comp) const;
};

/// Draws n_paths independent Gaussian paths with variance dt per increment.
PathEnsemble mc_paths(const TimeGrid& grid, int dim, std::size_t n_paths,
                      std::uint64_t seed);

struct MomentReport {
  std::vector<double> mean;        // per component, pooled over steps
  std::vector<double> covariance;  // dim x dim, pooled over steps
  double max_mean_abs = 0.0;
  double max_cov_err = 0.0;  // vs dt * I
  double standard_error = 0.0;
  bool within(double k_sigma) const;
};

/// Empirical increment moments in fixed path order.
MomentReport increment_moments(const PathEnsemble& ens);

}  // namespace bsde
