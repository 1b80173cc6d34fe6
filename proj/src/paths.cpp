#include "bsde/paths.hpp"

#include <cmath>
#include <random>

#include "bsde/errors.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

namespace {

// splitmix64: decorrelates per-path seeds derived from (seed, path index).
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double PathEnsemble::w_at(std::size_t path, int step, int comp) const {
  double acc = 0.0;
  for (int k = 0; k < step; ++k) acc += dw(path, k, comp);
  return acc;
}

PathEnsemble mc_paths(const TimeGrid& grid, int dim, std::size_t n_paths,
                      std::uint64_t seed) {
  if (dim < 1) throw SizeError("mc_paths: dim must be >= 1");
  if (grid.steps < 1) throw SizeError("mc_paths: grid has no steps");
  if (n_paths == 0) throw SizeError("mc_paths: n_paths must be >= 1");

  PathEnsemble ens;
  ens.grid = grid;
  ens.dim = dim;
  ens.n_paths = n_paths;
  ens.increments.resize(n_paths * static_cast<std::size_t>(grid.steps) * dim);

  const double s = grid.sqrt_dt;
  const int steps = grid.steps;
  double* out = ens.increments.data();
  parallel_for(n_paths, [&, s, steps, dim, seed](std::size_t p) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(p + 1)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double* row = out + p * static_cast<std::size_t>(steps) * dim;
    for (int k = 0; k < steps; ++k)
      for (int c = 0; c < dim; ++c) row[k * dim + c] = s * gauss(rng);
  });
  return ens;
}

bool MomentReport::within(double k_sigma) const {
  return max_mean_abs <= k_sigma * standard_error &&
         max_cov_err <= k_sigma * standard_error;
}

MomentReport increment_moments(const PathEnsemble& ens) {
  const int d = ens.dim;
  const std::size_t n = ens.n_paths * static_cast<std::size_t>(ens.grid.steps);
  MomentReport rep;
  rep.mean.assign(d, 0.0);
  rep.covariance.assign(static_cast<std::size_t>(d) * d, 0.0);

  // Fixed path-major order keeps the statistics bit-reproducible.
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    for (int k = 0; k < ens.grid.steps; ++k) {
      for (int a = 0; a < d; ++a) {
        const double xa = ens.dw(p, k, a);
        rep.mean[a] += xa;
        for (int b = 0; b < d; ++b)
          rep.covariance[a * d + b] += xa * ens.dw(p, k, b);
      }
    }
  }
  for (int a = 0; a < d; ++a) rep.mean[a] /= static_cast<double>(n);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double& c = rep.covariance[a * d + b];
      c = c / static_cast<double>(n) - rep.mean[a] * rep.mean[b];
    }

  const double dt = ens.grid.dt;
  for (int a = 0; a < d; ++a) {
    rep.max_mean_abs = std::max(rep.max_mean_abs, std::fabs(rep.mean[a]));
    for (int b = 0; b < d; ++b) {
      const double target = a == b ? dt : 0.0;
      rep.max_cov_err = std::max(
          rep.max_cov_err, std::fabs(rep.covariance[a * d + b] - target));
    }
  }
  // Var(dW) = dt, Var(dW^2) = 2 dt^2; use the looser of the two scales.
  rep.standard_error =
      std::max(std::sqrt(dt / static_cast<double>(n)),
               std::sqrt(2.0 * dt * dt / static_cast<double>(n)));
  return rep;
}

}  // namespace bsde
