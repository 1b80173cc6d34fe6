#pragma once

/// Independent cross-checking oracles. Both are deliberately implemented
/// with different numerics than the production solvers they validate:
///  * brute_force_minimal enumerates control grids on tiny trees by direct
///    recursion (exact min/max interchange across disjoint subtrees);
///  * qp_inner_oracle solves the two decoupled quadratic programs behind the
///    deterministic-kernel inner problem on a fine time grid by assembling
///    the normal equations and factoring them with a hand-rolled banded
///    Cholesky, then evaluates the literal discrete functionals at the
///    argmin.

#include <cstddef>
#include <functional>
#include <vector>

#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"
#include "bsde/primal.hpp"

namespace bsde {

struct GridSpec {
  double delta_lo = -2.0;
  double delta_hi = 2.0;
  int delta_steps = 81;  // grid points per axis (1 pins the value at lo)
  double gamma_lo = -2.0;
  double gamma_hi = 2.0;
  int gamma_steps = 81;
  double eval_cap = 1e7;  // generator-evaluation budget, checked upfront
};

struct BruteForceResult {
  double value = 0.0;
  double delta0 = 0.0;  // root argmin, first grid index on ties
  double gamma0 = 0.0;
  double evals = 0.0;  // generator evaluations performed
};

/// Exact minimum of the backward-eliminated root value when every node's
/// (delta, gamma) ranges over the grid. Infinite generator values exclude a
/// grid point. Cost grows like (2 G)^depth with G grid pairs; a SizeError is
/// thrown when the projected evaluation count exceeds grid.eval_cap.
BruteForceResult brute_force_minimal(const ScenarioTree& tree,
                                     const GeneratorSpec& gen,
                                     const TerminalCondition& xi, double z0,
                                     const GridSpec& grid);

struct QpOracleResult {
  double min_f1 = 0.0;  // discrete min of int (Delta^2 - R Delta) dt
  double min_f2 = 0.0;  // discrete min of int (Gamma^2 - q R Gamma) dt
  double estar = 0.0;   // z0 int q - min_f1 - min_f2
  std::vector<double> argmin_delta;
  std::vector<double> argmin_gamma;
};

/// Deterministic-kernel inner problem for the plain quadratic generator,
/// discretized with the midpoint rule on n_fine uniform cells of [0, T]:
///   X_i = sum_{j<i} Delta_j h + Delta_i h/2,
///   F1 = sum Delta_i^2 h - sum q_i X_i h   (F2 alike with Gamma, q Gamma).
/// The stationarity system is assembled and solved via banded Cholesky and
/// the minima are read off by evaluating the discrete functionals at the
/// solution (midpoint consistency gives O(h^2) agreement with the
/// continuous-time values). q is sampled at cell midpoints.
QpOracleResult qp_inner_oracle(const std::function<double(double)>& q,
                               double horizon, double z0, int n_fine);

/// Solves A x = b for a symmetric positive definite band matrix given in
/// lower band-major storage: band[r * (bw + 1) + c] holds A(r, r - bw + c),
/// c in [0, bw]. Used by the oracle and exposed for its own tests.
std::vector<double> banded_spd_solve(std::vector<double> band, int bw,
                                     std::vector<double> rhs);

}  // namespace bsde
