#pragma once

/// Minimal supersolution values by backward elimination of Y.
///
/// For fixed controls, the minimal process satisfying the one-step system
///   Y(n) - g(t_k, ., Z(n), Delta(n), Gamma(n)) dt + Z(n) dW(edge) >= Y(child)
///   Y(leaf) >= xi(leaf)
/// is Y(leaf) = xi and
///   Y(n) = g dt + max_c ( Y(child c) - Z(n) dW(c) ).
/// The root value is jointly convex in (Delta, Gamma) (affine synthesis into
/// a convex generator plus max/sum compositions), and is minimized by a
/// projected subgradient method (1/sqrt(k) step decay, best-iterate
/// tracking, zero + random restarts whose agreement is the convergence
/// certificate), a smoothing refinement (the child max softened to a
/// log-sum-exp whose temperature is annealed toward zero, descended along
/// the full-tree adjoint gradient; a declared z-box is handled by an
/// annealed quadratic penalty so the phase never jams on the domain
/// boundary), and a deterministic coordinate-descent polish. Acceptance of
/// an iterate is always measured on the unsmoothed, hard-constrained sweep.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsde/control.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"

namespace bsde {

/// Terminal condition: one value per leaf, indexed like tree leaves.
using TerminalCondition = std::vector<double>;

struct SolverConfig {
  int max_iters = 4000;        // subgradient iterations per restart
  double step0 = 0.25;         // initial step
  double step_decay = 0.5;     // step_k = step0 / k^step_decay
  double tol_opt = 1e-4;       // optimality tolerance, scaled by 1+|value|
  double tol_feas = 1e-9;      // feasibility tolerance for verification
  int restarts = 3;            // restart 0 starts from zero controls
  double random_radius = 1.0;  // amplitude of random restarts
  int polish_sweeps = 10;      // coordinate-descent sweeps (0 disables)
  std::size_t polish_max_nodes = 512;  // skip polish on larger trees
  std::uint64_t seed = 0x5eed;

  double effective_tol(double value) const {
    return tol_opt * (1.0 + std::fabs(value));
  }
};

struct VerifyReport {
  bool ok = false;
  bool infeasible = false;   // generator evaluated to +infinity
  double worst_slack = 0.0;  // min over edges of the one-step inequality slack
  std::size_t worst_node = 0;
  double worst_terminal = 0.0;  // min over leaves of Y - xi
};

/// Checks the one-step supersolution system edge by edge (tolerance
/// tol_feas). Supports y-dependent generators (g evaluated at y = Y(node)).
VerifyReport verify_supersolution(const ScenarioTree& tree,
                                  const GeneratorSpec& gen,
                                  const TerminalCondition& xi,
                                  const AdaptedProcess& y,
                                  const ControlTriple& ct, double tol_feas);

/// Backward elimination for fixed controls; returns the root value and,
/// optionally, the whole Y process. +infinity propagates when the generator
/// is infinite at a visited control point. Throws UnsupportedError for
/// y-dependent generators.
double evaluate_Y_given_controls(const ScenarioTree& tree,
                                 const GeneratorSpec& gen,
                                 const TerminalCondition& xi,
                                 const ControlTriple& ct,
                                 AdaptedProcess* y_out = nullptr);

struct MinimalValueResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;  // total subgradient iterations across restarts
  std::vector<double> restart_values;
  double restart_spread = 0.0;
  ControlTriple controls;
  AdaptedProcess y;
  std::size_t domain_active_nodes = 0;  // nodes where a constraint binds
  std::string message;
};

/// Minimal root value over admissible controls with Z(root) = z0.
/// Requires declared pos + con flags.
MinimalValueResult minimal_value(const ScenarioTree& tree,
                                 const GeneratorSpec& gen,
                                 const TerminalCondition& xi, double z0,
                                 const SolverConfig& cfg);

struct DecomposeReport {
  bool increasing_ok = false;
  double worst_increment = 0.0;    // min over edges of a(edge)
  double worst_sibling_gap = 0.0;  // max |a(up) - a(down)| across siblings
  bool predictable = false;        // sibling gap within tolerance
};

/// Pathwise compensator: a(edge) = Y(n) + Z(n) dW - Y(child) - g dt,
/// accumulated from A(root) = 0. The report quantifies monotonicity and the
/// sibling agreement that predictability would require.
std::pair<AdaptedProcess, DecomposeReport> decompose(const ScenarioTree& tree,
                                                     const GeneratorSpec& gen,
                                                     const AdaptedProcess& y,
                                                     const ControlTriple& ct,
                                                     double tol = 1e-9);

/// Value as a function of the initial control state z (one solve per entry).
std::vector<std::pair<double, double>> minimal_value_curve(
    const ScenarioTree& tree, const GeneratorSpec& gen,
    const TerminalCondition& xi, std::span<const double> z_grid,
    const SolverConfig& cfg);

}  // namespace bsde
