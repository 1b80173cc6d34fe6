#pragma once

/// Convex-duality machinery: the conjugate penalty E*0(Q) of a reweighted
/// measure by inner convex minimization (or the quadratic closed form), the
/// resulting lower bounds, an outer ascent over deterministic kernels, the
/// forward solution reconstruction and the divergence probe for candidate
/// densities that are not equivalent martingale reweightings.
///
/// Inner problem: F(Delta, Gamma) = E_Q[ sum_k g dt - int Z dW (T) ] is
/// jointly convex; E*0(Q) = -inf F, and for every admissible Q
///   bound = E_Q[xi] - E*0(Q) <= minimal primal value   (weak duality).
/// Approximate inner minimization understates inf F and therefore
/// *overstates* the bound, so validity-sensitive callers use the numeric
/// minimizer (exact for the quadratic generator by construction), never the
/// continuous-time closed form.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsde/control.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"
#include "bsde/primal.hpp"

namespace bsde {

/// Inner objective for fixed controls: backward weighted sweep
/// phi(n) = g dt + sum_c p(n,c) (phi(c) - Z(n) dW(c)), value = phi(root).
double inner_objective(const ScenarioTree& tree, const GeneratorSpec& gen,
                       const GirsanovMeasure& mu, const ControlTriple& ct);

struct InnerConfig {
  int max_iters = 400;
  double step0 = 1.0;  // scale of the diagonally preconditioned step
  double step_decay = 0.5;
  double tol = 1e-10;  // relative improvement stop + certificate scale
  int restarts = 2;    // restart 0 starts from zero controls
  double random_radius = 1.0;
  std::uint64_t seed = 0xd0a1;
};

struct InnerResult {
  double value = 0.0;  // min F
  double estar = 0.0;  // -min F
  int iterations = 0;  // total across restarts
  bool converged = false;
  double restart_spread = 0.0;   // value spread across restarts
  double nodewise_spread = 0.0;  // max |optimizer difference| across restarts
  ControlTriple controls;        // best optimizer
  std::vector<double> restart_values;
};

/// Minimizes F by diagonally preconditioned projected subgradient descent
/// (preconditioner 1/(2 w(n) dt) with w the Q node probability, which makes
/// the very first step from any start exact for the quadratic generator).
InnerResult inner_value_numeric(const ScenarioTree& tree,
                                const GeneratorSpec& gen,
                                const GirsanovMeasure& mu, double z0,
                                const InnerConfig& cfg = {});

/// Stationary inner optimizer and exact minima for a deterministic
/// (per-level) kernel and the plain quadratic generator. With the lagged
/// suffix sums Rhat_k = dt sum_{j>k} q_j:
///   Delta*_k = Rhat_k / 2,  Gamma*_k = q_k Rhat_k / 2,
///   min_f1 = -1/4 sum dt Rhat^2,  min_f2 = -1/4 sum dt (q Rhat)^2,
///   estar  = z0 sum q dt - min_f1 - min_f2         (tree-exact), and the
/// *_ct twins integrate the piecewise-constant continuum formulas exactly.
struct ElSolution {
  std::vector<double> delta_levels;
  std::vector<double> gamma_levels;
  double min_f1 = 0.0, min_f2 = 0.0, estar = 0.0;           // tree-exact
  double min_f1_ct = 0.0, min_f2_ct = 0.0, estar_ct = 0.0;  // continuum
};
ElSolution el_optimizer(const ScenarioTree& tree,
                        std::span<const double> q_levels, double z0);

/// Continuous-time penalty for the quadratic generator under a
/// deterministic kernel, by trapezoidal quadrature of
///   1/4 R(t)^2 (1 + q(t)^2) on the tree grid, plus z0 int q dt,
/// with R(t_k) = dt sum_{j>=k} q_j. Requires gen.exact_quadratic.
double inner_value_closed_form(const ScenarioTree& tree,
                               const GeneratorSpec& gen,
                               std::span<const double> q_levels, double z0);

enum class DualMethod { numeric, closed_form };

struct DualReport {
  std::string kernel;  // human-readable kernel description
  double estar = 0.0;
  double bound = 0.0;
  std::optional<double> gap;  // primal - bound when a primal value is given
  std::string method;         // "numeric" | "closed_form"
  int iterations = 0;
  double tolerance = 0.0;
  bool converged = true;
};

/// bound = E_Q[xi] - E*0(Q). The closed-form method additionally requires an
/// exactly quadratic generator and a deterministic kernel.
DualReport dual_bound(const ScenarioTree& tree, const GeneratorSpec& gen,
                      const TerminalCondition& xi, double z0,
                      const GirsanovMeasure& mu, DualMethod method,
                      const InnerConfig& cfg = {},
                      std::optional<double> primal = std::nullopt);

struct AscentStep {
  int sweep = 0;
  int coordinate = 0;
  double bound = 0.0;
};

struct OuterResult {
  std::vector<double> q_levels;  // best kernel found (per level)
  DualReport report;             // bound at the best kernel
  std::vector<AscentStep> log;   // accepted improvements, in order
};

/// Outer coordinate ascent over piecewise-constant deterministic kernels
/// (pieces segments of the level range, values in [-q_max, q_max] further
/// clamped to admissibility). Golden-section line search per coordinate with
/// improve-only acceptance, so the logged bound sequence is nondecreasing.
OuterResult maximize_over_q(const ScenarioTree& tree, const GeneratorSpec& gen,
                            const TerminalCondition& xi, double z0, int pieces,
                            double q_max, int outer_sweeps,
                            const InnerConfig& cfg = {},
                            double line_tol = 1e-4);

/// Nodewise variant (one kernel value per non-leaf node). Exponentially many
/// coordinates: refused above depth 6.
OuterResult maximize_over_q_nodewise(const ScenarioTree& tree,
                                     const GeneratorSpec& gen,
                                     const TerminalCondition& xi, double z0,
                                     double q_max, int outer_sweeps,
                                     const InnerConfig& cfg = {},
                                     double line_tol = 1e-4);

struct ReconstructReport {
  AdaptedProcess y;
  double terminal_defect = 0.0;  // max_leaf |Y(leaf) - xi(leaf)|
};

/// Forward reconstruction Y(child) = Y(n) - g dt + Z(n) dW(c) from the given
/// root value along fixed controls. When the duality gap vanishes the
/// terminal defect vanishes with it (up to solver tolerance).
ReconstructReport reconstruct_solution(const ScenarioTree& tree,
                                       const GeneratorSpec& gen,
                                       const TerminalCondition& xi,
                                       double root_value,
                                       const ControlTriple& ct);

struct ConjugateProbe {
  enum class Mode { none, constants, negative_part };
  Mode mode = Mode::none;
  /// rows of (n, pairing E[v xi_n], entry = pairing - supersolution value).
  std::vector<std::array<double, 3>> rows;
  double growth = 0.0;  // last entry - first entry
  bool divergent = false;
};

/// Divergence probe for a candidate terminal density v (leaf values).
/// If E[v] != 1, the constants xi_n = n give entries n (E[v] - 1); if v has
/// a negative part, xi_n = -n 1{v<0} gives entries >= n E[v^-]. Either way
/// the conjugate penalty of v is +infinity, witnessed by linear growth.
ConjugateProbe probe_conjugate(const ScenarioTree& tree,
                               std::span<const double> v_leaf, int n_max);

}  // namespace bsde
