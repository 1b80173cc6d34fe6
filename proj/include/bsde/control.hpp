#pragma once

/// Constrained control triples: the controlled integrand
///   Z = z0 + \int Delta du + \int Gamma dW
/// synthesized on the tree with the shared left-endpoint convention for both
/// du- and dW-sums, together with the discrete L2 norms, the admissibility
/// ball check and the structural bound on ||Z||.

#include <cstddef>

#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"

namespace bsde {

struct ControlTriple {
  double z0 = 0.0;
  AdaptedProcess delta;     // read on non-leaf nodes
  AdaptedProcess gamma;     // read on non-leaf nodes
  AdaptedProcess z;         // synthesized state, all nodes
  AdaptedProcess int_z_dw;  // running stochastic integral, all nodes
};

/// Forward synthesis:
///   Z(root) = z0,  Z(child) = Z(n) + Delta(n) dt + Gamma(n) dW(edge),
///   I(root) = 0,   I(child) = I(n) + Z(n) dW(edge).
ControlTriple synthesize(const ScenarioTree& tree, double z0,
                         const AdaptedProcess& delta,
                         const AdaptedProcess& gamma);

/// Same sweep, recomputing z and int_z_dw in place from z0/delta/gamma
/// already stored in the triple. Reuses storage; hot path for iterative
/// solvers that mutate delta/gamma between evaluations.
void resynthesize(const ScenarioTree& tree, ControlTriple& ct);

/// Discrete L2 norm sqrt( E[ sum_{k<depth} X(t_k)^2 dt ] ) under `mu`
/// (reference measure by default).
double l2_norm(const ScenarioTree& tree, const AdaptedProcess& x);
double l2_norm(const ScenarioTree& tree, const AdaptedProcess& x,
               const GirsanovMeasure& mu);

struct ThetaReport {
  bool ok = false;
  double delta_norm = 0.0;
  double gamma_norm = 0.0;
  double radius = 0.0;
};

/// Membership in the closed admissibility ball: ||Delta||, ||Gamma|| <= M.
ThetaReport verify_theta_M(const ScenarioTree& tree, const ControlTriple& ct,
                           double radius);

struct ZBoundReport {
  double bound = 0.0;
  double actual = 0.0;
  bool ok = false;
};

/// Structural bound ||Z|| <= sqrt(T * 4 (|z0|^2 + ||Delta||^2 + ||Gamma||^2)).
ZBoundReport z_l2_bound(const ScenarioTree& tree, const ControlTriple& ct);

struct AdmissibleReport {
  bool ok = true;
  std::size_t violations = 0;      // nodes outside the generator domain
  std::size_t first_violation = 0;
  bool norms_finite = true;
};

/// Nodewise domain membership of (Z, Delta, Gamma) plus finite norms.
AdmissibleReport check_admissible(const ScenarioTree& tree,
                                  const GeneratorSpec& gen,
                                  const ControlTriple& ct);

/// Writes node_id,level,t,W,Z,delta,gamma,int_z_dw rows.
void dump_controls_csv(const ScenarioTree& tree, const ControlTriple& ct,
                       const std::string& path);

}  // namespace bsde
