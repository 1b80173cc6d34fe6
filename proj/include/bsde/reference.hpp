#pragma once

/// Naive recursive serial implementations of the core tree kernels. They are
/// deliberately written in the most direct way possible, independent of the
/// level-sweep production kernels, and serve two purposes:
///  * reference results for the kernel-equivalence tests, and
///  * the serial baseline of the benchmark target.

#include <span>
#include <vector>

#include "bsde/control.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"

namespace bsde::reference {

/// Expectation of leaf values by direct root recursion.
double expectation(const ScenarioTree& tree, std::span<const double> leaf_x,
                   const GirsanovMeasure& mu);

/// Forward synthesis by recursion from the root.
ControlTriple synthesize(const ScenarioTree& tree, double z0,
                         const AdaptedProcess& delta,
                         const AdaptedProcess& gamma);

/// Minimal Y over processes satisfying the one-step inequalities for fixed
/// controls: Y(leaf) = xi, Y(n) = g dt + max_c (Y(c) - Z(n) dW(c)).
double evaluate_y(const ScenarioTree& tree, const GeneratorSpec& gen,
                  std::span<const double> xi, const ControlTriple& ct);

/// Inner objective F = E_Q[ sum g dt - int Z dW (T) ] by direct recursion.
double inner_objective(const ScenarioTree& tree, const GeneratorSpec& gen,
                       const GirsanovMeasure& mu, const ControlTriple& ct);

}  // namespace bsde::reference
