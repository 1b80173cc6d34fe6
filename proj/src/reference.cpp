#include "bsde/reference.hpp"

#include <algorithm>
#include <cmath>

#include "bsde/errors.hpp"

namespace bsde::reference {

namespace {

double expect_rec(const ScenarioTree& tree, std::span<const double> leaf_x,
                  const GirsanovMeasure& mu, std::size_t id) {
  if (tree.is_leaf(id)) return leaf_x[id - tree.leaf_begin()];
  return mu.p_up[id] * expect_rec(tree, leaf_x, mu, tree.child(id, 0)) +
         mu.p_dn[id] * expect_rec(tree, leaf_x, mu, tree.child(id, 1));
}

}  // namespace

double expectation(const ScenarioTree& tree, std::span<const double> leaf_x,
                   const GirsanovMeasure& mu) {
  if (leaf_x.size() != tree.leaf_count())
    throw SizeError("reference::expectation: size mismatch");
  return expect_rec(tree, leaf_x, mu, 0);
}

namespace {

void synth_rec(const ScenarioTree& tree, ControlTriple& ct, std::size_t id) {
  if (tree.is_leaf(id)) return;
  const double dt = tree.dt();
  const double zi = ct.z[id];
  for (int c = 0; c < 2; ++c) {
    const std::size_t ch = tree.child(id, c);
    const double dw = tree.edge_dw(c);
    ct.z.v[ch] = zi + ct.delta[id] * dt + ct.gamma[id] * dw;
    ct.int_z_dw.v[ch] = ct.int_z_dw[id] + zi * dw;
    synth_rec(tree, ct, ch);
  }
}

}  // namespace

ControlTriple synthesize(const ScenarioTree& tree, double z0,
                         const AdaptedProcess& delta,
                         const AdaptedProcess& gamma) {
  ControlTriple ct;
  ct.z0 = z0;
  ct.delta = delta;
  ct.gamma = gamma;
  ct.z = make_process(tree, ProcessRole::control, 0.0);
  ct.int_z_dw = make_process(tree, ProcessRole::value, 0.0);
  ct.z[0] = z0;
  synth_rec(tree, ct, 0);
  return ct;
}

namespace {

double eval_y_rec(const ScenarioTree& tree, const GeneratorSpec& gen,
                  std::span<const double> xi, const ControlTriple& ct,
                  std::size_t id) {
  if (tree.is_leaf(id)) return xi[id - tree.leaf_begin()];
  const int k = tree.level_of(id);
  const double g = gen.eval(tree.grid().t[k], 0.0, ct.z[id], ct.delta[id],
                            ct.gamma[id]);
  if (!std::isfinite(g)) return kPlusInfinity;
  const double up = eval_y_rec(tree, gen, xi, ct, tree.child(id, 0)) -
                    ct.z[id] * tree.edge_dw(0);
  const double dn = eval_y_rec(tree, gen, xi, ct, tree.child(id, 1)) -
                    ct.z[id] * tree.edge_dw(1);
  return g * tree.dt() + std::max(up, dn);
}

double inner_rec(const ScenarioTree& tree, const GeneratorSpec& gen,
                 const GirsanovMeasure& mu, const ControlTriple& ct,
                 std::size_t id) {
  if (tree.is_leaf(id)) return 0.0;
  const int k = tree.level_of(id);
  const double g = gen.eval(tree.grid().t[k], 0.0, ct.z[id], ct.delta[id],
                            ct.gamma[id]);
  if (!std::isfinite(g)) return kPlusInfinity;
  double acc = g * tree.dt();
  for (int c = 0; c < 2; ++c) {
    const double dw = tree.edge_dw(c);
    acc += mu.p(id, c) *
           (inner_rec(tree, gen, mu, ct, tree.child(id, c)) - ct.z[id] * dw);
  }
  return acc;
}

}  // namespace

double evaluate_y(const ScenarioTree& tree, const GeneratorSpec& gen,
                  std::span<const double> xi, const ControlTriple& ct) {
  if (xi.size() != tree.leaf_count())
    throw SizeError("reference::evaluate_y: terminal size mismatch");
  return eval_y_rec(tree, gen, xi, ct, 0);
}

double inner_objective(const ScenarioTree& tree, const GeneratorSpec& gen,
                       const GirsanovMeasure& mu, const ControlTriple& ct) {
  return inner_rec(tree, gen, mu, ct, 0);
}

}  // namespace bsde::reference
