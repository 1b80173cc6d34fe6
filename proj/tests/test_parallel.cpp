// Worker-count invariance: every kernel must produce bit-identical results
// for any thread setting, and the parallel level sweeps must agree bitwise
// with the naive recursive reference implementations.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "bsde/control.hpp"
#include "bsde/dual.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"
#include "bsde/parallel.hpp"
#include "bsde/paths.hpp"
#include "bsde/primal.hpp"
#include "bsde/reference.hpp"

using namespace bsde;

namespace {

struct ThreadGuard {
  ~ThreadGuard() { set_max_threads(1); }
};

TerminalCondition abs_terminal(const ScenarioTree& tree) {
  TerminalCondition xi(tree.leaf_count());
  for (std::size_t j = 0; j < xi.size(); ++j)
    xi[j] = std::fabs(tree.w(tree.leaf_begin() + j));
  return xi;
}

std::vector<double> random_leaf(const ScenarioTree& tree, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> x(tree.leaf_count());
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST_CASE("thread setting plumbing") {
  ThreadGuard guard;
  set_max_threads(1);
  CHECK_FALSE(parallel_enabled());
  CHECK(max_threads() == 1);
  set_max_threads(4);
  CHECK(parallel_enabled());
  CHECK(max_threads() == 4);
  set_max_threads(0);  // library default
  CHECK(parallel_enabled());
}

TEST_CASE("parallel_for: disjoint writes, any order") {
  ThreadGuard guard;
  std::vector<double> out(1000, 0.0);
  set_max_threads(8);
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = static_cast<double>(i) * 0.5;
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == static_cast<double>(i) * 0.5);
}

TEST_CASE("expectation: worker count cannot change a bit") {
  ThreadGuard guard;
  const ScenarioTree tree = build_tree(1.0, 10);
  const std::vector<double> x = random_leaf(tree, 31);
  const GirsanovMeasure mu =
      girsanov_reweight(tree, std::vector<double>(10, 0.4));

  set_max_threads(1);
  const double serial = expectation(tree, x, mu);
  for (int k : {2, 3, 8}) {
    set_max_threads(k);
    CHECK(expectation(tree, x, mu) == serial);
  }
  set_max_threads(0);
  CHECK(expectation(tree, x, mu) == serial);

  // and the fixed-order reduction matches the recursive reference
  CHECK(serial == reference::expectation(tree, x, mu));
}

TEST_CASE("primal solve: byte-identical across thread settings") {
  ThreadGuard guard;
  const ScenarioTree tree = build_tree(1.0, 5);
  const GeneratorSpec gen = make_quadratic();
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;
  cfg.max_iters = 300;

  set_max_threads(1);
  const MinimalValueResult serial = minimal_value(tree, gen, xi, 0.0, cfg);
  set_max_threads(4);
  const MinimalValueResult wide = minimal_value(tree, gen, xi, 0.0, cfg);

  CHECK(serial.value == wide.value);
  CHECK(serial.iterations == wide.iterations);
  CHECK(serial.restart_values == wide.restart_values);
  CHECK(serial.y.v == wide.y.v);
  CHECK(serial.controls.delta.v == wide.controls.delta.v);
  CHECK(serial.controls.gamma.v == wide.controls.gamma.v);
  CHECK(serial.controls.z.v == wide.controls.z.v);
}

TEST_CASE("inner dual solve: byte-identical across thread settings") {
  ThreadGuard guard;
  const ScenarioTree tree = build_tree(1.0, 6);
  const GeneratorSpec gen = make_quadratic();
  const GirsanovMeasure mu =
      girsanov_reweight(tree, std::vector<double>(6, 0.5));

  set_max_threads(1);
  const InnerResult serial = inner_value_numeric(tree, gen, mu, 0.2);
  set_max_threads(8);
  const InnerResult wide = inner_value_numeric(tree, gen, mu, 0.2);

  CHECK(serial.value == wide.value);
  CHECK(serial.estar == wide.estar);
  CHECK(serial.iterations == wide.iterations);
  CHECK(serial.controls.delta.v == wide.controls.delta.v);
  CHECK(serial.controls.gamma.v == wide.controls.gamma.v);
}

TEST_CASE("girsanov reweight and synthesis: identical under threads") {
  ThreadGuard guard;
  const ScenarioTree tree = build_tree(1.0, 9);
  AdaptedProcess q = make_process(tree, ProcessRole::kernel);
  AdaptedProcess d = make_process(tree, ProcessRole::delta);
  AdaptedProcess g = make_process(tree, ProcessRole::gamma);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    q[id] = u(rng);
    d[id] = u(rng);
    g[id] = u(rng);
  }

  set_max_threads(1);
  const GirsanovMeasure mu1 = girsanov_reweight(tree, q);
  const ControlTriple ct1 = synthesize(tree, 0.3, d, g);
  set_max_threads(8);
  const GirsanovMeasure mu8 = girsanov_reweight(tree, q);
  const ControlTriple ct8 = synthesize(tree, 0.3, d, g);

  CHECK(mu1.p_up == mu8.p_up);
  CHECK(mu1.p_dn == mu8.p_dn);
  CHECK(mu1.density.v == mu8.density.v);
  CHECK(ct1.z.v == ct8.z.v);
  CHECK(ct1.int_z_dw.v == ct8.int_z_dw.v);
}

TEST_CASE("backward sweep: identical under threads, equal to reference") {
  ThreadGuard guard;
  const ScenarioTree tree = build_tree(1.0, 8);
  const GeneratorSpec gen = make_quadratic();
  const TerminalCondition xi = abs_terminal(tree);
  AdaptedProcess d = make_process(tree, ProcessRole::delta);
  AdaptedProcess g = make_process(tree, ProcessRole::gamma);
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    d[id] = u(rng);
    g[id] = u(rng);
  }
  const ControlTriple ct = synthesize(tree, 0.1, d, g);

  set_max_threads(1);
  const double serial = evaluate_Y_given_controls(tree, gen, xi, ct);
  set_max_threads(6);
  const double wide = evaluate_Y_given_controls(tree, gen, xi, ct);
  CHECK(serial == wide);
  CHECK(serial == reference::evaluate_y(tree, gen, xi, ct));
}
