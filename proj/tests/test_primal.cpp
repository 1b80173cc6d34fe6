// Backward elimination, supersolution verification and the minimal-value
// solver. The frozen depth-two anchor sqrt(2) - 1/8 was derived by hand and
// confirmed by the independent brute-force oracle.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "bsde/control.hpp"
#include "bsde/errors.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"
#include "bsde/oracle.hpp"
#include "bsde/primal.hpp"
#include "bsde/reference.hpp"

using namespace bsde;

namespace {

TerminalCondition abs_terminal(const ScenarioTree& tree) {
  TerminalCondition xi(tree.leaf_count());
  for (std::size_t j = 0; j < xi.size(); ++j)
    xi[j] = std::fabs(tree.w(tree.leaf_begin() + j));
  return xi;
}

TerminalCondition linear_terminal(const ScenarioTree& tree) {
  TerminalCondition xi(tree.leaf_count());
  for (std::size_t j = 0; j < xi.size(); ++j)
    xi[j] = tree.w(tree.leaf_begin() + j);
  return xi;
}

ControlTriple random_controls(const ScenarioTree& tree, double z0,
                              std::uint64_t seed, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  AdaptedProcess d = make_process(tree, ProcessRole::delta);
  AdaptedProcess g = make_process(tree, ProcessRole::gamma);
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    d[id] = u(rng);
    g[id] = u(rng);
  }
  return synthesize(tree, z0, d, g);
}

}  // namespace

TEST_CASE("evaluate: bitwise equal to the recursive reference twin") {
  const ScenarioTree tree = build_tree(1.0, 6);
  const TerminalCondition xi = abs_terminal(tree);
  const GeneratorSpec quad = make_quadratic();
  const GeneratorSpec band = make_gamma_band(make_quadratic_delta(), 0.5);
  for (std::uint64_t seed : {4ULL, 5ULL, 6ULL}) {
    const ControlTriple ct = random_controls(tree, 0.2, seed, 0.45);
    CHECK(evaluate_Y_given_controls(tree, quad, xi, ct) ==
          reference::evaluate_y(tree, quad, xi, ct));
    CHECK(evaluate_Y_given_controls(tree, band, xi, ct) ==
          reference::evaluate_y(tree, band, xi, ct));
  }
}

TEST_CASE("evaluate: constants and exact replication") {
  const ScenarioTree tree = build_tree(1.0, 5);
  const GeneratorSpec gen = make_quadratic();
  AdaptedProcess zero_d = make_process(tree, ProcessRole::delta);
  AdaptedProcess zero_g = make_process(tree, ProcessRole::gamma);

  // zero controls, constant terminal: the value is the constant, exactly
  const ControlTriple still = synthesize(tree, 0.0, zero_d, zero_g);
  const TerminalCondition threes(tree.leaf_count(), 3.0);
  AdaptedProcess y;
  CHECK(evaluate_Y_given_controls(tree, gen, threes, still, &y) == 3.0);
  for (std::size_t id = 0; id < tree.node_count(); ++id) CHECK(y[id] == 3.0);

  // Z = 1 replicates the linear terminal W_T from zero initial capital.
  // On a dyadic grid (sqrt(dt) = 0.5) every cancellation is exact, so the
  // value is bit-for-bit zero.
  const ScenarioTree dyadic = build_tree(1.0, 4);
  const AdaptedProcess dz = make_process(dyadic, ProcessRole::delta);
  const AdaptedProcess dg = make_process(dyadic, ProcessRole::gamma);
  const ControlTriple unit = synthesize(dyadic, 1.0, dz, dg);
  CHECK(evaluate_Y_given_controls(dyadic, gen, linear_terminal(dyadic), unit) ==
        0.0);
}

TEST_CASE("evaluate: off-domain controls propagate the infinity marker") {
  const ScenarioTree tree = build_tree(1.0, 3);
  const GeneratorSpec band = make_gamma_band(make_quadratic_delta(), 0.25);
  ControlTriple ct = random_controls(tree, 0.0, 8, 0.1);
  ct.gamma[4] = 2.0;  // off the band at one interior node
  resynthesize(tree, ct);
  CHECK(std::isinf(
      evaluate_Y_given_controls(tree, band, abs_terminal(tree), ct)));
}

TEST_CASE("verify_supersolution: accepts witnesses, locates defects") {
  const ScenarioTree tree = build_tree(1.0, 4);
  const GeneratorSpec gen = make_quadratic();
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;
  const MinimalValueResult res = minimal_value(tree, gen, xi, 0.0, cfg);
  REQUIRE(res.converged);

  const VerifyReport ok = verify_supersolution(tree, gen, xi, res.y,
                                               res.controls, cfg.tol_feas);
  CHECK(ok.ok);
  CHECK_FALSE(ok.infeasible);
  CHECK(ok.worst_slack >= -cfg.tol_feas);
  CHECK(ok.worst_terminal >= -cfg.tol_feas);

  // lowering one leaf below the terminal condition must be caught
  AdaptedProcess broken = res.y;
  broken[tree.leaf_begin() + 3] = xi[3] - 1e-3;
  const VerifyReport bad =
      verify_supersolution(tree, gen, xi, broken, res.controls, cfg.tol_feas);
  CHECK_FALSE(bad.ok);
  CHECK(bad.worst_terminal <= -1e-3 + 1e-12);

  // off-domain controls flag infeasibility
  const GeneratorSpec band = make_gamma_band(make_quadratic_delta(), 1e-4);
  const VerifyReport inf_rep =
      verify_supersolution(tree, band, xi, res.y, res.controls, cfg.tol_feas);
  CHECK(inf_rep.infeasible);
  CHECK_FALSE(inf_rep.ok);
}

TEST_CASE("minimal_value: frozen depth-two anchor sqrt(2) - 1/8") {
  const ScenarioTree tree = build_tree(1.0, 2);
  const GeneratorSpec gen = make_quadratic();
  SolverConfig cfg;
  const MinimalValueResult res =
      minimal_value(tree, gen, abs_terminal(tree), 0.0, cfg);
  CHECK(res.converged);
  CHECK(std::fabs(res.value - (std::sqrt(2.0) - 0.125)) <= 1e-6);
  CHECK(res.restart_values.size() == 3);
  CHECK(res.restart_spread <= cfg.effective_tol(res.value));
  CHECK(res.iterations > 0);
  CHECK(res.controls.z0 == 0.0);
  CHECK(res.y[0] == res.value);

  // the witness is itself a verified supersolution
  CHECK(verify_supersolution(tree, gen, abs_terminal(tree), res.y,
                             res.controls, cfg.tol_feas)
            .ok);
}

TEST_CASE("minimal_value: agrees with the brute-force oracle on a band") {
  const ScenarioTree tree = build_tree(1.0, 2);
  const GeneratorSpec band = make_gamma_band(make_quadratic(), 0.25);
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;
  const MinimalValueResult res = minimal_value(tree, band, xi, 0.0, cfg);
  REQUIRE(res.converged);

  GridSpec grid;
  grid.eval_cap = 2e8;
  const BruteForceResult bf = brute_force_minimal(tree, band, xi, 0.0, grid);
  // continuum minimum can only undercut the grid minimum
  CHECK(res.value <= bf.value + 1e-9);
  CHECK(bf.value - res.value <= 5e-3);

  // every solver diffusion honours the band
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id)
    CHECK(std::fabs(res.controls.gamma[id]) <= 0.25 + 1e-12);
}

TEST_CASE("minimal_value: operator properties on a depth-four instance") {
  const ScenarioTree tree = build_tree(1.0, 4);
  const GeneratorSpec gen = make_quadratic();
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;
  const MinimalValueResult base = minimal_value(tree, gen, xi, 0.0, cfg);
  REQUIRE(base.converged);
  const double tol2 = 2.0 * cfg.effective_tol(base.value);

  // cash additivity
  TerminalCondition shifted(xi);
  for (auto& v : shifted) v += 0.35;
  const MinimalValueResult up = minimal_value(tree, gen, shifted, 0.0, cfg);
  CHECK(std::fabs(up.value - base.value - 0.35) <= tol2);

  // monotonicity
  TerminalCondition bigger(xi);
  for (std::size_t j = 0; j < bigger.size(); ++j)
    bigger[j] += (j % 3 == 0) ? 0.2 : 0.0;
  const MinimalValueResult mono = minimal_value(tree, gen, bigger, 0.0, cfg);
  CHECK(mono.value >= base.value - tol2);

  // supermartingale under the reference measure, floor above E[xi | F]
  const GirsanovMeasure p = reference_measure(tree);
  CHECK(is_supermartingale(tree, base.y, p, 1e-9).ok);
  std::vector<double> cond(xi);
  for (int k = tree.depth(); k > 0; --k) {
    cond = conditional_expectation(tree, k, cond, p);
    const std::size_t begin = tree.level_begin(k - 1);
    for (std::size_t j = 0; j < cond.size(); ++j)
      CHECK(base.y[begin + j] >= cond[j] - 1e-9);
  }
}

TEST_CASE("decompose: compensator nondecreasing; flat for replication") {
  const ScenarioTree tree = build_tree(1.0, 4);
  const GeneratorSpec gen = make_quadratic();
  SolverConfig cfg;

  const TerminalCondition xi = abs_terminal(tree);
  const MinimalValueResult res = minimal_value(tree, gen, xi, 0.0, cfg);
  const auto [a, rep] = decompose(tree, gen, res.y, res.controls, 1e-9);
  CHECK(rep.increasing_ok);
  CHECK(rep.worst_increment >= -1e-9);
  CHECK(a[0] == 0.0);

  // replication witness: zero generator cost, zero compensator, predictable
  AdaptedProcess zero_d = make_process(tree, ProcessRole::delta);
  AdaptedProcess zero_g = make_process(tree, ProcessRole::gamma);
  const ControlTriple unit = synthesize(tree, 1.0, zero_d, zero_g);
  const TerminalCondition lin = linear_terminal(tree);
  AdaptedProcess y;
  evaluate_Y_given_controls(tree, gen, lin, unit, &y);
  const auto [a0, rep0] = decompose(tree, gen, y, unit, 1e-9);
  CHECK(rep0.increasing_ok);
  CHECK(rep0.predictable);
  for (std::size_t id = 0; id < tree.node_count(); ++id)
    CHECK(std::fabs(a0[id]) <= 1e-12);
}

TEST_CASE("minimal_value_curve: symmetry, convexity, singleton") {
  const ScenarioTree tree = build_tree(1.0, 3);
  const GeneratorSpec gen = make_quadratic();
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;

  const std::vector<double> grid{-0.5, 0.0, 0.5};
  const auto curve = minimal_value_curve(tree, gen, xi, grid, cfg);
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].first == -0.5);
  CHECK(curve[2].first == 0.5);

  // symmetric terminal, symmetric tree: value even in the initial state
  CHECK(std::fabs(curve[0].second - curve[2].second) <= 2e-3);
  // midpoint convexity along the curve
  CHECK(curve[1].second <= 0.5 * (curve[0].second + curve[2].second) +
                               2.0 * cfg.effective_tol(curve[1].second));

  const std::vector<double> one{0.25};
  const auto single = minimal_value_curve(tree, gen, xi, one, cfg);
  REQUIRE(single.size() == 1);
  const MinimalValueResult direct = minimal_value(tree, gen, xi, 0.25, cfg);
  CHECK(single[0].second == doctest::Approx(direct.value).epsilon(1e-12));
}

TEST_CASE("minimal_value: guards") {
  const ScenarioTree tree = build_tree(1.0, 3);
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;

  GeneratorSpec ydep = make_quadratic();
  ydep.y_independent = false;
  CHECK_THROWS_AS(minimal_value(tree, ydep, xi, 0.0, cfg), UnsupportedError);
  ControlTriple ct = random_controls(tree, 0.0, 3);
  CHECK_THROWS_AS(evaluate_Y_given_controls(tree, ydep, xi, ct),
                  UnsupportedError);

  GeneratorSpec unflagged = make_quadratic();
  unflagged.flag_con = false;
  CHECK_THROWS_AS(minimal_value(tree, unflagged, xi, 0.0, cfg), KernelError);

  TerminalCondition bad(tree.leaf_count() - 1, 0.0);
  CHECK_THROWS_AS(minimal_value(tree, make_quadratic(), bad, 0.0, cfg),
                  SizeError);

  // initial state outside the declared z-box: no finite restart exists
  const GeneratorSpec box = make_shortsell_box(make_quadratic(), -0.5, 0.5);
  CHECK_THROWS_AS(minimal_value(tree, box, xi, 3.0, cfg), KernelError);
}

TEST_CASE("minimal_value: z-box constraint is respected when feasible") {
  const ScenarioTree tree = build_tree(1.0, 3);
  const GeneratorSpec box = make_shortsell_box(make_quadratic(), -0.6, 0.6);
  const TerminalCondition xi = abs_terminal(tree);
  SolverConfig cfg;
  const MinimalValueResult res = minimal_value(tree, box, xi, 0.0, cfg);
  CHECK(res.converged);
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    CHECK(res.controls.z[id] >= -0.6 - 1e-12);
    CHECK(res.controls.z[id] <= 0.6 + 1e-12);
  }
  // constraining the control can only raise the value
  const MinimalValueResult free_res =
      minimal_value(tree, make_quadratic(), xi, 0.0, cfg);
  CHECK(res.value >= free_res.value - 1e-6);
}
