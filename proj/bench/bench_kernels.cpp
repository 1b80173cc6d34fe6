// Level-sweep production kernels vs the naive recursive serial baselines,
// at one and several worker threads, on a deep tree. Run via the
// bench_kernels target (built only when Google Benchmark is available).
#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "bsde/control.hpp"
#include "bsde/dual.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"
#include "bsde/parallel.hpp"
#include "bsde/primal.hpp"
#include "bsde/reference.hpp"

namespace {

constexpr int kDepth = 14;  // 32767 nodes

struct Fixture {
  bsde::ScenarioTree tree = bsde::build_tree(1.0, kDepth);
  bsde::GeneratorSpec gen = bsde::make_quadratic();
  bsde::GirsanovMeasure mu;
  bsde::AdaptedProcess delta;
  bsde::AdaptedProcess gamma;
  bsde::ControlTriple ct;
  std::vector<double> xi;

  Fixture() {
    std::vector<double> q(kDepth, 0.4);
    mu = bsde::girsanov_reweight(tree, q);
    delta = bsde::make_process(tree, bsde::ProcessRole::delta);
    gamma = bsde::make_process(tree, bsde::ProcessRole::gamma);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (std::size_t n = 0; n < tree.nonleaf_count(); ++n) {
      delta[n] = u(rng);
      gamma[n] = u(rng);
    }
    ct = bsde::synthesize(tree, 0.1, delta, gamma);
    xi.resize(tree.leaf_count());
    for (std::size_t j = 0; j < xi.size(); ++j)
      xi[j] = std::fabs(tree.w(tree.leaf_begin() + j));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void configure_threads(int k) { bsde::set_max_threads(k); }

void bm_expectation_reference(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(bsde::reference::expectation(f.tree, f.xi, f.mu));
}

void bm_expectation_sweep(benchmark::State& state) {
  const Fixture& f = fixture();
  configure_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(bsde::expectation(f.tree, f.xi, f.mu));
  configure_threads(1);
}

void bm_synthesize_reference(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        bsde::reference::synthesize(f.tree, 0.1, f.delta, f.gamma));
}

void bm_synthesize_sweep(benchmark::State& state) {
  const Fixture& f = fixture();
  configure_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(bsde::synthesize(f.tree, 0.1, f.delta, f.gamma));
  configure_threads(1);
}

void bm_backward_reference(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        bsde::reference::evaluate_y(f.tree, f.gen, f.xi, f.ct));
}

void bm_backward_sweep(benchmark::State& state) {
  const Fixture& f = fixture();
  configure_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        bsde::evaluate_Y_given_controls(f.tree, f.gen, f.xi, f.ct));
  configure_threads(1);
}

void bm_inner_objective_reference(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        bsde::reference::inner_objective(f.tree, f.gen, f.mu, f.ct));
}

void bm_inner_objective_sweep(benchmark::State& state) {
  const Fixture& f = fixture();
  configure_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(bsde::inner_objective(f.tree, f.gen, f.mu, f.ct));
  configure_threads(1);
}

BENCHMARK(bm_expectation_reference);
BENCHMARK(bm_expectation_sweep)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_synthesize_reference);
BENCHMARK(bm_synthesize_sweep)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_backward_reference);
BENCHMARK(bm_backward_sweep)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_inner_objective_reference);
BENCHMARK(bm_inner_objective_sweep)->Arg(1)->Arg(2)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
