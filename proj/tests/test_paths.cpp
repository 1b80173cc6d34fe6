// Monte Carlo path ensembles: shapes, reproducibility, moments.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "bsde/errors.hpp"
#include "bsde/lattice.hpp"
#include "bsde/parallel.hpp"
#include "bsde/paths.hpp"

using namespace bsde;

TEST_CASE("mc_paths: shapes and accumulated values") {
  const ScenarioTree tree = build_tree(1.0, 8);
  const PathEnsemble ens = mc_paths(tree.grid(), 3, 16, 42);
  CHECK(ens.dim == 3);
  CHECK(ens.n_paths == 16);
  CHECK(ens.increments.size() == 16u * 8u * 3u);

  // w_at accumulates exactly the increments in order
  for (std::size_t p = 0; p < ens.n_paths; p += 5) {
    for (int c = 0; c < ens.dim; ++c) {
      double acc = 0.0;
      CHECK(ens.w_at(p, 0, c) == 0.0);
      for (int k = 0; k < tree.depth(); ++k) {
        acc += ens.dw(p, k, c);
        CHECK(ens.w_at(p, k + 1, c) == doctest::Approx(acc).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("mc_paths: seeded reproducibility and stream separation") {
  const ScenarioTree tree = build_tree(0.5, 6);
  const PathEnsemble a = mc_paths(tree.grid(), 2, 64, 1234);
  const PathEnsemble b = mc_paths(tree.grid(), 2, 64, 1234);
  CHECK(a.increments == b.increments);  // bitwise

  const PathEnsemble c = mc_paths(tree.grid(), 2, 64, 1235);
  CHECK(a.increments != c.increments);

  // per-path counter streams: a smaller ensemble is a prefix of a larger one
  const PathEnsemble big = mc_paths(tree.grid(), 2, 128, 1234);
  const std::vector<double> head(big.increments.begin(),
                                 big.increments.begin() +
                                     static_cast<long>(a.increments.size()));
  CHECK(head == a.increments);
}

TEST_CASE("mc_paths: worker count does not change the draw") {
  const ScenarioTree tree = build_tree(1.0, 5);
  set_max_threads(1);
  const PathEnsemble serial = mc_paths(tree.grid(), 1, 200, 9);
  set_max_threads(4);
  const PathEnsemble wide = mc_paths(tree.grid(), 1, 200, 9);
  set_max_threads(1);
  CHECK(serial.increments == wide.increments);
}

TEST_CASE("increment_moments: near-zero mean and dt-variance") {
  const ScenarioTree tree = build_tree(1.0, 4);
  const PathEnsemble ens = mc_paths(tree.grid(), 2, 20000, 7);
  const MomentReport rep = increment_moments(ens);
  REQUIRE(rep.mean.size() == 2);
  REQUIRE(rep.covariance.size() == 4);
  CHECK(rep.within(4.0));
  CHECK(std::fabs(rep.mean[0]) < 4.0 * rep.standard_error);
  CHECK(std::fabs(rep.covariance[0] - tree.dt()) < 0.02);
  CHECK(std::fabs(rep.covariance[1]) < 0.02);  // off-diagonal ~ 0
}

TEST_CASE("mc_paths: argument guards") {
  const ScenarioTree tree = build_tree(1.0, 3);
  CHECK_THROWS_AS(mc_paths(tree.grid(), 0, 8, 1), SizeError);
  CHECK_THROWS_AS(mc_paths(tree.grid(), 1, 0, 1), SizeError);
}
