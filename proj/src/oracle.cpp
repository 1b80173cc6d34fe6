#include "bsde/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsde/errors.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

namespace {

std::vector<double> axis(double lo, double hi, int steps) {
  if (steps < 1) throw SizeError("grid axis needs at least one point");
  if (steps == 1) return {lo};
  if (!(lo < hi)) throw SizeError("grid axis needs lo < hi");
  std::vector<double> v(steps);
  const double h = (hi - lo) / (steps - 1);
  for (int i = 0; i < steps; ++i) v[i] = lo + i * h;
  return v;
}

struct BfContext {
  const ScenarioTree* tree;
  const GeneratorSpec* gen;
  const TerminalCondition* xi;
  std::vector<double> dv, gv;
};

// Exact grid minimum of the subtree value at (id, z). The controls of the
// two child subtrees are disjoint, so minimizing below the max child by
// child is the same as minimizing over their product; only the node's own
// pair is enumerated here.
double bf_rec(const BfContext& cx, std::size_t id, double z, double& evals) {
  const ScenarioTree& tree = *cx.tree;
  if (tree.is_leaf(id)) return (*cx.xi)[id - tree.leaf_begin()];
  const double t = tree.grid().t[tree.level_of(id)];
  const double dt = tree.dt();
  const double dwu = tree.edge_dw(0);
  const double dwd = tree.edge_dw(1);
  double best = std::numeric_limits<double>::infinity();
  for (double d : cx.dv) {
    for (double g : cx.gv) {
      evals += 1.0;
      const double gval = eval_generator(*cx.gen, t, 0.0, z, d, g);
      if (std::isinf(gval)) continue;
      const double drift = z + d * dt;
      const double vu = bf_rec(cx, tree.child(id, 0), drift + g * dwu, evals);
      const double vd = bf_rec(cx, tree.child(id, 1), drift + g * dwd, evals);
      const double cand = gval * dt + std::max(vu - z * dwu, vd - z * dwd);
      best = std::min(best, cand);
    }
  }
  return best;
}

}  // namespace

BruteForceResult brute_force_minimal(const ScenarioTree& tree,
                                     const GeneratorSpec& gen,
                                     const TerminalCondition& xi, double z0,
                                     const GridSpec& grid) {
  if (xi.size() != tree.leaf_count())
    throw SizeError("terminal condition size does not match leaf count");
  BfContext cx{&tree, &gen, &xi, axis(grid.delta_lo, grid.delta_hi,
                                      grid.delta_steps),
               axis(grid.gamma_lo, grid.gamma_hi, grid.gamma_steps)};
  const double pairs =
      static_cast<double>(cx.dv.size()) * static_cast<double>(cx.gv.size());
  double projected = 0.0, instances = 1.0;
  for (int k = 0; k < tree.depth(); ++k) {
    projected += instances * pairs;
    instances *= 2.0 * pairs;
  }
  if (!(projected <= grid.eval_cap))
    throw SizeError("brute force would need about " +
                    std::to_string(projected) +
                    " generator evaluations, over the cap of " +
                    std::to_string(grid.eval_cap));

  // Root level: one row per delta value, merged in fixed row order.
  const std::size_t rows = cx.dv.size();
  std::vector<double> row_best(rows), row_gamma(rows), row_evals(rows, 0.0);
  const double t0 = tree.grid().t[0];
  const double dt = tree.dt();
  const double dwu = tree.edge_dw(0);
  const double dwd = tree.edge_dw(1);
  parallel_for(rows, [&](std::size_t i) {
    const double d = cx.dv[i];
    double best = std::numeric_limits<double>::infinity();
    double best_g = cx.gv[0];
    double evals = 0.0;
    for (double g : cx.gv) {
      evals += 1.0;
      const double gval = eval_generator(gen, t0, 0.0, z0, d, g);
      if (std::isinf(gval)) continue;
      const double drift = z0 + d * dt;
      const double vu = bf_rec(cx, 1, drift + g * dwu, evals);
      const double vd = bf_rec(cx, 2, drift + g * dwd, evals);
      const double cand = gval * dt + std::max(vu - z0 * dwu, vd - z0 * dwd);
      if (cand < best) {
        best = cand;
        best_g = g;
      }
    }
    row_best[i] = best;
    row_gamma[i] = best_g;
    row_evals[i] = evals;
  });

  BruteForceResult res;
  res.value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows; ++i) {
    res.evals += row_evals[i];
    if (row_best[i] < res.value) {
      res.value = row_best[i];
      res.delta0 = cx.dv[i];
      res.gamma0 = row_gamma[i];
    }
  }
  if (std::isinf(res.value))
    throw KernelError("brute force found no feasible grid point");
  return res;
}

std::vector<double> banded_spd_solve(std::vector<double> band, int bw,
                                     std::vector<double> rhs) {
  const std::size_t n = rhs.size();
  const int w = bw + 1;
  if (band.size() != n * static_cast<std::size_t>(w))
    throw SizeError("band storage size mismatch");
  auto at = [&](std::size_t r, std::size_t c) -> double& {
    return band[r * w + (c + static_cast<std::size_t>(bw) - r)];
  };
  // In-place Cholesky A = L L^T within the band.
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j0 = r >= static_cast<std::size_t>(bw)
                               ? r - static_cast<std::size_t>(bw)
                               : 0;
    for (std::size_t j = j0; j <= r; ++j) {
      double s = at(r, j);
      const std::size_t k0 = std::max(
          j0, j >= static_cast<std::size_t>(bw) ? j - static_cast<std::size_t>(bw)
                                                : 0);
      for (std::size_t k = k0; k < j; ++k) s -= at(r, k) * at(j, k);
      if (j < r) {
        at(r, j) = s / at(j, j);
      } else {
        if (!(s > 0.0))
          throw KernelError("banded solve: matrix is not positive definite");
        at(r, r) = std::sqrt(s);
      }
    }
  }
  // Forward then backward substitution.
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j0 = r >= static_cast<std::size_t>(bw)
                               ? r - static_cast<std::size_t>(bw)
                               : 0;
    double s = rhs[r];
    for (std::size_t j = j0; j < r; ++j) s -= at(r, j) * rhs[j];
    rhs[r] = s / at(r, r);
  }
  for (std::size_t r = n; r-- > 0;) {
    const std::size_t j1 = std::min(n - 1, r + static_cast<std::size_t>(bw));
    double s = rhs[r];
    for (std::size_t j = r + 1; j <= j1; ++j) s -= at(j, r) * rhs[j];
    rhs[r] = s / at(r, r);
  }
  return rhs;
}

QpOracleResult qp_inner_oracle(const std::function<double(double)>& q,
                               double horizon, double z0, int n_fine) {
  if (!(horizon > 0.0)) throw SizeError("qp oracle: horizon must be positive");
  if (n_fine < 1) throw SizeError("qp oracle: need at least one cell");
  const std::size_t n = static_cast<std::size_t>(n_fine);
  const double h = horizon / n_fine;
  std::vector<double> qm(n);
  for (std::size_t i = 0; i < n; ++i) {
    qm[i] = q((static_cast<double>(i) + 0.5) * h);
    if (!std::isfinite(qm[i]))
      throw KernelError("qp oracle: kernel sample is not finite");
  }
  // Lagged suffix integrals R_j = h * sum_{i>j} q_i.
  std::vector<double> rhat(n, 0.0);
  for (std::size_t j = n - 1; j-- > 0;) rhat[j] = rhat[j + 1] + h * qm[j + 1];

  QpOracleResult res;
  std::vector<double> diag(n, 2.0 * h), b(n);
  for (std::size_t j = 0; j < n; ++j) b[j] = h * (rhat[j] + qm[j] * h * 0.5);
  res.argmin_delta = banded_spd_solve(diag, 0, b);
  for (std::size_t j = 0; j < n; ++j)
    b[j] = h * qm[j] * (rhat[j] + qm[j] * h * 0.5);
  res.argmin_gamma = banded_spd_solve(std::move(diag), 0, std::move(b));

  // Evaluate the literal discrete functionals at the computed minimizers.
  double x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double di = res.argmin_delta[i];
    const double xmid = x + di * h * 0.5;
    res.min_f1 += (di * di - qm[i] * xmid) * h;
    x += di * h;
  }
  x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = res.argmin_gamma[i];
    const double xmid = x + gi * qm[i] * h * 0.5;
    res.min_f2 += (gi * gi - qm[i] * xmid) * h;
    x += gi * qm[i] * h;
  }
  double qint = 0.0;
  for (std::size_t i = 0; i < n; ++i) qint += qm[i] * h;
  res.estar = z0 * qint - res.min_f1 - res.min_f2;
  return res;
}

}  // namespace bsde
