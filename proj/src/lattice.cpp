#include "bsde/lattice.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>

#include "bsde/errors.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

int ScenarioTree::level_of(std::size_t id) const {
  // id + 1 in [2^k, 2^(k+1)) for level k.
  return std::bit_width(id + 1) - 1;
}

ScenarioTree build_tree(double horizon, int steps, int depth_cap) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw SizeError("build_tree: horizon must be positive and finite");
  if (steps < 1) throw SizeError("build_tree: steps must be >= 1");
  if (steps > depth_cap)
    throw SizeError("build_tree: steps=" + std::to_string(steps) +
                    " exceeds depth cap " + std::to_string(depth_cap) +
                    "; node storage grows like 2^steps (2^" +
                    std::to_string(steps) + " = " +
                    std::to_string(std::size_t{1} << steps) + " leaves)");

  ScenarioTree tree;
  tree.grid_.horizon = horizon;
  tree.grid_.steps = steps;
  tree.grid_.dt = horizon / steps;
  tree.grid_.sqrt_dt = std::sqrt(tree.grid_.dt);
  tree.grid_.t.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) tree.grid_.t[k] = k * tree.grid_.dt;

  const std::size_t n_nodes = (std::size_t{2} << steps) - 1;
  tree.w_.assign(n_nodes, 0.0);
  for (int k = 0; k < steps; ++k) {
    const std::size_t begin = tree.level_begin(k);
    const std::size_t count = tree.level_size(k);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t id = begin + j;
      tree.w_[tree.child(id, 0)] = tree.w_[id] + tree.grid_.sqrt_dt;
      tree.w_[tree.child(id, 1)] = tree.w_[id] - tree.grid_.sqrt_dt;
    }
  }
  return tree;
}

void ScenarioTree::dump_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("dump_csv: cannot open " + path);
  std::fprintf(f, "node_id,level,parent,dW,prob\n");
  for (std::size_t id = 0; id < node_count(); ++id) {
    const int k = level_of(id);
    const double dw = id == 0 ? 0.0 : (id % 2 == 1 ? sqrt_dt() : -sqrt_dt());
    const double prob = std::ldexp(1.0, -k);  // reference path probability
    if (id == 0) {
      std::fprintf(f, "0,0,-1,%.17g,%.17g\n", dw, prob);
    } else {
      std::fprintf(f, "%zu,%d,%zu,%.17g,%.17g\n", id, k, parent(id), dw, prob);
    }
  }
  std::fclose(f);
}

AdaptedProcess make_process(const ScenarioTree& tree, ProcessRole role,
                            double init) {
  AdaptedProcess p;
  p.role = role;
  p.v.assign(tree.node_count(), init);
  return p;
}

GirsanovMeasure reference_measure(const ScenarioTree& tree) {
  GirsanovMeasure mu;
  mu.p_up.assign(tree.node_count(), 0.5);
  mu.p_dn.assign(tree.node_count(), 0.5);
  mu.density = make_process(tree, ProcessRole::density, 1.0);
  mu.kernel = make_process(tree, ProcessRole::kernel, 0.0);
  mu.deterministic = true;
  mu.kernel_levels.assign(tree.depth(), 0.0);
  return mu;
}

namespace {

GirsanovMeasure reweight_impl(const ScenarioTree& tree,
                              const AdaptedProcess& q, bool deterministic,
                              std::span<const double> q_levels) {
  const double s = tree.sqrt_dt();
  GirsanovMeasure mu;
  mu.p_up.assign(tree.node_count(), 0.5);
  mu.p_dn.assign(tree.node_count(), 0.5);
  mu.density = make_process(tree, ProcessRole::density, 0.0);
  mu.kernel = q;
  mu.kernel.role = ProcessRole::kernel;
  mu.deterministic = deterministic;
  mu.kernel_levels.assign(q_levels.begin(), q_levels.end());

  mu.density[0] = 1.0;
  for (int k = 0; k < tree.depth(); ++k) {
    const std::size_t begin = tree.level_begin(k);
    const std::size_t count = tree.level_size(k);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t id = begin + j;
      const double qs = q[id] * s;
      if (!(std::fabs(qs) < 1.0))
        throw KernelError("girsanov_reweight: |q|*sqrt(dt) = " +
                          std::to_string(std::fabs(qs)) +
                          " >= 1 at node " + std::to_string(id));
      // The >= 1/2 probability is computed first; its sibling is the exact
      // complement (Sterbenz), so p_up + p_dn == 1 holds bit-exactly.
      double pu, pd;
      if (qs >= 0.0) {
        pu = (1.0 + qs) / 2.0;
        pd = 1.0 - pu;
      } else {
        pd = (1.0 - qs) / 2.0;
        pu = 1.0 - pd;
      }
      mu.p_up[id] = pu;
      mu.p_dn[id] = pd;
      // Density update: the higher-probability child is the rounded product,
      // the sibling the exact remainder, so v_up + v_dn == 2 v bit-exactly
      // and the density stays a one-step martingale in floating point.
      const double v = mu.density[id];
      const double two_v = 2.0 * v;
      double v_hi = v * (2.0 * (qs >= 0.0 ? pu : pd));
      double v_lo = two_v - v_hi;
      if (!(v_lo > 0.0) || !(v_hi > 0.0))
        throw KernelError("girsanov_reweight: density underflow at node " +
                          std::to_string(id) +
                          " (kernel too close to the admissibility bound)");
      mu.density[tree.child(id, 0)] = qs >= 0.0 ? v_hi : v_lo;
      mu.density[tree.child(id, 1)] = qs >= 0.0 ? v_lo : v_hi;
    }
  }
  return mu;
}

}  // namespace

GirsanovMeasure girsanov_reweight(const ScenarioTree& tree,
                                  const AdaptedProcess& q) {
  if (q.size() != tree.node_count())
    throw SizeError("girsanov_reweight: kernel size mismatch");
  return reweight_impl(tree, q, false, {});
}

GirsanovMeasure girsanov_reweight(const ScenarioTree& tree,
                                  std::span<const double> q_levels) {
  if (q_levels.size() != static_cast<std::size_t>(tree.depth()))
    throw SizeError("girsanov_reweight: need one kernel value per level");
  AdaptedProcess q = make_process(tree, ProcessRole::kernel, 0.0);
  for (int k = 0; k < tree.depth(); ++k) {
    const std::size_t begin = tree.level_begin(k);
    const std::size_t count = tree.level_size(k);
    for (std::size_t j = 0; j < count; ++j) q[begin + j] = q_levels[k];
  }
  return reweight_impl(tree, q, true, q_levels);
}

namespace {

/// Fixed-order backward reduction: values at `level_from` are contracted one
/// level at a time down to the root. Elementwise per node, hence
/// deterministic under any worker count.
double reduce_to_root(const ScenarioTree& tree, int level_from,
                      std::span<const double> x, const GirsanovMeasure& mu) {
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (int k = level_from - 1; k >= 0; --k) {
    const std::size_t begin = tree.level_begin(k);
    const std::size_t count = tree.level_size(k);
    next.resize(count);
    const double* up = cur.data();
    double* out = next.data();
    parallel_for(count, [&, begin](std::size_t j) {
      const std::size_t id = begin + j;
      out[j] = mu.p_up[id] * up[2 * j] + mu.p_dn[id] * up[2 * j + 1];
    });
    cur.swap(next);
  }
  return cur[0];
}

}  // namespace

double expectation(const ScenarioTree& tree, std::span<const double> leaf_x,
                   const GirsanovMeasure& mu) {
  if (leaf_x.size() != tree.leaf_count())
    throw SizeError("expectation: leaf vector size mismatch");
  return reduce_to_root(tree, tree.depth(), leaf_x, mu);
}

double expectation(const ScenarioTree& tree, std::span<const double> leaf_x) {
  return expectation(tree, leaf_x, reference_measure(tree));
}

double expectation_at_level(const ScenarioTree& tree, int level,
                            std::span<const double> x,
                            const GirsanovMeasure& mu) {
  if (x.size() != tree.level_size(level))
    throw SizeError("expectation_at_level: size mismatch");
  return reduce_to_root(tree, level, x, mu);
}

std::vector<double> conditional_expectation(const ScenarioTree& tree,
                                            int level_from,
                                            std::span<const double> x,
                                            const GirsanovMeasure& mu) {
  if (level_from < 1 || x.size() != tree.level_size(level_from))
    throw SizeError("conditional_expectation: size mismatch");
  const int k = level_from - 1;
  const std::size_t begin = tree.level_begin(k);
  std::vector<double> out(tree.level_size(k));
  const double* up = x.data();
  double* o = out.data();
  parallel_for(out.size(), [&, begin](std::size_t j) {
    const std::size_t id = begin + j;
    o[j] = mu.p_up[id] * up[2 * j] + mu.p_dn[id] * up[2 * j + 1];
  });
  return out;
}

SupermartingaleReport is_supermartingale(const ScenarioTree& tree,
                                         const AdaptedProcess& y,
                                         const GirsanovMeasure& mu,
                                         double tol) {
  SupermartingaleReport rep;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    const double cond =
        mu.p_up[id] * y[tree.child(id, 0)] + mu.p_dn[id] * y[tree.child(id, 1)];
    const double slack = y[id] - cond;
    if (slack < rep.worst_slack) {
      rep.worst_slack = slack;
      rep.worst_node = id;
    }
  }
  if (tree.nonleaf_count() == 0) rep.worst_slack = 0.0;
  rep.ok = rep.worst_slack >= -tol;
  return rep;
}

}  // namespace bsde
