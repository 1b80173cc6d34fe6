#include "bsde/primal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "bsde/errors.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

namespace {

// One backward elimination sweep for fixed, already-synthesized controls.
// Records the argmax child per non-leaf node (ties resolved to child 0) and
// returns the root value. y is sized node_count, arg nonleaf_count.
double backward_sweep(const ScenarioTree& tree, const GeneratorSpec& gen,
                      const TerminalCondition& xi, const ControlTriple& ct,
                      std::vector<double>& y, std::vector<std::uint8_t>& arg) {
  const double dt = tree.dt();
  const double dwu = tree.edge_dw(0);
  const double dwd = tree.edge_dw(1);
  const std::size_t lb = tree.leaf_begin();
  for (std::size_t j = 0; j < tree.leaf_count(); ++j) y[lb + j] = xi[j];
  for (int k = tree.depth(); k-- > 0;) {
    const std::size_t base = tree.level_begin(k);
    const double t = tree.grid().t[k];
    parallel_for(tree.level_size(k), [&](std::size_t j) {
      const std::size_t id = base + j;
      const double z = ct.z[id];
      const double g =
          eval_generator(gen, t, 0.0, z, ct.delta[id], ct.gamma[id]);
      const double up = y[2 * id + 1] - z * dwu;
      const double dn = y[2 * id + 2] - z * dwd;
      arg[id] = up >= dn ? 0 : 1;
      y[id] = g * dt + std::max(up, dn);
    });
  }
  return y[0];
}

// Backward sweep with the child max softened to a temperature-tau
// log-sum-exp (convex and nondecreasing in each argument, so the root value
// stays jointly convex in the controls). Fills the smoothed values ys
// (node_count) and sig0 (nonleaf_count), the weight of child 0 in the
// softened argmax; exact ties get weight 1/2. Returns the smoothed root
// value, +infinity past the generator domain.
// Smoothed backward value: the child max is softened to a log-sum-exp at
// temperature tau. When rho > 0 and the generator declares a z-box, the
// box is relaxed instead of enforced: the generator is evaluated at the
// clamped z while the replication terms keep the true z, and a quadratic
// penalty rho*dist^2(z, box) is charged at the node. The relaxed surrogate
// stays smooth and convex, so gradient descent cannot jam on the domain
// cliff; acceptance into the result is always measured on the hard sweep.
double smoothed_sweep(const ScenarioTree& tree, const GeneratorSpec& gen,
                      const TerminalCondition& xi, const ControlTriple& ct,
                      double tau, double rho, std::vector<double>& ys,
                      std::vector<double>& sig0) {
  const double dt = tree.dt();
  const double dwu = tree.edge_dw(0);
  const double dwd = tree.edge_dw(1);
  const bool pen_on = rho > 0.0 && gen.domain.z_box.has_value();
  const double blo = pen_on ? gen.domain.z_box->first : 0.0;
  const double bhi = pen_on ? gen.domain.z_box->second : 0.0;
  const std::size_t lb = tree.leaf_begin();
  for (std::size_t j = 0; j < tree.leaf_count(); ++j) ys[lb + j] = xi[j];
  for (int k = tree.depth(); k-- > 0;) {
    const std::size_t base = tree.level_begin(k);
    const double t = tree.grid().t[k];
    parallel_for(tree.level_size(k), [&](std::size_t j) {
      const std::size_t id = base + j;
      const double z = ct.z[id];
      double zg = z;
      double pen = 0.0;
      if (pen_on) {
        zg = std::clamp(z, blo, bhi);
        pen = rho * (z - zg) * (z - zg);
      }
      const double g =
          eval_generator(gen, t, 0.0, zg, ct.delta[id], ct.gamma[id]);
      const double up = ys[2 * id + 1] - z * dwu;
      const double dn = ys[2 * id + 2] - z * dwd;
      if (std::isinf(up) && std::isinf(dn)) {  // both subtrees off-domain
        sig0[id] = 0.5;
        ys[id] = up;
        return;
      }
      const double e = std::exp(-std::fabs(up - dn) / tau);
      sig0[id] = up >= dn ? 1.0 / (1.0 + e) : e / (1.0 + e);
      ys[id] = g * dt + pen + std::max(up, dn) + tau * std::log1p(e);
    });
  }
  return ys[0];
}

// Gradient of the smoothed root value with respect to every interior
// (delta, gamma), by an adjoint pass over the tree. mu(n) is the softened
// path weight (product of sig along the path), s(n) the direct sensitivity
// to a unit shift of Z(n) (the generator's g_z term and the -Z dW pairing
// under the softened argmax), and usum(n) its subtree accumulation, which
// is exactly how a state shift injected at n propagates to the root value:
//   d/dDelta(m) = dt (mu g_delta + usum(up child) + usum(down child)),
//   d/dGamma(m) = mu dt g_gamma + dW_up usum(up) + dW_down usum(down).
// With tau -> 0 and a unique active path this collapses to the path
// subgradient below.
void smoothed_gradient(const ScenarioTree& tree, const GeneratorSpec& gen,
                       const ControlTriple& ct, double rho,
                       const std::vector<double>& sig0, std::vector<double>& mu,
                       std::vector<double>& usum, std::vector<double>& gd,
                       std::vector<double>& gg) {
  const double dt = tree.dt();
  const double dwu = tree.edge_dw(0);
  const double dwd = tree.edge_dw(1);
  const bool pen_on = rho > 0.0 && gen.domain.z_box.has_value();
  const double blo = pen_on ? gen.domain.z_box->first : 0.0;
  const double bhi = pen_on ? gen.domain.z_box->second : 0.0;
  mu.assign(tree.node_count(), 0.0);
  usum.assign(tree.node_count(), 0.0);
  mu[0] = 1.0;
  for (int k = 0; k < tree.depth(); ++k) {
    const std::size_t base = tree.level_begin(k);
    parallel_for(tree.level_size(k), [&](std::size_t j) {
      const std::size_t id = base + j;
      mu[2 * id + 1] = mu[id] * sig0[id];
      mu[2 * id + 2] = mu[id] * (1.0 - sig0[id]);
    });
  }
  for (int k = tree.depth(); k-- > 0;) {
    const std::size_t base = tree.level_begin(k);
    const double t = tree.grid().t[k];
    parallel_for(tree.level_size(k), [&](std::size_t j) {
      const std::size_t id = base + j;
      const double z = ct.z[id];
      double zg = z;
      double gzpen = 0.0;  // d/dz of the box penalty (0 inside the box)
      if (pen_on) {
        zg = std::clamp(z, blo, bhi);
        gzpen = 2.0 * rho * (z - zg);
      }
      const auto gr = gen.grad(t, 0.0, zg, ct.delta[id], ct.gamma[id]);
      // Outside the box the generator sees the clamped z, so its own
      // z-derivative is flat there and only the penalty slope remains.
      const double gz = z == zg ? gr[0] : 0.0;
      const double uu = usum[2 * id + 1];
      const double ud = usum[2 * id + 2];
      const double edw = sig0[id] * dwu + (1.0 - sig0[id]) * dwd;
      usum[id] = mu[id] * (dt * gz + gzpen - edw) + uu + ud;
      gd[id] = dt * (mu[id] * gr[1] + uu + ud);
      gg[id] = mu[id] * dt * gr[2] + dwu * uu + dwd * ud;
    });
  }
}

// Forward feasibility restoration for a declared z-box: walk the levels,
// clamping each node's (delta, gamma) so both child states stay strictly
// inside the box. In the rotated coordinates u = delta dt + gamma dW and
// v = delta dt - gamma dW the two child constraints decouple into
// independent interval clamps, and since the rotation is a scaled isometry
// the clamp is the exact nearest feasible move nodewise. A gamma band, when
// also declared, is enforced afterwards, followed by a drift re-clamp
// (always a nonempty interval because |gamma dW| <= half the box width
// after the rotated clamp). The eps inset keeps the synthesized states off
// the boundary so later rounding cannot push them outside. No-op when the
// root state itself is out of the box: that instance has no feasible
// controls at all and is reported through the infinite objective instead.
void restore_z_domain(const ScenarioTree& tree, const GeneratorSpec& gen,
                      ControlTriple& ct) {
  if (!gen.domain.z_box) return;
  const auto [zlo, zhi] = *gen.domain.z_box;
  if (!(ct.z0 >= zlo && ct.z0 <= zhi)) return;
  const double dt = tree.dt();
  const double sdt = tree.sqrt_dt();
  const double eps =
      std::min(1e-12 * (1.0 + std::fabs(zlo) + std::fabs(zhi)),
               0.25 * (zhi - zlo));
  auto& d = ct.delta.v;
  auto& g = ct.gamma.v;
  auto& z = ct.z.v;
  z[0] = ct.z0;
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    const double zn = z[id];
    if (tree.child(id, 0) >= tree.leaf_begin()) {
      // Leaf children: their z is never consumed by the generator, so the
      // box does not constrain the last interior level's controls.
      z[2 * id + 1] = zn + d[id] * dt + g[id] * sdt;
      z[2 * id + 2] = zn + d[id] * dt - g[id] * sdt;
      continue;
    }
    const double lo = zlo - zn + eps;
    const double hi = zhi - zn - eps;
    if (lo > hi) {
      d[id] = 0.0;  // degenerate box: hold the state still
      g[id] = 0.0;
    } else {
      const double u = std::clamp(d[id] * dt + g[id] * sdt, lo, hi);
      const double v = std::clamp(d[id] * dt - g[id] * sdt, lo, hi);
      d[id] = 0.5 * (u + v) / dt;
      g[id] = 0.5 * (u - v) / sdt;
      if (gen.domain.gamma_band) {
        const double band = *gen.domain.gamma_band;
        g[id] = std::clamp(g[id], -band, band);
        const double m = std::fabs(g[id]) * sdt;
        d[id] = std::clamp(d[id], (lo + m) / dt, (hi - m) / dt);
      }
    }
    z[2 * id + 1] = zn + d[id] * dt + g[id] * sdt;
    z[2 * id + 2] = zn + d[id] * dt - g[id] * sdt;
  }
}

struct PathGradient {
  std::vector<std::size_t> nodes;  // active path, root first
  std::vector<double> gd;          // d/dDelta at path nodes
  std::vector<double> gg;          // d/dGamma at path nodes
};

// Subgradient of the root value supported on the active (argmax) path.
// With a_k = dt g_z(k) - dW(k) and suffix sums S_m = sum_{k>m} a_k:
//   d/dDelta_m = dt g_delta(m) + dt S_m
//   d/dGamma_m = dt g_gamma(m) + dW(m) S_m
PathGradient path_subgradient(const ScenarioTree& tree,
                              const GeneratorSpec& gen,
                              const ControlTriple& ct,
                              const std::vector<std::uint8_t>& arg) {
  const int steps = tree.depth();
  const double dt = tree.dt();
  PathGradient pg;
  pg.nodes.resize(steps);
  pg.gd.resize(steps);
  pg.gg.resize(steps);
  std::vector<double> az(steps), dw(steps);
  std::size_t id = 0;
  for (int k = 0; k < steps; ++k) {
    pg.nodes[k] = id;
    const double t = tree.grid().t[k];
    std::array<double, 3> gr{};
    if (gen.grad) {
      gr = gen.grad(t, 0.0, ct.z[id], ct.delta[id], ct.gamma[id]);
    } else {
      gr = fd_subgradient(gen, t, 0.0, ct.z[id], ct.delta[id], ct.gamma[id]);
    }
    dw[k] = tree.edge_dw(arg[id]);
    az[k] = dt * gr[0] - dw[k];
    pg.gd[k] = dt * gr[1];
    pg.gg[k] = dt * gr[2];
    id = tree.child(id, arg[id]);
  }
  double suffix = 0.0;
  for (int k = steps; k-- > 0;) {
    pg.gd[k] += dt * suffix;
    pg.gg[k] += dw[k] * suffix;
    suffix += az[k];
  }
  return pg;
}

void clamp_gamma(const GeneratorSpec& gen, std::vector<double>& gamma,
                 std::size_t interior) {
  if (!gen.domain.gamma_band) return;
  const double m = *gen.domain.gamma_band;
  for (std::size_t id = 0; id < interior; ++id)
    gamma[id] = std::clamp(gamma[id], -m, m);
}

// Deterministic golden-section minimization of a convex 1-d section.
// Returns the best probe if it improves on fbest, otherwise xbest.
template <typename F>
double golden_min(F&& f, double lo, double hi, double fbest, double xbest) {
  constexpr double kInv = 0.6180339887498949;  // 1/phi
  double a = lo, b = hi;
  double x1 = b - kInv * (b - a);
  double x2 = a + kInv * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 34 && b - a > 1e-12 * (1.0 + std::fabs(a)); ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInv * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInv * (b - a);
      f2 = f(x2);
    }
  }
  if (f1 <= f2 && f1 < fbest) return x1;
  if (f2 < f1 && f2 < fbest) return x2;
  return xbest;
}

struct RestartOutcome {
  double value = std::numeric_limits<double>::infinity();
  std::vector<double> delta, gamma;  // full node-size snapshots
  int iterations = 0;
};

}  // namespace

double evaluate_Y_given_controls(const ScenarioTree& tree,
                                 const GeneratorSpec& gen,
                                 const TerminalCondition& xi,
                                 const ControlTriple& ct,
                                 AdaptedProcess* y_out) {
  if (!gen.y_independent)
    throw UnsupportedError(
        "backward elimination requires a y-independent generator");
  if (xi.size() != tree.leaf_count())
    throw SizeError("terminal condition size does not match leaf count");
  std::vector<double> y(tree.node_count());
  std::vector<std::uint8_t> arg(tree.nonleaf_count());
  const double v = backward_sweep(tree, gen, xi, ct, y, arg);
  if (y_out) {
    y_out->role = ProcessRole::value;
    y_out->v = std::move(y);
  }
  return v;
}

VerifyReport verify_supersolution(const ScenarioTree& tree,
                                  const GeneratorSpec& gen,
                                  const TerminalCondition& xi,
                                  const AdaptedProcess& y,
                                  const ControlTriple& ct, double tol_feas) {
  VerifyReport rep;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  rep.worst_terminal = std::numeric_limits<double>::infinity();
  const double dt = tree.dt();
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    const double t = tree.grid().t[tree.level_of(id)];
    const double g =
        eval_generator(gen, t, y[id], ct.z[id], ct.delta[id], ct.gamma[id]);
    if (std::isinf(g)) {
      rep.infeasible = true;
      rep.worst_node = id;
      rep.ok = false;
      return rep;
    }
    for (int c = 0; c < 2; ++c) {
      const double slack = y[id] - g * dt + ct.z[id] * tree.edge_dw(c) -
                           y[tree.child(id, c)];
      if (slack < rep.worst_slack) {
        rep.worst_slack = slack;
        rep.worst_node = id;
      }
    }
  }
  for (std::size_t j = 0; j < tree.leaf_count(); ++j) {
    const double s = y[tree.leaf_begin() + j] - xi[j];
    rep.worst_terminal = std::min(rep.worst_terminal, s);
  }
  rep.ok = rep.worst_slack >= -tol_feas && rep.worst_terminal >= -tol_feas;
  return rep;
}

MinimalValueResult minimal_value(const ScenarioTree& tree,
                                 const GeneratorSpec& gen,
                                 const TerminalCondition& xi, double z0,
                                 const SolverConfig& cfg) {
  if (!gen.flag_pos || !gen.flag_con)
    throw KernelError(
        "minimal_value requires a generator declared convex and nonnegative");
  if (!gen.y_independent)
    throw UnsupportedError("minimal_value requires a y-independent generator");
  if (xi.size() != tree.leaf_count())
    throw SizeError("terminal condition size does not match leaf count");

  const std::size_t interior = tree.nonleaf_count();
  std::vector<double> ybuf(tree.node_count());
  std::vector<std::uint8_t> arg(interior);

  // The optimizer state lives directly in the triple (leaf entries stay 0).
  ControlTriple ct;
  ct.z0 = z0;
  ct.delta = make_process(tree, ProcessRole::delta);
  ct.gamma = make_process(tree, ProcessRole::gamma);
  auto evaluate = [&]() {
    resynthesize(tree, ct);
    return backward_sweep(tree, gen, xi, ct, ybuf, arg);
  };

  std::vector<RestartOutcome> outcomes;
  const int restarts = std::max(1, cfg.restarts);

  for (int r = 0; r < restarts; ++r) {
    auto& d = ct.delta.v;
    auto& g = ct.gamma.v;
    std::fill(d.begin(), d.end(), 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    if (r > 0) {
      std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> u(-cfg.random_radius,
                                               cfg.random_radius);
      for (std::size_t id = 0; id < interior; ++id) d[id] = u(rng);
      for (std::size_t id = 0; id < interior; ++id) g[id] = u(rng);
      clamp_gamma(gen, g, interior);
      restore_z_domain(tree, gen, ct);
    }
    RestartOutcome out;
    double v = evaluate();
    if (std::isinf(v) && r > 0) {
      // Pull a random start back toward zero controls until it enters the
      // domain (zero controls can still be infeasible if z0 is outside).
      for (int halve = 0; halve < 40 && std::isinf(v); ++halve) {
        for (std::size_t id = 0; id < interior; ++id) {
          d[id] *= 0.5;
          g[id] *= 0.5;
        }
        v = evaluate();
      }
    }
    if (std::isinf(v)) {
      out.value = v;
      outcomes.push_back(std::move(out));
      continue;
    }
    out.value = v;
    out.delta = d;
    out.gamma = g;

    std::vector<double> dprev, gprev;
    for (int k = 1; k <= cfg.max_iters; ++k) {
      const PathGradient pg = path_subgradient(tree, gen, ct, arg);
      double step =
          cfg.step0 / std::pow(static_cast<double>(k), cfg.step_decay);
      dprev = d;
      gprev = g;
      double vn = std::numeric_limits<double>::infinity();
      for (int bt = 0; bt < 12; ++bt) {
        d = dprev;
        g = gprev;
        for (std::size_t i = 0; i < pg.nodes.size(); ++i) {
          d[pg.nodes[i]] -= step * pg.gd[i];
          g[pg.nodes[i]] -= step * pg.gg[i];
        }
        clamp_gamma(gen, g, interior);
        restore_z_domain(tree, gen, ct);
        vn = evaluate();
        if (std::isfinite(vn)) break;
        step *= 0.5;
      }
      ++out.iterations;
      if (!std::isfinite(vn)) {  // stuck against the domain boundary
        d = dprev;
        g = gprev;
        evaluate();
        break;
      }
      if (vn < out.value) {
        out.value = vn;
        out.delta = d;
        out.gamma = g;
      }
    }

    // Smoothing refinement: soften the child max to a log-sum-exp at
    // temperature tau, descend along the full-tree adjoint gradient with
    // backtracking, and anneal tau downward. Near ties between children
    // are exactly where single-path subgradients zigzag and coordinate
    // descent jams; the softened gradient averages the tied paths away.
    // Acceptance into the result is always measured on the true objective.
    if (std::isfinite(out.value) && cfg.max_iters > 0 && gen.grad) {
      d = out.delta;
      g = out.gamma;
      evaluate();  // refresh the synthesized state at the best iterate
      std::vector<double> ys(tree.node_count());
      std::vector<double> sig0(interior);
      std::vector<double> mu, usum;
      std::vector<double> grad_d(interior), grad_g(interior);
      const double scale = 1.0 + std::fabs(out.value);
      const double tau_min =
          std::max(cfg.effective_tol(out.value) / 2048.0, 1e-14 * scale);
      const bool boxed = gen.domain.z_box.has_value();
      double rho = boxed ? 1e2 : 0.0;
      double lips = 1.0;  // backtracked Lipschitz estimate, kept across stages
      int budget = cfg.max_iters;
      std::vector<double> dstage, gstage;
      std::vector<double> xd, xg, xpd, xpg, yd, yg;
      for (double tau = 1e-2 * scale; tau >= tau_min && budget > 0;
           tau *= 0.2) {
        // Accelerated projected gradient (FISTA with backtracking) on the
        // smoothed surrogate. The log-sum-exp curvature grows like 1/tau,
        // so plain gradient descent needs O(1/tau) iterations per stage
        // while the accelerated method needs O(1/sqrt(tau)); without it the
        // late, small-tau stages starve the shared iteration budget.
        double fx = smoothed_sweep(tree, gen, xi, ct, tau, rho, ys, sig0);
        if (!std::isfinite(fx)) break;
        xd = d;
        xg = g;
        xpd = d;
        xpg = g;
        yd = d;
        yg = g;
        double theta = 1.0;
        double fstage = fx;
        const double stall = std::max(1e-3 * tau, 1e-15 * scale);
        int since_improve = 0;
        while (budget > 0) {
          --budget;
          if (!(d == yd && g == yg)) {
            d = yd;
            g = yg;
            resynthesize(tree, ct);
          }
          double fy = smoothed_sweep(tree, gen, xi, ct, tau, rho, ys, sig0);
          if (!std::isfinite(fy)) {  // extrapolation left the domain
            theta = 1.0;
            yd = xd;
            yg = xg;
            d = xd;
            g = xg;
            resynthesize(tree, ct);
            fy = smoothed_sweep(tree, gen, xi, ct, tau, rho, ys, sig0);
            if (!std::isfinite(fy)) break;
          }
          smoothed_gradient(tree, gen, ct, rho, sig0, mu, usum, grad_d,
                            grad_g);
          double gn2 = 0.0;
          for (std::size_t i = 0; i < interior; ++i)
            gn2 += grad_d[i] * grad_d[i] + grad_g[i] * grad_g[i];
          if (!(gn2 > 0.0)) break;
          // Backtrack the step 1/lips until the quadratic upper model at y
          // holds at the projected trial point.
          double fc = std::numeric_limits<double>::infinity();
          bool accepted = false;
          while (lips < 1e18) {
            for (std::size_t i = 0; i < interior; ++i) {
              d[i] = yd[i] - grad_d[i] / lips;
              g[i] = yg[i] - grad_g[i] / lips;
            }
            clamp_gamma(gen, g, interior);
            resynthesize(tree, ct);
            fc = smoothed_sweep(tree, gen, xi, ct, tau, rho, ys, sig0);
            double lin = 0.0, dist2 = 0.0;
            for (std::size_t i = 0; i < interior; ++i) {
              const double dd = d[i] - yd[i];
              const double dg = g[i] - yg[i];
              lin += grad_d[i] * dd + grad_g[i] * dg;
              dist2 += dd * dd + dg * dg;
            }
            if (dist2 == 0.0) break;  // pinned: no feasible move this way
            if (fc <= fy + lin + 0.5 * lips * dist2 + 1e-12 * scale) {
              accepted = true;
              break;
            }
            lips *= 2.0;
          }
          ++out.iterations;
          if (!accepted) {  // stage optimum within line-search resolution
            d = xd;
            g = xg;
            resynthesize(tree, ct);
            break;
          }
          // Momentum bookkeeping: gradient-mapping restart plus a monotone
          // safeguard (the accepted sequence x never increases).
          double rst = 0.0;
          for (std::size_t i = 0; i < interior; ++i)
            rst += (yd[i] - d[i]) * (d[i] - xd[i]) +
                   (yg[i] - g[i]) * (g[i] - xg[i]);
          const bool improved = fc <= fx;
          if (improved) {
            xpd.swap(xd);
            xpg.swap(xg);
            xd = d;
            xg = g;
            fx = fc;
          }
          if (!improved || rst > 0.0) {
            theta = 1.0;
            yd = xd;
            yg = xg;
          } else {
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
            const double beta = (theta - 1.0) / tn;
            theta = tn;
            for (std::size_t i = 0; i < interior; ++i) {
              yd[i] = xd[i] + beta * (xd[i] - xpd[i]);
              yg[i] = xg[i] + beta * (xg[i] - xpg[i]);
            }
          }
          lips = std::max(lips * 0.95, 1e-12);
          if (fx < fstage - stall) {
            fstage = fx;
            since_improve = 0;
          } else if (++since_improve >= 25) {
            break;  // stage accuracy is already below the smoothing bias
          }
        }
        d = xd;
        g = xg;
        resynthesize(tree, ct);
        // Acceptance is measured on the hard sweep. In penalty mode the
        // iterate may sit slightly outside the box, so it is restored to
        // the feasible set for the measurement and the unrestored iterate
        // then resumes as the next stage's warm start.
        if (boxed) {
          dstage = d;
          gstage = g;
          restore_z_domain(tree, gen, ct);
          const double vtrue = evaluate();
          if (vtrue < out.value) {
            out.value = vtrue;
            out.delta = d;
            out.gamma = g;
          }
          d = dstage;
          g = gstage;
          resynthesize(tree, ct);
          rho = std::min(rho * 5.0, 1e8);
        } else {
          const double vtrue = evaluate();  // hard sweep at the stage point
          if (vtrue < out.value) {
            out.value = vtrue;
            out.delta = d;
            out.gamma = g;
          }
        }
      }
    }

    // Deterministic cyclic coordinate-descent polish of the best iterate.
    if (cfg.polish_sweeps > 0 && interior <= cfg.polish_max_nodes) {
      d = out.delta;
      g = out.gamma;
      double fbest = evaluate();
      double w = std::max(cfg.step0, 0.25 * (1.0 + std::fabs(z0)));
      const double band = gen.domain.gamma_band
                              ? *gen.domain.gamma_band
                              : std::numeric_limits<double>::infinity();
      for (int sweep = 0; sweep < cfg.polish_sweeps; ++sweep) {
        const double before = fbest;
        for (std::size_t id = 0; id < interior; ++id) {
          {
            const double x0 = d[id];
            auto f = [&](double x) {
              d[id] = x;
              return evaluate();
            };
            const double xn = golden_min(f, x0 - w, x0 + w, fbest, x0);
            d[id] = xn;
            if (xn != x0) fbest = evaluate();
          }
          {
            const double x0 = g[id];
            auto f = [&](double x) {
              g[id] = x;
              return evaluate();
            };
            const double lo = std::max(x0 - w, -band);
            const double hi = std::min(x0 + w, band);
            const double xn = golden_min(f, lo, hi, fbest, x0);
            g[id] = xn;
            if (xn != x0) fbest = evaluate();
          }
        }
        w *= 0.5;
        if (before - fbest < 0.01 * cfg.effective_tol(fbest)) break;
      }
      if (fbest < out.value) {
        out.value = fbest;
        out.delta = d;
        out.gamma = g;
      }
    }
    outcomes.push_back(std::move(out));
  }

  // Best restart; ties resolve to the lowest restart index.
  std::size_t best = 0;
  for (std::size_t r = 1; r < outcomes.size(); ++r)
    if (outcomes[r].value < outcomes[best].value) best = r;
  if (std::isinf(outcomes[best].value))
    throw KernelError(
        "no restart produced a finite value; z0 may lie outside the declared "
        "control domain");

  MinimalValueResult res;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  bool all_finite = true;
  for (const auto& o : outcomes) {
    res.restart_values.push_back(o.value);
    res.iterations += o.iterations;
    if (std::isfinite(o.value)) {
      lo = std::min(lo, o.value);
      hi = std::max(hi, o.value);
    } else {
      all_finite = false;
    }
  }
  res.restart_spread = hi - lo;
  res.converged =
      all_finite && res.restart_spread <= cfg.effective_tol(outcomes[best].value);
  if (!res.converged)
    res.message = all_finite ? "restart values disagree beyond tolerance"
                             : "a restart failed to enter the domain";

  ct.delta.v = outcomes[best].delta;
  ct.gamma.v = outcomes[best].gamma;
  res.value = evaluate();
  res.controls = ct;
  res.y.role = ProcessRole::value;
  res.y.v = ybuf;

  const double band = gen.domain.gamma_band
                          ? *gen.domain.gamma_band
                          : std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < interior; ++id) {
    bool active = std::isfinite(band) &&
                  std::fabs(std::fabs(ct.gamma[id]) - band) <=
                      1e-12 * (1.0 + band);
    if (gen.domain.z_box) {
      active = active ||
               std::fabs(ct.z[id] - gen.domain.z_box->first) <= 1e-12 ||
               std::fabs(ct.z[id] - gen.domain.z_box->second) <= 1e-12;
    }
    if (active) ++res.domain_active_nodes;
  }
  return res;
}

std::pair<AdaptedProcess, DecomposeReport> decompose(const ScenarioTree& tree,
                                                     const GeneratorSpec& gen,
                                                     const AdaptedProcess& y,
                                                     const ControlTriple& ct,
                                                     double tol) {
  DecomposeReport rep;
  rep.worst_increment = std::numeric_limits<double>::infinity();
  rep.worst_sibling_gap = 0.0;
  AdaptedProcess a = make_process(tree, ProcessRole::value);
  const double dt = tree.dt();
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    const double t = tree.grid().t[tree.level_of(id)];
    const double g =
        eval_generator(gen, t, y[id], ct.z[id], ct.delta[id], ct.gamma[id]);
    double inc[2];
    for (int c = 0; c < 2; ++c) {
      const std::size_t ch = tree.child(id, c);
      inc[c] = y[id] + ct.z[id] * tree.edge_dw(c) - y[ch] - g * dt;
      a.v[ch] = a.v[id] + inc[c];
      rep.worst_increment = std::min(rep.worst_increment, inc[c]);
    }
    rep.worst_sibling_gap =
        std::max(rep.worst_sibling_gap, std::fabs(inc[0] - inc[1]));
  }
  rep.increasing_ok = rep.worst_increment >= -tol;
  rep.predictable = rep.worst_sibling_gap <= tol;
  return {std::move(a), rep};
}

std::vector<std::pair<double, double>> minimal_value_curve(
    const ScenarioTree& tree, const GeneratorSpec& gen,
    const TerminalCondition& xi, std::span<const double> z_grid,
    const SolverConfig& cfg) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(z_grid.size());
  for (double z : z_grid)
    curve.emplace_back(z, minimal_value(tree, gen, xi, z, cfg).value);
  return curve;
}

}  // namespace bsde
