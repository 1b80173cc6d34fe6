#include "bsde/control.hpp"

#include <cmath>
#include <cstdio>

#include "bsde/errors.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

void resynthesize(const ScenarioTree& tree, ControlTriple& ct) {
  if (ct.delta.size() != tree.node_count() ||
      ct.gamma.size() != tree.node_count())
    throw SizeError("synthesize: control size mismatch");
  if (!std::isfinite(ct.z0)) throw SizeError("synthesize: z0 must be finite");
  ct.z.role = ProcessRole::control;
  ct.z.v.resize(tree.node_count());
  ct.int_z_dw.role = ProcessRole::value;
  ct.int_z_dw.v.resize(tree.node_count());

  const double dt = tree.dt();
  const auto& delta = ct.delta;
  const auto& gamma = ct.gamma;
  ct.z[0] = ct.z0;
  ct.int_z_dw[0] = 0.0;
  for (int k = 0; k < tree.depth(); ++k) {
    const std::size_t begin = tree.level_begin(k);
    const std::size_t count = tree.level_size(k);
    auto& z = ct.z;
    auto& m = ct.int_z_dw;
    parallel_for(count, [&, begin, dt](std::size_t j) {
      const std::size_t id = begin + j;
      const double zi = z[id];
      const double drift = zi + delta[id] * dt;
      for (int c = 0; c < 2; ++c) {
        const double dw = tree.edge_dw(c);
        const std::size_t ch = tree.child(id, c);
        z.v[ch] = drift + gamma[id] * dw;
        m.v[ch] = m[id] + zi * dw;
      }
    });
  }
}

ControlTriple synthesize(const ScenarioTree& tree, double z0,
                         const AdaptedProcess& delta,
                         const AdaptedProcess& gamma) {
  ControlTriple ct;
  ct.z0 = z0;
  ct.delta = delta;
  ct.delta.role = ProcessRole::delta;
  ct.gamma = gamma;
  ct.gamma.role = ProcessRole::gamma;
  resynthesize(tree, ct);
  return ct;
}

double l2_norm(const ScenarioTree& tree, const AdaptedProcess& x,
               const GirsanovMeasure& mu) {
  if (x.size() != tree.node_count()) throw SizeError("l2_norm: size mismatch");
  const double dt = tree.dt();
  double acc = 0.0;
  std::vector<double> sq;
  for (int k = 0; k < tree.depth(); ++k) {
    const std::size_t begin = tree.level_begin(k);
    const std::size_t count = tree.level_size(k);
    sq.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
      const double v = x[begin + j];
      sq[j] = v * v;
    }
    acc += expectation_at_level(tree, k, sq, mu) * dt;
  }
  return std::sqrt(acc);
}

double l2_norm(const ScenarioTree& tree, const AdaptedProcess& x) {
  return l2_norm(tree, x, reference_measure(tree));
}

ThetaReport verify_theta_M(const ScenarioTree& tree, const ControlTriple& ct,
                           double radius) {
  if (!(radius >= 0.0)) throw SizeError("verify_theta_M: radius must be >= 0");
  ThetaReport rep;
  rep.radius = radius;
  rep.delta_norm = l2_norm(tree, ct.delta);
  rep.gamma_norm = l2_norm(tree, ct.gamma);
  rep.ok = rep.delta_norm <= radius && rep.gamma_norm <= radius;
  return rep;
}

ZBoundReport z_l2_bound(const ScenarioTree& tree, const ControlTriple& ct) {
  ZBoundReport rep;
  const double dn = l2_norm(tree, ct.delta);
  const double gn = l2_norm(tree, ct.gamma);
  rep.bound = std::sqrt(tree.grid().horizon * 4.0 *
                        (ct.z0 * ct.z0 + dn * dn + gn * gn));
  rep.actual = l2_norm(tree, ct.z);
  rep.ok = rep.actual <= rep.bound * (1.0 + 1e-12);
  return rep;
}

AdmissibleReport check_admissible(const ScenarioTree& tree,
                                  const GeneratorSpec& gen,
                                  const ControlTriple& ct) {
  AdmissibleReport rep;
  bool first = true;
  for (std::size_t id = 0; id < tree.nonleaf_count(); ++id) {
    const auto proj = project_domain(gen, ct.z[id], ct.delta[id], ct.gamma[id]);
    const bool inside = proj[0] == ct.z[id] && proj[1] == ct.delta[id] &&
                        proj[2] == ct.gamma[id];
    if (!inside) {
      ++rep.violations;
      if (first) {
        rep.first_violation = id;
        first = false;
      }
    }
    if (!std::isfinite(ct.z[id]) || !std::isfinite(ct.delta[id]) ||
        !std::isfinite(ct.gamma[id]))
      rep.norms_finite = false;
  }
  rep.ok = rep.violations == 0 && rep.norms_finite;
  return rep;
}

void dump_controls_csv(const ScenarioTree& tree, const ControlTriple& ct,
                       const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("dump_controls_csv: cannot open " + path);
  std::fprintf(f, "node_id,level,t,W,Z,delta,gamma,int_z_dw\n");
  for (std::size_t id = 0; id < tree.node_count(); ++id) {
    const int k = tree.level_of(id);
    std::fprintf(f, "%zu,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", id, k,
                 tree.grid().t[k], tree.w(id), ct.z[id], ct.delta[id],
                 ct.gamma[id], ct.int_z_dw[id]);
  }
  std::fclose(f);
}

}  // namespace bsde
