#include "bsde/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "bsde/dual.hpp"
#include "bsde/errors.hpp"
#include "bsde/oracle.hpp"
#include "bsde/version.hpp"

namespace bsde {

namespace {

using nlohmann::json;

struct Instance {
  RunConfig rc;  // with effective (master-seed mixed) solver seeds
  std::string hash;
  ScenarioTree tree;
  GeneratorSpec gen;
  TerminalCondition xi;
};

Instance make_instance(const RunConfig& in) {
  Instance ins;
  ins.rc = in;
  ins.hash = config_hash(in);
  ins.rc.solver.seed ^= in.seed;
  ins.rc.dual.inner.seed ^= in.seed * 0x9e3779b97f4a7c15ULL;
  ins.tree = build_tree(in.tree.horizon, in.tree.steps, in.tree.depth_cap);
  ins.gen = build_generator(in.gen);
  ins.xi = build_payoff(in.payoff, ins.tree);
  return ins;
}

std::filesystem::path out_path(const RunConfig& rc, const char* name) {
  std::filesystem::create_directories(rc.out_dir);
  return std::filesystem::path(rc.out_dir) / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  f << text;
}

void write_json(const std::filesystem::path& p, const json& j) {
  write_text(p, j.dump(2) + "\n");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_witness_csv(const std::filesystem::path& p,
                       const ScenarioTree& tree, const AdaptedProcess& y,
                       const ControlTriple& ct, const AdaptedProcess& a) {
  std::string s = "node_id,level,t,W,Y,Z,delta,gamma,int_z_dw,A\n";
  char buf[256];
  for (std::size_t id = 0; id < tree.node_count(); ++id) {
    const int k = tree.level_of(id);
    std::snprintf(buf, sizeof buf,
                  "%zu,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  id, k, tree.grid().t[k], tree.w(id), y[id], ct.z[id],
                  ct.delta[id], ct.gamma[id], ct.int_z_dw[id], a[id]);
    s += buf;
  }
  write_text(p, s);
}

json dual_report_json(const DualReport& rep) {
  json j;  // exactly: kernel, estar, bound, gap, method, iterations, tolerance
  j["kernel"] = rep.kernel;
  j["estar"] = rep.estar;
  j["bound"] = rep.bound;
  j["gap"] = rep.gap ? json(*rep.gap) : json(nullptr);
  j["method"] = rep.method;
  j["iterations"] = rep.iterations;
  j["tolerance"] = rep.tolerance;
  return j;
}

std::vector<double> expand_levels(const std::vector<double>& q, int steps,
                                  const char* what) {
  if (q.size() == 1) return std::vector<double>(steps, q[0]);
  if (q.size() == static_cast<std::size_t>(steps)) return q;
  throw ConfigError(std::string(what) +
                    " must have 1 value or one per level, got " +
                    std::to_string(q.size()));
}

struct PrimalOutcome {
  MinimalValueResult res;
  VerifyReport ver;
  DecomposeReport dec;
  AdaptedProcess a;
  SupermartingaleReport smg;
};

PrimalOutcome solve_primal(const Instance& ins) {
  PrimalOutcome out;
  out.res = minimal_value(ins.tree, ins.gen, ins.xi, ins.rc.z0, ins.rc.solver);
  out.ver = verify_supersolution(ins.tree, ins.gen, ins.xi, out.res.y,
                                 out.res.controls, ins.rc.solver.tol_feas);
  auto [a, dec] = decompose(ins.tree, ins.gen, out.res.y, out.res.controls,
                            ins.rc.solver.tol_feas);
  out.a = std::move(a);
  out.dec = dec;
  out.smg = is_supermartingale(ins.tree, out.res.y,
                               reference_measure(ins.tree), 1e-9);
  return out;
}

json primal_report_json(const Instance& ins, const PrimalOutcome& out) {
  json j;
  j["artifact"] = "primal";
  j["version"] = kVersion;
  j["config_hash"] = ins.hash;
  j["value"] = out.res.value;
  j["converged"] = out.res.converged;
  j["iterations"] = out.res.iterations;
  j["restart_values"] = out.res.restart_values;
  j["restart_spread"] = out.res.restart_spread;
  j["domain_active_nodes"] = out.res.domain_active_nodes;
  j["message"] = out.res.message;
  j["verification"] = {{"ok", out.ver.ok},
                       {"infeasible", out.ver.infeasible},
                       {"worst_slack", out.ver.worst_slack},
                       {"worst_terminal", out.ver.worst_terminal}};
  j["decomposition"] = {{"increasing_ok", out.dec.increasing_ok},
                        {"worst_increment", out.dec.worst_increment},
                        {"worst_sibling_gap", out.dec.worst_sibling_gap},
                        {"predictable", out.dec.predictable}};
  j["supermartingale"] = {{"ok", out.smg.ok},
                          {"worst_slack", out.smg.worst_slack}};
  return j;
}

DualReport solve_dual(const Instance& ins, std::optional<double> primal,
                      std::vector<AscentStep>* log = nullptr) {
  const auto& dc = ins.rc.dual;
  if (dc.method == "closed_form") {
    std::vector<double> levels =
        dc.q_fixed.empty()
            ? std::vector<double>(ins.tree.depth(), 0.0)
            : expand_levels(dc.q_fixed, ins.tree.depth(), "dual.q_fixed");
    const GirsanovMeasure mu = girsanov_reweight(ins.tree, levels);
    return dual_bound(ins.tree, ins.gen, ins.xi, ins.rc.z0, mu,
                      DualMethod::closed_form, dc.inner, primal);
  }
  if (!dc.q_fixed.empty()) {
    const std::vector<double> levels =
        expand_levels(dc.q_fixed, ins.tree.depth(), "dual.q_fixed");
    const GirsanovMeasure mu = girsanov_reweight(ins.tree, levels);
    return dual_bound(ins.tree, ins.gen, ins.xi, ins.rc.z0, mu,
                      DualMethod::numeric, dc.inner, primal);
  }
  OuterResult outer =
      dc.nodewise
          ? maximize_over_q_nodewise(ins.tree, ins.gen, ins.xi, ins.rc.z0,
                                     dc.q_max, dc.outer_sweeps, dc.inner,
                                     dc.line_tol)
          : maximize_over_q(ins.tree, ins.gen, ins.xi, ins.rc.z0, dc.pieces,
                            dc.q_max, dc.outer_sweeps, dc.inner, dc.line_tol);
  if (log) *log = outer.log;
  DualReport rep = outer.report;
  if (primal) rep.gap = *primal - rep.bound;
  return rep;
}

void write_ascent_csv(const std::filesystem::path& p,
                      const std::vector<AscentStep>& log) {
  std::string s = "sweep,coordinate,bound\n";
  char buf[96];
  for (const auto& st : log) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", st.sweep, st.coordinate,
                  st.bound);
    s += buf;
  }
  write_text(p, s);
}

}  // namespace

int run_primal(const RunConfig& rc) {
  const Instance ins = make_instance(rc);
  const PrimalOutcome out = solve_primal(ins);
  write_witness_csv(out_path(rc, "witness.csv"), ins.tree, out.res.y,
                    out.res.controls, out.a);
  write_json(out_path(rc, "report.json"), primal_report_json(ins, out));
  if (!rc.tree.refine.empty()) {
    if (rc.payoff.kind == "table")
      throw ConfigError("refinement ladders need a payoff that scales with "
                        "the tree (not 'table')");
    std::string s = "steps,value\n";
    for (int steps : rc.tree.refine) {
      RunConfig r = rc;
      r.tree.steps = steps;
      r.tree.refine.clear();
      const Instance fine = make_instance(r);
      const auto res =
          minimal_value(fine.tree, fine.gen, fine.xi, r.z0, fine.rc.solver);
      s += std::to_string(steps) + "," + fmt(res.value) + "\n";
    }
    write_text(out_path(rc, "refinement.csv"), s);
  }
  std::printf("primal value = %.12g (%s, %d iterations, spread %.3g)\n",
              out.res.value, out.res.converged ? "converged" : "NOT CONVERGED",
              out.res.iterations, out.res.restart_spread);
  std::printf("witness: %s\n", out_path(rc, "witness.csv").string().c_str());
  if (!out.ver.ok) {
    std::printf("verification FAILED (slack %.3g terminal %.3g)\n",
                out.ver.worst_slack, out.ver.worst_terminal);
    return kExitPropertyFail;
  }
  return out.res.converged ? kExitOk : kExitNoConverge;
}

int run_dual(const RunConfig& rc) {
  const Instance ins = make_instance(rc);
  std::vector<AscentStep> log;
  const DualReport rep = solve_dual(ins, std::nullopt, &log);
  write_json(out_path(rc, "dual_report.json"), dual_report_json(rep));
  if (!log.empty()) write_ascent_csv(out_path(rc, "ascent.csv"), log);
  std::printf("dual bound = %.12g (estar = %.12g, kernel %s, %s)\n", rep.bound,
              rep.estar, rep.kernel.c_str(), rep.method.c_str());
  return rep.converged ? kExitOk : kExitNoConverge;
}

int run_gap(const RunConfig& rc) {
  const Instance ins = make_instance(rc);
  const PrimalOutcome pr = solve_primal(ins);
  std::vector<AscentStep> log;
  const DualReport rep = solve_dual(ins, pr.res.value, &log);
  write_witness_csv(out_path(rc, "witness.csv"), ins.tree, pr.res.y,
                    pr.res.controls, pr.a);
  write_json(out_path(rc, "report.json"), primal_report_json(ins, pr));
  write_json(out_path(rc, "dual_report.json"), dual_report_json(rep));
  if (!log.empty()) write_ascent_csv(out_path(rc, "ascent.csv"), log);
  if (!rc.tree.refine.empty()) {
    if (rc.payoff.kind == "table")
      throw ConfigError("refinement ladders need a payoff that scales with "
                        "the tree (not 'table')");
    std::string s = "steps,value,bound,gap\n";
    for (int steps : rc.tree.refine) {
      RunConfig r = rc;
      r.tree.steps = steps;
      r.tree.refine.clear();
      const Instance fine = make_instance(r);
      const auto res =
          minimal_value(fine.tree, fine.gen, fine.xi, r.z0, fine.rc.solver);
      const DualReport frep = solve_dual(fine, res.value);
      s += std::to_string(steps) + "," + fmt(res.value) + "," +
           fmt(frep.bound) + "," + fmt(res.value - frep.bound) + "\n";
    }
    write_text(out_path(rc, "refinement.csv"), s);
  }
  const double gap = pr.res.value - rep.bound;
  std::printf("primal = %.12g  bound = %.12g  gap = %.12g\n", pr.res.value,
              rep.bound, gap);
  if (gap < -10.0 * ins.rc.dual.inner.tol * (1.0 + std::fabs(rep.bound))) {
    std::printf("weak duality VIOLATED\n");
    return kExitPropertyFail;
  }
  return pr.res.converged && rep.converged ? kExitOk : kExitNoConverge;
}

int run_el_check(const RunConfig& rc) {
  const Instance ins = make_instance(rc);
  if (!ins.gen.exact_quadratic)
    throw ConfigError(
        "el-check cross-validates the quadratic generator; set "
        "generator.kind = quadratic");
  const int steps = ins.tree.depth();
  const double dt = ins.tree.dt();
  std::vector<std::pair<std::string, std::vector<double>>> kernels;
  kernels.emplace_back("const(0)", std::vector<double>(steps, 0.0));
  kernels.emplace_back("const(0.5)", std::vector<double>(steps, 0.5));
  const double qhi = std::min(1.0, 0.9 / ins.tree.sqrt_dt());
  {
    char name[32];
    std::snprintf(name, sizeof name, "const(%.6g)", qhi);
    kernels.emplace_back(name, std::vector<double>(steps, qhi));
  }
  if (steps >= 2) {
    std::vector<double> stepk(steps, -0.5);
    for (int k = 0; k < steps / 2; ++k) stepk[k] = 0.5;
    kernels.emplace_back("step(0.5,-0.5)", std::move(stepk));
  }
  if (!rc.dual.q_fixed.empty())
    kernels.emplace_back(
        "fixed", expand_levels(rc.dual.q_fixed, steps, "dual.q_fixed"));

  // Fine cells aligned with the level grid so piecewise-constant kernels
  // integrate without quadrature error at the breaks.
  const int mult = (rc.dual.el_n_fine + steps - 1) / steps;
  const int n_fine = std::max(1, mult) * steps;

  std::string csv = "q-spec,N_fine,closed_form,oracle,rel_err\n";
  bool oracle_ok = true;
  for (const auto& [name, levels] : kernels) {
    const ElSolution el = el_optimizer(ins.tree, levels, rc.z0);
    auto q_of_t = [&](double t) {
      int k = static_cast<int>(t / dt);
      k = std::clamp(k, 0, steps - 1);
      return levels[static_cast<std::size_t>(k)];
    };
    const QpOracleResult qp =
        qp_inner_oracle(q_of_t, ins.tree.grid().horizon, rc.z0, n_fine);
    const double cf = el.estar_ct;  // exact continuum piecewise integrals
    const double rel_err =
        std::fabs(cf - qp.estar) / std::max(std::fabs(cf), 1e-12);
    csv += name + "," + std::to_string(n_fine) + "," + fmt(cf) + "," +
           fmt(qp.estar) + "," + fmt(rel_err) + "\n";
    std::printf(
        "%-16s estar_tree=%-12.8g estar_oracle=%-12.8g closed=%-12.8g "
        "f1=%.8g f2=%.8g f1_oracle=%.8g f2_oracle=%.8g\n",
        name.c_str(), el.estar, qp.estar, cf, el.min_f1, el.min_f2, qp.min_f1,
        qp.min_f2);
    // The oracle discretizes the same continuum values the exact piecewise
    // integrals compute; midpoint consistency keeps them within O(h^2).
    if (std::fabs(qp.estar - el.estar_ct) >
        1e-4 * (1.0 + std::fabs(el.estar_ct)))
      oracle_ok = false;
  }
  write_text(out_path(rc, "elcheck.csv"), csv);
  if (!oracle_ok) {
    std::printf("oracle disagreement beyond tolerance\n");
    return kExitPropertyFail;
  }
  return kExitOk;
}

namespace {

struct Property {
  std::string name;
  bool ok = false;
  std::string detail;
};

void check(std::vector<Property>& props, const std::string& name, bool ok,
           const std::string& detail) {
  props.push_back({name, ok, detail});
}

std::string g3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

}  // namespace

int run_suite(const RunConfig& rc) {
  const Instance ins = make_instance(rc);
  std::vector<Property> props;

  // --- measure kernels: exact normalization and density consistency.
  {
    std::vector<double> q(ins.tree.depth(), 0.3);
    const GirsanovMeasure mu = girsanov_reweight(ins.tree, q);
    const std::vector<double> ones(ins.tree.leaf_count(), 1.0);
    const double norm = expectation(ins.tree, ones, mu);
    check(props, "measure_normalization_exact", norm == 1.0,
          "sum of reweighted leaf masses = " + fmt(norm));
    std::vector<double> vx(ins.tree.leaf_count());
    for (std::size_t j = 0; j < vx.size(); ++j)
      vx[j] = mu.density[ins.tree.leaf_begin() + j] * ins.xi[j];
    const double lhs = expectation(ins.tree, ins.xi, mu);
    const double rhs = expectation(ins.tree, vx);
    const double err = std::fabs(lhs - rhs);
    check(props, "density_consistency", err <= 1e-12 * (1.0 + std::fabs(lhs)),
          "|E_Q[xi] - E_P[v xi]| = " + g3(err));
    const double emass = expectation(ins.tree, std::vector<double>(
        mu.density.v.begin() + ins.tree.leaf_begin(), mu.density.v.end()));
    check(props, "density_is_martingale", emass == 1.0,
          "E_P[v_T] = " + fmt(emass));
  }

  // --- generator certificates on the configured generator.
  {
    const CertReport cc = certify_convexity(ins.gen, rc.seed);
    check(props, "generator_convexity_sampled", cc.ok,
          "worst midpoint margin " + g3(cc.worst_margin));
    if (ins.gen.flag_dgc) {
      const CertReport dg = certify_dgc(ins.gen, rc.seed + 1);
      check(props, "generator_growth_floor_sampled", dg.ok,
            "worst floor margin " + g3(dg.worst_margin));
    }
    if (ins.gen.grad) {
      std::vector<std::array<double, 5>> pts = {{0.1, 0.0, 0.3, -0.4, 0.1},
                                                {0.5, 0.0, -0.2, 0.7, -0.05},
                                                {0.9, 0.0, 1.1, -0.3, 0.02}};
      // Keep probe points inside any gamma band.
      if (ins.gen.domain.gamma_band)
        for (auto& p : pts)
          p[4] = std::clamp(p[4], -*ins.gen.domain.gamma_band,
                            *ins.gen.domain.gamma_band);
      const FdCheckReport fd = fd_subgradient_check(ins.gen, pts);
      check(props, "gradient_fd_agreement", fd.ok,
            "worst rel err " + g3(fd.worst_rel));
    }
  }

  // --- control synthesis invariants on seeded random controls.
  {
    std::mt19937_64 rng(rc.seed + 7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    AdaptedProcess d = make_process(ins.tree, ProcessRole::delta);
    AdaptedProcess g = make_process(ins.tree, ProcessRole::gamma);
    for (std::size_t id = 0; id < ins.tree.nonleaf_count(); ++id) {
      d.v[id] = u(rng);
      g.v[id] = u(rng);
    }
    const ControlTriple ct = synthesize(ins.tree, rc.z0, d, g);
    const ZBoundReport zb = z_l2_bound(ins.tree, ct);
    check(props, "z_norm_structural_bound", zb.ok,
          "||Z|| = " + g3(zb.actual) + " <= " + g3(zb.bound));
    const ThetaReport th = verify_theta_M(ins.tree, ct, 2.0);
    check(props, "controls_in_declared_ball", th.ok,
          "|Delta| " + g3(th.delta_norm) + ", |Gamma| " + g3(th.gamma_norm));
  }

  // --- primal solver properties on the configured instance.
  const PrimalOutcome base = solve_primal(ins);
  {
    check(props, "witness_verifies", base.ver.ok,
          "worst slack " + g3(base.ver.worst_slack) + ", terminal " +
              g3(base.ver.worst_terminal));
    check(props, "compensator_nondecreasing", base.dec.increasing_ok,
          "worst increment " + g3(base.dec.worst_increment));
    check(props, "value_supermartingale", base.smg.ok,
          "worst slack " + g3(base.smg.worst_slack));

    const double margin = 2.0 * ins.rc.solver.effective_tol(base.res.value);

    // Cash additivity: shifting the terminal condition shifts the value.
    TerminalCondition xic = ins.xi;
    for (auto& x : xic) x += 0.35;
    const auto resc =
        minimal_value(ins.tree, ins.gen, xic, rc.z0, ins.rc.solver);
    const double cash_err = std::fabs(resc.value - base.res.value - 0.35);
    check(props, "cash_additivity", cash_err <= margin,
          "|value(xi+c) - value(xi) - c| = " + g3(cash_err));

    // Monotonicity: xi <= xi' pointwise implies value <= value'.
    TerminalCondition xim = ins.xi;
    for (std::size_t j = 0; j < xim.size(); ++j)
      xim[j] += 0.25 + 0.25 * std::fabs(ins.tree.w(ins.tree.leaf_begin() + j));
    const auto resm =
        minimal_value(ins.tree, ins.gen, xim, rc.z0, ins.rc.solver);
    check(props, "monotone_in_terminal",
          resm.value >= base.res.value - margin,
          fmt(base.res.value) + " -> " + fmt(resm.value));

    // Convexity in the terminal condition (midpoint mix).
    TerminalCondition xl(ins.xi.size()), xr(ins.xi.size()), xmid(ins.xi.size());
    for (std::size_t j = 0; j < ins.xi.size(); ++j) {
      const double w = ins.tree.w(ins.tree.leaf_begin() + j);
      xl[j] = std::fabs(w);
      xr[j] = std::max(w, 0.0) * 2.0;
      xmid[j] = 0.5 * (xl[j] + xr[j]);
    }
    const double vl = minimal_value(ins.tree, ins.gen, xl, rc.z0,
                                    ins.rc.solver).value;
    const double vr = minimal_value(ins.tree, ins.gen, xr, rc.z0,
                                    ins.rc.solver).value;
    const double vm = minimal_value(ins.tree, ins.gen, xmid, rc.z0,
                                    ins.rc.solver).value;
    check(props, "convex_in_terminal", vm <= 0.5 * (vl + vr) + margin,
          "mix " + fmt(vm) + " vs avg " + fmt(0.5 * (vl + vr)));
  }

  // --- duality properties.
  {
    const double margin =
        10.0 * ins.rc.dual.inner.tol * (1.0 + std::fabs(base.res.value)) +
        1e-12;
    bool weak = true;
    std::string detail;
    std::vector<std::vector<double>> qs = {
        std::vector<double>(ins.tree.depth(), 0.0),
        std::vector<double>(ins.tree.depth(), 0.4),
        std::vector<double>(ins.tree.depth(), -0.4)};
    if (ins.tree.depth() >= 2) {
      std::vector<double> stepk(ins.tree.depth(), -0.5);
      for (int k = 0; k < ins.tree.depth() / 2; ++k) stepk[k] = 0.5;
      qs.push_back(std::move(stepk));
    }
    for (const auto& q : qs) {
      const GirsanovMeasure mu = girsanov_reweight(ins.tree, q);
      const DualReport rep =
          dual_bound(ins.tree, ins.gen, ins.xi, rc.z0, mu, DualMethod::numeric,
                     ins.rc.dual.inner, base.res.value);
      if (*rep.gap < -margin) {
        weak = false;
        detail = "violated at kernel " + rep.kernel + " by " + g3(-*rep.gap);
        break;
      }
    }
    check(props, "weak_duality_sampled_kernels", weak,
          weak ? "all sampled bounds below the primal value" : detail);

    if (ins.gen.exact_quadratic) {
      const std::vector<double> q(ins.tree.depth(), 0.5);
      const GirsanovMeasure mu = girsanov_reweight(ins.tree, q);
      const InnerResult inner =
          inner_value_numeric(ins.tree, ins.gen, mu, rc.z0, ins.rc.dual.inner);
      const double cf =
          inner_value_closed_form(ins.tree, ins.gen, q, rc.z0);
      const double diff = std::fabs(inner.estar - cf);
      check(props, "closed_form_vs_numeric_first_order",
            diff <= 1.0 * ins.tree.dt() * (1.0 + std::fabs(cf)),
            "difference " + g3(diff) + " at dt " + g3(ins.tree.dt()));
      check(props, "inner_optimizer_unique_across_restarts",
            inner.nodewise_spread <= 1e-3,
            "nodewise spread " + g3(inner.nodewise_spread));
    }

    // Replication: linear terminal, matched z0, reference kernel.
    {
      TerminalCondition lin(ins.tree.leaf_count());
      for (std::size_t j = 0; j < lin.size(); ++j)
        lin[j] = ins.tree.w(ins.tree.leaf_begin() + j);
      SolverConfig scfg = ins.rc.solver;
      const auto res = minimal_value(ins.tree, ins.gen, lin, 1.0, scfg);
      const InnerResult inner = inner_value_numeric(
          ins.tree, ins.gen, reference_measure(ins.tree), 1.0,
          ins.rc.dual.inner);
      const ReconstructReport rec = reconstruct_solution(
          ins.tree, ins.gen, lin, res.value, inner.controls);
      check(props, "replication_reconstructs_terminal",
            std::fabs(res.value) <= 5e-3 && rec.terminal_defect <= 5e-3,
            "value " + g3(res.value) + ", defect " + g3(rec.terminal_defect));
    }

    // Divergence probes for densities that are not proper reweightings.
    {
      std::vector<double> v12(ins.tree.leaf_count(), 1.2);
      const ConjugateProbe p1 = probe_conjugate(ins.tree, v12, 10);
      // Mean exactly 1 (small-integer sums are exact), one negative entry.
      std::vector<double> vneg(ins.tree.leaf_count(), 1.0);
      vneg[0] = -1.0;
      vneg[1] = 3.0;
      const ConjugateProbe p2 = probe_conjugate(ins.tree, vneg, 10);
      check(props, "conjugate_divergence_detected",
            p1.divergent && p1.mode == ConjugateProbe::Mode::constants &&
                p2.divergent,
            "growth " + g3(p1.growth) + " / " + g3(p2.growth));
    }
  }

  json j;
  j["artifact"] = "suite";
  j["version"] = kVersion;
  j["config_hash"] = ins.hash;
  bool all_ok = true;
  json arr = json::array();
  for (const auto& p : props) {
    arr.push_back({{"name", p.name}, {"ok", p.ok}, {"detail", p.detail}});
    all_ok = all_ok && p.ok;
    std::printf("[%s] %-40s %s\n", p.ok ? "pass" : "FAIL", p.name.c_str(),
                p.detail.c_str());
  }
  j["properties"] = arr;
  j["all_ok"] = all_ok;
  write_json(out_path(rc, "suite.json"), j);
  std::printf("%zu properties, %s\n", props.size(),
              all_ok ? "all passed" : "FAILURES PRESENT");
  return all_ok ? kExitOk : kExitPropertyFail;
}

}  // namespace bsde
