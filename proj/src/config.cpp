#include "bsde/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "bsde/errors.hpp"

namespace bsde {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& origin, int line,
                       const std::string& what) {
  if (line > 0)
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
  throw ConfigError(origin + ": " + what);
}

double to_double(const std::string& v, const std::string& origin, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return x;
  } catch (const std::exception&) {
  }
  fail(origin, line, "expected a number, got '" + v + "'");
}

int to_int(const std::string& v, const std::string& origin, int line) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (trim(v.substr(pos)).empty()) return static_cast<int>(x);
  } catch (const std::exception&) {
  }
  fail(origin, line, "expected an integer, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& v, const std::string& origin,
                     int line) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (trim(v.substr(pos)).empty()) return x;
  } catch (const std::exception&) {
  }
  fail(origin, line, "expected an unsigned integer, got '" + v + "'");
}

bool to_bool(const std::string& v, const std::string& origin, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(origin, line, "expected a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& v, const std::string& origin,
                               int line) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(item, origin, line));
  }
  return out;
}

std::vector<int> to_ints(const std::string& v, const std::string& origin,
                         int line) {
  std::vector<int> out;
  for (double x : to_doubles(v, origin, line)) out.push_back(static_cast<int>(x));
  return out;
}

void apply_key(RunConfig& rc, const std::string& sec, const std::string& key,
               const std::string& val, const std::string& origin, int line) {
  auto unknown = [&]() {
    fail(origin, line, "unknown key '" + sec + "." + key + "'");
  };
  if (sec == "tree") {
    if (key == "horizon") rc.tree.horizon = to_double(val, origin, line);
    else if (key == "steps") rc.tree.steps = to_int(val, origin, line);
    else if (key == "depth_cap") rc.tree.depth_cap = to_int(val, origin, line);
    else if (key == "refine") rc.tree.refine = to_ints(val, origin, line);
    else unknown();
  } else if (sec == "generator") {
    if (key == "kind") rc.gen.kind = val;
    else if (key == "inner") rc.gen.inner = val;
    else if (key == "band_m") rc.gen.band_m = to_double(val, origin, line);
    else if (key == "z_lo") rc.gen.z_lo = to_double(val, origin, line);
    else if (key == "z_hi") rc.gen.z_hi = to_double(val, origin, line);
    else if (key == "a") rc.gen.a = to_double(val, origin, line);
    else if (key == "p") rc.gen.p = to_double(val, origin, line);
    else if (key == "b") rc.gen.b = to_double(val, origin, line);
    else if (key == "r") rc.gen.r = to_double(val, origin, line);
    else if (key == "c0") rc.gen.c0 = to_double(val, origin, line);
    else unknown();
  } else if (sec == "payoff") {
    if (key == "kind") rc.payoff.kind = val;
    else if (key == "c") rc.payoff.c = to_double(val, origin, line);
    else if (key == "a") rc.payoff.a = to_double(val, origin, line);
    else if (key == "strike") rc.payoff.strike = to_double(val, origin, line);
    else if (key == "table") rc.payoff.table = to_doubles(val, origin, line);
    else if (key == "table_file") rc.payoff.table_file = val;
    else unknown();
  } else if (sec == "solver") {
    if (key == "max_iters") rc.solver.max_iters = to_int(val, origin, line);
    else if (key == "step0") rc.solver.step0 = to_double(val, origin, line);
    else if (key == "step_decay")
      rc.solver.step_decay = to_double(val, origin, line);
    else if (key == "tol_opt") rc.solver.tol_opt = to_double(val, origin, line);
    else if (key == "tol_feas")
      rc.solver.tol_feas = to_double(val, origin, line);
    else if (key == "restarts") rc.solver.restarts = to_int(val, origin, line);
    else if (key == "random_radius")
      rc.solver.random_radius = to_double(val, origin, line);
    else if (key == "polish_sweeps")
      rc.solver.polish_sweeps = to_int(val, origin, line);
    else if (key == "polish_max_nodes")
      rc.solver.polish_max_nodes =
          static_cast<std::size_t>(to_u64(val, origin, line));
    else if (key == "seed") rc.solver.seed = to_u64(val, origin, line);
    else unknown();
  } else if (sec == "dual") {
    if (key == "pieces") rc.dual.pieces = to_int(val, origin, line);
    else if (key == "q_max") rc.dual.q_max = to_double(val, origin, line);
    else if (key == "outer_sweeps")
      rc.dual.outer_sweeps = to_int(val, origin, line);
    else if (key == "method") rc.dual.method = val;
    else if (key == "nodewise") rc.dual.nodewise = to_bool(val, origin, line);
    else if (key == "line_tol") rc.dual.line_tol = to_double(val, origin, line);
    else if (key == "q_fixed") rc.dual.q_fixed = to_doubles(val, origin, line);
    else if (key == "el_n_fine")
      rc.dual.el_n_fine = to_int(val, origin, line);
    else if (key == "inner_max_iters")
      rc.dual.inner.max_iters = to_int(val, origin, line);
    else if (key == "inner_step0")
      rc.dual.inner.step0 = to_double(val, origin, line);
    else if (key == "inner_step_decay")
      rc.dual.inner.step_decay = to_double(val, origin, line);
    else if (key == "inner_tol")
      rc.dual.inner.tol = to_double(val, origin, line);
    else if (key == "inner_restarts")
      rc.dual.inner.restarts = to_int(val, origin, line);
    else if (key == "inner_random_radius")
      rc.dual.inner.random_radius = to_double(val, origin, line);
    else if (key == "inner_seed")
      rc.dual.inner.seed = to_u64(val, origin, line);
    else unknown();
  } else if (sec == "run") {
    if (key == "z0") rc.z0 = to_double(val, origin, line);
    else if (key == "seed") rc.seed = to_u64(val, origin, line);
    else if (key == "threads") rc.threads = to_int(val, origin, line);
    else if (key == "out_dir") rc.out_dir = val;
    else unknown();
  } else {
    fail(origin, line, "unknown section '" + sec + "'");
  }
}

void validate(const RunConfig& rc, const std::string& origin) {
  if (!(rc.tree.horizon > 0.0)) fail(origin, 0, "tree.horizon must be > 0");
  if (rc.tree.steps < 1) fail(origin, 0, "tree.steps must be >= 1");
  if (rc.dual.method != "numeric" && rc.dual.method != "closed_form")
    fail(origin, 0, "dual.method must be numeric or closed_form");
  const std::string& gk = rc.gen.kind;
  if (gk != "quadratic" && gk != "quadratic_delta" && gk != "gamma_band" &&
      gk != "shortsell_box" && gk != "polynomial")
    fail(origin, 0, "generator.kind '" + gk + "' is not recognized");
  const std::string& pk = rc.payoff.kind;
  if (pk != "constant" && pk != "linear" && pk != "abs" && pk != "call" &&
      pk != "table")
    fail(origin, 0, "payoff.kind '" + pk + "' is not recognized");
  if (rc.gen.band_m < 0.0) fail(origin, 0, "generator.band_m must be >= 0");
  if (rc.threads < 0) fail(origin, 0, "run.threads must be >= 0");
}

std::string json_scalar_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += v[i].dump();
    }
    return s;
  }
  return v.dump();
}

}  // namespace

RunConfig parse_config_text(const std::string& text, bool is_json,
                            const std::string& origin) {
  RunConfig rc;
  if (is_json) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      fail(origin, 0, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail(origin, 0, "top level must be an object");
    for (const auto& [sec, body] : j.items()) {
      if (!body.is_object())
        fail(origin, 0, "section '" + sec + "' must be an object");
      for (const auto& [key, val] : body.items())
        apply_key(rc, sec, key, json_scalar_to_string(val), origin, 0);
    }
  } else {
    std::istringstream in(text);
    std::string line, sec;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail(origin, lineno, "unterminated section header");
        sec = trim(s.substr(1, s.size() - 2));
        if (sec.empty()) fail(origin, lineno, "empty section name");
        continue;
      }
      const std::size_t eq = s.find('=');
      if (eq == std::string::npos)
        fail(origin, lineno, "expected 'key = value'");
      if (sec.empty()) fail(origin, lineno, "key before any [section]");
      const std::string key = trim(s.substr(0, eq));
      const std::string val = trim(s.substr(eq + 1));
      if (key.empty()) fail(origin, lineno, "empty key");
      apply_key(rc, sec, key, val, origin, lineno);
    }
  }
  validate(rc, origin);
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  bool is_json = path.size() > 5 && path.substr(path.size() - 5) == ".json";
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    is_json = is_json || c == '{';
    break;
  }
  return parse_config_text(text, is_json, path);
}

GeneratorSpec build_generator(const GeneratorConfig& gc) {
  auto build_inner = [&]() -> GeneratorSpec {
    if (gc.inner == "quadratic_delta") return make_quadratic_delta();
    if (gc.inner == "quadratic") return make_quadratic();
    if (gc.inner == "polynomial")
      return make_custom_polynomial(gc.a, gc.p, gc.b, gc.r, gc.c0);
    throw ConfigError("generator.inner '" + gc.inner + "' is not recognized");
  };
  if (gc.kind == "quadratic") return make_quadratic();
  if (gc.kind == "quadratic_delta") return make_quadratic_delta();
  if (gc.kind == "polynomial")
    return make_custom_polynomial(gc.a, gc.p, gc.b, gc.r, gc.c0);
  if (gc.kind == "shortsell_box")
    return make_shortsell_box(build_inner(), gc.z_lo, gc.z_hi);
  // gamma_band
  GeneratorSpec inner = build_inner();
  if (gc.inner == "quadratic" || (gc.inner == "polynomial" && gc.b != 0.0))
    throw ConfigError(
        "gamma_band needs a gamma-independent inner generator "
        "(quadratic_delta, or polynomial with b = 0)");
  if (gc.band_m > 0.0) return make_gamma_band(std::move(inner), gc.band_m);
  // Degenerate band {gamma = 0}: constructed directly since the factory
  // requires a positive halfwidth. On the domain the inner growth floor is
  // unchanged (gamma contributes zero).
  GeneratorSpec spec = inner;
  spec.name = "gamma_band0(" + inner.name + ")";
  auto ie = inner.eval;
  spec.eval = [ie](double t, double y, double z, double d, double g) {
    return g == 0.0 ? ie(t, y, z, d, 0.0) : kPlusInfinity;
  };
  if (inner.grad) {
    auto ig = inner.grad;
    spec.grad = [ig](double t, double y, double z, double d, double g) {
      auto a = ig(t, y, z, d, g);
      a[2] = 0.0;
      return a;
    };
  }
  spec.domain.gamma_band = 0.0;
  spec.exact_quadratic = false;
  return spec;
}

TerminalCondition build_payoff(const PayoffConfig& pc,
                               const ScenarioTree& tree) {
  const std::size_t n = tree.leaf_count();
  TerminalCondition xi(n);
  if (pc.kind == "constant") {
    for (auto& x : xi) x = pc.c;
  } else if (pc.kind == "linear") {
    for (std::size_t j = 0; j < n; ++j)
      xi[j] = pc.a * tree.w(tree.leaf_begin() + j) + pc.c;
  } else if (pc.kind == "abs") {
    for (std::size_t j = 0; j < n; ++j)
      xi[j] = std::fabs(tree.w(tree.leaf_begin() + j));
  } else if (pc.kind == "call") {
    for (std::size_t j = 0; j < n; ++j)
      xi[j] = std::max(tree.w(tree.leaf_begin() + j) - pc.strike, 0.0);
  } else if (pc.kind == "table") {
    std::vector<double> vals = pc.table;
    if (!pc.table_file.empty()) {
      std::ifstream in(pc.table_file);
      if (!in)
        throw ConfigError(pc.table_file + ": cannot open payoff table file");
      vals.clear();
      double x;
      while (in >> x) vals.push_back(x);
    }
    if (vals.size() != n)
      throw ConfigError("payoff table has " + std::to_string(vals.size()) +
                        " values, tree has " + std::to_string(n) + " leaves");
    xi = std::move(vals);
  } else {
    throw ConfigError("payoff.kind '" + pc.kind + "' is not recognized");
  }
  return xi;
}

std::string canonical_json(const RunConfig& rc) {
  nlohmann::json j;  // std::map storage => keys serialize sorted
  j["tree"] = {{"horizon", rc.tree.horizon},
               {"steps", rc.tree.steps},
               {"depth_cap", rc.tree.depth_cap},
               {"refine", rc.tree.refine}};
  j["generator"] = {{"kind", rc.gen.kind}, {"inner", rc.gen.inner},
                    {"band_m", rc.gen.band_m}, {"z_lo", rc.gen.z_lo},
                    {"z_hi", rc.gen.z_hi},     {"a", rc.gen.a},
                    {"p", rc.gen.p},           {"b", rc.gen.b},
                    {"r", rc.gen.r},           {"c0", rc.gen.c0}};
  j["payoff"] = {{"kind", rc.payoff.kind},     {"c", rc.payoff.c},
                 {"a", rc.payoff.a},           {"strike", rc.payoff.strike},
                 {"table", rc.payoff.table},   {"table_file", rc.payoff.table_file}};
  j["solver"] = {{"max_iters", rc.solver.max_iters},
                 {"step0", rc.solver.step0},
                 {"step_decay", rc.solver.step_decay},
                 {"tol_opt", rc.solver.tol_opt},
                 {"tol_feas", rc.solver.tol_feas},
                 {"restarts", rc.solver.restarts},
                 {"random_radius", rc.solver.random_radius},
                 {"polish_sweeps", rc.solver.polish_sweeps},
                 {"polish_max_nodes", rc.solver.polish_max_nodes},
                 {"seed", rc.solver.seed}};
  j["dual"] = {{"pieces", rc.dual.pieces},
               {"q_max", rc.dual.q_max},
               {"outer_sweeps", rc.dual.outer_sweeps},
               {"method", rc.dual.method},
               {"nodewise", rc.dual.nodewise},
               {"line_tol", rc.dual.line_tol},
               {"q_fixed", rc.dual.q_fixed},
               {"el_n_fine", rc.dual.el_n_fine},
               {"inner_max_iters", rc.dual.inner.max_iters},
               {"inner_step0", rc.dual.inner.step0},
               {"inner_step_decay", rc.dual.inner.step_decay},
               {"inner_tol", rc.dual.inner.tol},
               {"inner_restarts", rc.dual.inner.restarts},
               {"inner_random_radius", rc.dual.inner.random_radius},
               {"inner_seed", rc.dual.inner.seed}};
  // threads and out_dir are execution environment, not part of the instance:
  // identical config + seed must hash identically for any worker count.
  j["run"] = {{"z0", rc.z0}, {"seed", rc.seed}};
  return j.dump();
}

std::string config_hash(const RunConfig& rc) {
  const std::string s = canonical_json(rc);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bsde
