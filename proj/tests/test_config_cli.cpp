// Configuration parsing, declarative builders, canonical hashing, and the
// command-line interface end to end (artifact determinism and exit codes).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bsde/config.hpp"
#include "bsde/errors.hpp"
#include "bsde/lattice.hpp"
#include "bsde/run.hpp"

using namespace bsde;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(BSDE_CLI_PATH) + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult res;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) res.output.append(buf, n);
  const int status = pclose(pipe);
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string shipped(const char* name) {
  return (fs::path(BSDE_CONFIG_DIR) / name).string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const char* name) {
  fs::path p = fs::path("cli_scratch") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const char* name, const std::string& text) {
  const fs::path dir = fs::path("cli_scratch") / "configs";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

}  // namespace

TEST_CASE("ini parsing: every section round-trips") {
  const std::string text =
      "[tree]\n"
      "horizon = 2.0\n"
      "steps = 6\n"
      "depth_cap = 12\n"
      "refine = 2, 4, 6\n"
      "[generator]\n"
      "kind = gamma_band\n"
      "inner = quadratic_delta\n"
      "band_m = 0.5\n"
      "[payoff]\n"
      "kind = call\n"
      "strike = 0.25\n"
      "[solver]\n"
      "max_iters = 123\n"
      "tol_opt = 1e-5\n"
      "seed = 99\n"
      "[dual]\n"
      "pieces = 3\n"
      "method = closed_form\n"
      "q_fixed = 0.1, -0.2, 0.3\n"
      "inner_tol = 1e-9\n"
      "[run]\n"
      "z0 = 0.5\n"
      "seed = 17\n"
      "threads = 2\n";
  const RunConfig rc = parse_config_text(text, false, "inline");
  CHECK(rc.tree.horizon == 2.0);
  CHECK(rc.tree.steps == 6);
  CHECK(rc.tree.depth_cap == 12);
  CHECK(rc.tree.refine == std::vector<int>{2, 4, 6});
  CHECK(rc.gen.kind == "gamma_band");
  CHECK(rc.gen.inner == "quadratic_delta");
  CHECK(rc.gen.band_m == 0.5);
  CHECK(rc.payoff.kind == "call");
  CHECK(rc.payoff.strike == 0.25);
  CHECK(rc.solver.max_iters == 123);
  CHECK(rc.solver.tol_opt == 1e-5);
  CHECK(rc.solver.seed == 99);
  CHECK(rc.dual.pieces == 3);
  CHECK(rc.dual.method == "closed_form");
  CHECK(rc.dual.q_fixed == std::vector<double>{0.1, -0.2, 0.3});
  CHECK(rc.dual.inner.tol == 1e-9);
  CHECK(rc.z0 == 0.5);
  CHECK(rc.seed == 17);
  CHECK(rc.threads == 2);
}

TEST_CASE("json parsing: same semantics, same canonical form and hash") {
  const std::string ini =
      "[tree]\nsteps = 5\n[payoff]\nkind = linear\na = 2.0\n"
      "[run]\nseed = 21\n";
  const std::string json_text =
      R"({"tree": {"steps": 5}, "payoff": {"kind": "linear", "a": 2.0},)"
      R"( "run": {"seed": 21}})";
  const RunConfig a = parse_config_text(ini, false, "inline.ini");
  const RunConfig b = parse_config_text(json_text, true, "inline.json");
  CHECK(canonical_json(a) == canonical_json(b));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);

  // comments and key order do not affect the hash; values do
  const std::string reordered =
      "# a comment\n[run]\nseed = 21\n[payoff]\na = 2.0\nkind = linear\n"
      "[tree]\nsteps = 5\n";
  CHECK(config_hash(parse_config_text(reordered, false, "r")) ==
        config_hash(a));
  const std::string different =
      "[tree]\nsteps = 5\n[payoff]\nkind = linear\na = 2.0\n"
      "[run]\nseed = 22\n";
  CHECK(config_hash(parse_config_text(different, false, "d")) !=
        config_hash(a));
}

TEST_CASE("parsing errors carry the file and line") {
  const auto expect_error = [](const std::string& text,
                               const std::string& needle) {
    try {
      parse_config_text(text, false, "bad.ini");
      FAIL_CHECK("expected a configuration error for: " << needle);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      CHECK(what.find("bad.ini") != std::string::npos);
      CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
    }
  };
  expect_error("[tree]\nstepz = 4\n", "unknown key 'tree.stepz'");
  expect_error("[tree]\nstepz = 4\n", ":2:");  // line number
  expect_error("[orbit]\nx = 1\n", "unknown section");
  expect_error("steps = 4\n", "key before any [section]");
  expect_error("[tree]\nsteps = four\n", "expected an integer");
  expect_error("[tree]\nsteps = 0\n", "tree.steps must be >= 1");
  expect_error("[tree]\nhorizon = -1\n", "tree.horizon must be > 0");
  expect_error("[generator]\nkind = cubic\n", "not recognized");
  expect_error("[payoff]\nkind = put\n", "not recognized");
  expect_error("[dual]\nmethod = magic\n", "dual.method");
  expect_error("[tree\nsteps = 4\n", "unterminated section header");

  CHECK_THROWS_AS(load_config("no_such_file.ini"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("{not json", true, "x.json"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"tree": 3})", true, "x.json"),
                  ConfigError);
}

TEST_CASE("shipped configs: INI and JSON twins hash identically") {
  const RunConfig ini = load_config(shipped("quadratic_n4.ini"));
  const RunConfig js = load_config(shipped("quadratic_n4.json"));
  CHECK(canonical_json(ini) == canonical_json(js));
  CHECK(config_hash(ini) == config_hash(js));
  for (const char* name :
       {"gamma_band.ini", "gamma_band_zero.ini", "replication.ini",
        "elcheck_n8.ini"})
    CHECK_NOTHROW(load_config(shipped(name)));
}

TEST_CASE("build_generator: kinds, degenerate band, invalid compositions") {
  GeneratorConfig gc;
  gc.kind = "quadratic";
  CHECK(build_generator(gc).exact_quadratic);

  gc.kind = "gamma_band";
  gc.inner = "quadratic_delta";
  gc.band_m = 0.25;
  const GeneratorSpec band = build_generator(gc);
  CHECK(band.domain.gamma_band.has_value());
  CHECK(*band.domain.gamma_band == 0.25);

  // degenerate halfwidth: diffusion control pinned to zero
  gc.band_m = 0.0;
  const GeneratorSpec pinned = build_generator(gc);
  REQUIRE(pinned.domain.gamma_band.has_value());
  CHECK(*pinned.domain.gamma_band == 0.0);
  CHECK(pinned.eval(0, 0, 0, 1.0, 0.0) == 1.0);
  CHECK(std::isinf(pinned.eval(0, 0, 0, 1.0, 1e-9)));
  CHECK_FALSE(pinned.exact_quadratic);

  // a gamma-dependent inner would silently change the band's meaning
  gc.inner = "quadratic";
  CHECK_THROWS_AS(build_generator(gc), ConfigError);
  gc.inner = "polynomial";
  gc.b = 1.0;
  CHECK_THROWS_AS(build_generator(gc), ConfigError);
  gc.b = 0.0;
  gc.a = 1.0;
  gc.p = 2.0;
  CHECK_NOTHROW(build_generator(gc));

  gc.kind = "shortsell_box";
  gc.inner = "quadratic";
  gc.z_lo = -1.0;
  gc.z_hi = 1.0;
  const GeneratorSpec box = build_generator(gc);
  REQUIRE(box.domain.z_box.has_value());
  CHECK(box.domain.z_box->first == -1.0);
}

TEST_CASE("build_payoff: kinds, inline table, table file, size guard") {
  const ScenarioTree tree = build_tree(1.0, 2);
  PayoffConfig pc;

  pc.kind = "constant";
  pc.c = 2.5;
  CHECK(build_payoff(pc, tree) == TerminalCondition(4, 2.5));

  pc.kind = "linear";
  pc.a = 2.0;
  pc.c = 1.0;
  const TerminalCondition lin = build_payoff(pc, tree);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(lin[j] == 2.0 * tree.w(tree.leaf_begin() + j) + 1.0);

  pc.kind = "abs";
  const TerminalCondition ab = build_payoff(pc, tree);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(ab[j] == std::fabs(tree.w(tree.leaf_begin() + j)));

  pc.kind = "call";
  pc.strike = 0.5;
  const TerminalCondition call = build_payoff(pc, tree);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(call[j] ==
          std::max(tree.w(tree.leaf_begin() + j) - 0.5, 0.0));

  pc.kind = "table";
  pc.table = {1.0, 2.0, 3.0, 4.0};
  CHECK(build_payoff(pc, tree) == pc.table);
  pc.table = {1.0, 2.0};
  CHECK_THROWS_AS(build_payoff(pc, tree), ConfigError);

  pc.table.clear();
  const fs::path tf = write_config("payoff_table.txt", "1\n2\n3\n4\n");
  pc.table_file = tf.string();
  CHECK(build_payoff(pc, tree) == TerminalCondition{1.0, 2.0, 3.0, 4.0});
  pc.table_file = "missing_table.txt";
  CHECK_THROWS_AS(build_payoff(pc, tree), ConfigError);
}

TEST_CASE("cli: version, help and argument errors") {
  CHECK(run_cli("--version").output.find("0.1.0") != std::string::npos);
  CHECK(run_cli("--version").code == 0);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("").code == kExitConfig);           // subcommand required
  CHECK(run_cli("orbit").code == kExitConfig);      // unknown subcommand
  CHECK(run_cli("primal").code == kExitConfig);     // --config required
  CHECK(run_cli("primal --config no_such.ini").code == kExitConfig);
}

TEST_CASE("cli primal: deterministic artifacts, worker-count independence") {
  const fs::path d1 = fresh_dir("primal_1");
  const fs::path d2 = fresh_dir("primal_2");
  const fs::path d3 = fresh_dir("primal_3");
  const std::string cfg = shipped("quadratic_n4.ini");

  const CliResult r1 =
      run_cli("primal --config " + cfg + " --out " + d1.string());
  CHECK_MESSAGE(r1.code == 0, r1.output);
  CHECK(r1.output.find("primal value =") != std::string::npos);

  const CliResult r2 =
      run_cli("primal --config " + cfg + " --out " + d2.string());
  CHECK(r2.code == 0);
  const CliResult r3 = run_cli("primal --config " + cfg + " --out " +
                               d3.string() + " --threads 4");
  CHECK(r3.code == 0);

  for (const char* name : {"report.json", "witness.csv", "refinement.csv"}) {
    CAPTURE(name);
    const std::string b1 = slurp(d1 / name);
    CHECK(b1 == slurp(d2 / name));   // rerun
    CHECK(b1 == slurp(d3 / name));   // different worker count
    CHECK_FALSE(b1.empty());
  }

  const nlohmann::json rep = nlohmann::json::parse(slurp(d1 / "report.json"));
  CHECK(rep.at("config_hash").get<std::string>().size() == 16);
  CHECK(rep.at("converged").get<bool>());
  const double value = rep.at("value").get<double>();
  CHECK(value > 0.5);
  CHECK(value < 2.0);
  CHECK(rep.at("verification").at("ok").get<bool>());
  CHECK(rep.at("supermartingale").at("ok").get<bool>());

  // refinement.csv: header plus one row per ladder entry
  std::istringstream ref(slurp(d1 / "refinement.csv"));
  std::string line;
  REQUIRE(std::getline(ref, line));
  CHECK(line == "steps,value");
  int rows = 0;
  while (std::getline(ref, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("cli primal: JSON twin yields byte-identical artifacts") {
  const fs::path di = fresh_dir("twin_ini");
  const fs::path dj = fresh_dir("twin_json");
  CHECK(run_cli("primal --config " + shipped("quadratic_n4.ini") + " --out " +
                di.string())
            .code == 0);
  CHECK(run_cli("primal --config " + shipped("quadratic_n4.json") +
                " --out " + dj.string())
            .code == 0);
  CHECK(slurp(di / "report.json") == slurp(dj / "report.json"));
  CHECK(slurp(di / "witness.csv") == slurp(dj / "witness.csv"));
}

TEST_CASE("cli primal: seed override changes the artifacts coherently") {
  const fs::path d1 = fresh_dir("seed_a");
  const fs::path d2 = fresh_dir("seed_b");
  const std::string cfg = shipped("quadratic_n4.ini");
  CHECK(run_cli("primal --config " + cfg + " --out " + d1.string()).code == 0);
  CHECK(run_cli("primal --config " + cfg + " --out " + d2.string() +
                " --seed 1234")
            .code == 0);
  const nlohmann::json a = nlohmann::json::parse(slurp(d1 / "report.json"));
  const nlohmann::json b = nlohmann::json::parse(slurp(d2 / "report.json"));
  CHECK(a.at("config_hash") != b.at("config_hash"));
  // same instance, different exploration noise: values agree to tolerance
  CHECK(std::fabs(a.at("value").get<double>() - b.at("value").get<double>()) <=
        1e-3);
}

TEST_CASE("cli primal: degenerate band reports the active constraint") {
  const fs::path dir = fresh_dir("band0");
  const CliResult r = run_cli("primal --config " +
                              shipped("gamma_band_zero.ini") + " --out " +
                              dir.string());
  CHECK_MESSAGE(r.code == 0, r.output);
  const nlohmann::json rep = nlohmann::json::parse(slurp(dir / "report.json"));
  // every interior node sits on the (zero-width) band boundary
  CHECK(rep.at("domain_active_nodes").get<int>() == 15);
  CHECK(rep.at("verification").at("ok").get<bool>());

  // the witness CSV shows a zero diffusion control everywhere
  std::istringstream in(slurp(dir / "witness.csv"));
  std::string line;
  REQUIRE(std::getline(in, line));  // header
  CHECK(line == "node_id,level,t,W,Y,Z,delta,gamma,int_z_dw,A");
  while (std::getline(in, line)) {
    std::size_t start = 0;
    std::array<std::string, 10> cols;
    for (int c = 0; c < 10; ++c) {
      const std::size_t comma = line.find(',', start);
      cols[c] = line.substr(start, comma - start);
      start = comma + 1;
    }
    CHECK(std::stod(cols[7]) == 0.0);  // gamma column
  }
}

TEST_CASE("cli dual: report shape and nondecreasing ascent") {
  const fs::path dir = fresh_dir("dual");
  const CliResult r = run_cli("dual --config " + shipped("quadratic_n4.ini") +
                              " --out " + dir.string());
  CHECK_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("dual bound =") != std::string::npos);

  const nlohmann::json rep =
      nlohmann::json::parse(slurp(dir / "dual_report.json"));
  REQUIRE(rep.is_object());
  CHECK(rep.size() == 7);
  for (const char* key :
       {"kernel", "estar", "bound", "gap", "method", "iterations",
        "tolerance"})
    CHECK(rep.contains(key));
  CHECK(rep.at("gap").is_null());  // no primal value in a dual-only run
  CHECK(rep.at("method") == "numeric");
  CHECK(rep.at("estar").get<double>() >= 0.0);

  std::istringstream in(slurp(dir / "ascent.csv"));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "sweep,coordinate,bound");
  double prev = -1e300;
  int rows = 0;
  while (std::getline(in, line)) {
    const double b = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(b >= prev - 1e-12);
    prev = b;
    ++rows;
  }
  CHECK(rows >= 1);
}

TEST_CASE("cli gap: replication closes the gap") {
  const fs::path dir = fresh_dir("gap");
  const CliResult r = run_cli("gap --config " + shipped("replication.ini") +
                              " --out " + dir.string());
  CHECK_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("gap = ") != std::string::npos);

  const nlohmann::json rep =
      nlohmann::json::parse(slurp(dir / "dual_report.json"));
  REQUIRE(rep.at("gap").is_number());
  CHECK(std::fabs(rep.at("gap").get<double>()) <= 1e-6);
  CHECK(std::fabs(rep.at("bound").get<double>()) <= 1e-6);

  const nlohmann::json prim = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(std::fabs(prim.at("value").get<double>()) <= 1e-6);
}

TEST_CASE("cli el-check: fine oracle passes, coarse oracle fails") {
  const fs::path ok_dir = fresh_dir("elcheck_ok");
  const CliResult ok = run_cli("el-check --config " +
                               shipped("elcheck_n8.ini") + " --out " +
                               ok_dir.string());
  CHECK_MESSAGE(ok.code == 0, ok.output);
  std::istringstream in(slurp(ok_dir / "elcheck.csv"));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "q-spec,N_fine,closed_form,oracle,rel_err");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows >= 4);  // several kernels cross-checked

  // a deliberately coarse oracle grid cannot match the closed form
  const fs::path bad_cfg = write_config(
      "elcheck_coarse.ini",
      "[tree]\nsteps = 2\n[generator]\nkind = quadratic\n"
      "[dual]\nel_n_fine = 2\n[run]\nout_dir = cli_scratch/elcheck_bad\n");
  const CliResult bad = run_cli("el-check --config " + bad_cfg.string());
  CHECK_MESSAGE(bad.code == kExitPropertyFail, bad.output);

  // and a generator without the exact quadratic form is a config error
  const CliResult wrong = run_cli("el-check --config " +
                                  shipped("gamma_band.ini"));
  CHECK(wrong.code == kExitConfig);
}

TEST_CASE("cli primal: hopeless budget reports non-convergence") {
  const fs::path cfg = write_config(
      "no_converge.ini",
      "[tree]\nsteps = 4\n[generator]\nkind = quadratic\n"
      "[payoff]\nkind = abs\n"
      "[solver]\nmax_iters = 1\nrestarts = 3\nrandom_radius = 5.0\n"
      "tol_opt = 1e-12\npolish_sweeps = 0\n"
      "[run]\nout_dir = cli_scratch/no_converge\n");
  const CliResult r = run_cli("primal --config " + cfg.string());
  CHECK_MESSAGE(r.code == kExitNoConverge, r.output);
}

TEST_CASE("cli suite: full property battery passes on the shipped config") {
  const fs::path dir = fresh_dir("suite");
  const CliResult r = run_cli("suite --config " + shipped("quadratic_n4.ini") +
                              " --out " + dir.string());
  CHECK_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("[pass]") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);

  const nlohmann::json rep = nlohmann::json::parse(slurp(dir / "suite.json"));
  CHECK(rep.at("all_ok").get<bool>());
  CHECK(rep.at("properties").size() >= 15);
}
