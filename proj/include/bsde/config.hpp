#pragma once

/// Run configuration: INI or JSON in, validated structs out, plus the
/// builders that turn declarative sections into generator specs and terminal
/// conditions, and the canonical serialization whose FNV-1a hash stamps
/// every artifact (same config + seed => byte-identical outputs).

#include <cstdint>
#include <string>
#include <vector>

#include "bsde/dual.hpp"
#include "bsde/generator.hpp"
#include "bsde/lattice.hpp"
#include "bsde/primal.hpp"

namespace bsde {

struct TreeConfig {
  double horizon = 1.0;
  int steps = 4;
  int depth_cap = ScenarioTree::kDefaultDepthCap;
  std::vector<int> refine;  // optional ladder for refinement studies
};

struct GeneratorConfig {
  std::string kind = "quadratic";  // quadratic | quadratic_delta |
                                   // gamma_band | shortsell_box | polynomial
  std::string inner = "quadratic_delta";  // inner spec for band / box
  double band_m = 0.25;                   // gamma_band halfwidth (0 allowed)
  double z_lo = -1.0, z_hi = 1.0;         // shortsell_box
  double a = 1.0, p = 2.0, b = 1.0, r = 2.0, c0 = 0.0;  // polynomial
};

struct PayoffConfig {
  std::string kind = "abs";  // constant | linear | abs | call | table
  double c = 0.0;            // constant level / linear offset
  double a = 1.0;            // linear slope: xi = a W_T + c
  double strike = 0.0;       // call: max(W_T - strike, 0)
  std::vector<double> table;  // inline leaf values (size 2^steps)
  std::string table_file;     // or one value per line
};

struct DualRunConfig {
  int pieces = 1;
  double q_max = 2.0;
  int outer_sweeps = 8;
  std::string method = "numeric";  // numeric | closed_form
  bool nodewise = false;
  double line_tol = 1e-4;
  std::vector<double> q_fixed;  // skip the outer search when non-empty
  int el_n_fine = 2000;         // fine grid for the el-check oracle
  InnerConfig inner;
};

struct RunConfig {
  TreeConfig tree;
  GeneratorConfig gen;
  PayoffConfig payoff;
  SolverConfig solver;
  DualRunConfig dual;
  double z0 = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
};

/// Parses INI (sections, key = value, '#'/';' comments) or JSON (detected by
/// a leading '{' or a .json extension). Unknown sections or keys, malformed
/// values and size violations throw ConfigError with the offending line.
RunConfig load_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, bool is_json,
                            const std::string& origin);

/// Materializes the declarative sections. build_generator understands
/// band_m = 0 as the degenerate band {gamma = 0} (a direct construction;
/// the general band factory requires a positive halfwidth).
GeneratorSpec build_generator(const GeneratorConfig& gc);
TerminalCondition build_payoff(const PayoffConfig& pc,
                               const ScenarioTree& tree);

/// Canonical JSON rendering (sorted keys, round-trip doubles) and its
/// 64-bit FNV-1a hash in hex.
std::string canonical_json(const RunConfig& rc);
std::string config_hash(const RunConfig& rc);

}  // namespace bsde
