#pragma once

/// Subcommand drivers shared by the CLI and the end-to-end tests. Each
/// driver builds the instance from a validated RunConfig, writes its
/// artifacts under out_dir (no timestamps; %.17g CSV numbers; canonical
/// JSON) and returns a process exit code:
///   0 ok, 2 non-convergence, 3 property failure
/// (configuration problems throw ConfigError and map to exit code 1 in the
/// CLI).

#include <string>

#include "bsde/config.hpp"

namespace bsde {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNoConverge = 2;
inline constexpr int kExitPropertyFail = 3;

int run_primal(const RunConfig& rc);
int run_dual(const RunConfig& rc);
int run_gap(const RunConfig& rc);
int run_el_check(const RunConfig& rc);
int run_suite(const RunConfig& rc);

}  // namespace bsde
