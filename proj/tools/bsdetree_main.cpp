// Command-line front end: primal / dual / gap / el-check / suite.
// Exit codes: 0 ok, 1 configuration error, 2 non-convergence,
// 3 property failure.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "bsde/errors.hpp"
#include "bsde/parallel.hpp"
#include "bsde/run.hpp"
#include "bsde/version.hpp"

namespace {

struct CliArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* sub, CliArgs& args) {
  sub->add_option("--config", args.config, "configuration file (INI or JSON)")
      ->required();
  sub->add_option("--out", args.out, "output directory (overrides run.out_dir)");
  sub->add_option("--seed", args.seed, "master seed (overrides run.seed)");
  sub->add_option("--threads", args.threads,
                  "worker threads: 1 = serial, 0 = library default "
                  "(overrides run.threads)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "minimal supersolution values of constrained-control backward "
      "equations on binary scenario trees, with convex-duality lower bounds"};
  app.set_version_flag("--version", bsde::kVersion);
  app.require_subcommand(1);

  CliArgs args;
  CLI::App* primal = app.add_subcommand(
      "primal", "minimal value, witness processes and verification report");
  CLI::App* dual = app.add_subcommand(
      "dual", "lower bound via the conjugate penalty (DualReport JSON)");
  CLI::App* gap =
      app.add_subcommand("gap", "primal and dual together with the gap");
  CLI::App* elcheck = app.add_subcommand(
      "el-check", "cross-validation table of the stationary inner solutions");
  CLI::App* suite =
      app.add_subcommand("suite", "property battery; nonzero exit on failure");
  for (CLI::App* s : {primal, dual, gap, elcheck, suite}) add_common(s, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bsde::kExitConfig;
  }

  try {
    bsde::RunConfig rc = bsde::load_config(args.config);
    CLI::App* active = app.get_subcommands().front();
    if (active->count("--out")) rc.out_dir = args.out;
    if (active->count("--seed")) rc.seed = args.seed;
    if (active->count("--threads")) rc.threads = args.threads;
    bsde::set_max_threads(rc.threads);
    if (active == primal) return bsde::run_primal(rc);
    if (active == dual) return bsde::run_dual(rc);
    if (active == gap) return bsde::run_gap(rc);
    if (active == elcheck) return bsde::run_el_check(rc);
    return bsde::run_suite(rc);
  } catch (const bsde::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return bsde::kExitConfig;
  } catch (const bsde::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return bsde::kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return bsde::kExitConfig;
  }
}
