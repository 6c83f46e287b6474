#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "qrhf/errors.hpp"
#include "qrhf/parallel.hpp"

using namespace qrhf;

int main(int argc, char** argv) {
  CLI::App app{"Quasi-1D reduced Hartree-Fock crystals and junctions"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  int threads = 0;
  long long seed = -1;
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads (overrides QRHF_THREADS)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", seed, "seed for randomized checks (overrides the config)")->check(CLI::NonNegativeNumber);
  app.fallthrough();  // lets flags follow the subcommand; must precede add_subcommand
  for (const char* name : {"greens", "bands", "scf", "junction", "defect", "verify"}) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::validation);
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    cli::RunConfig cfg = cli::load_config(config_path);
    if (!cfg.command.empty() && cfg.command != command)
      throw ValidationError("config is for '" + cfg.command + "', not '" + command + "'");
    if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);
    if (threads > 0)
      set_thread_count(threads);
    else if (cfg.threads > 0 && !std::getenv("QRHF_THREADS"))
      set_thread_count(cfg.threads);
    cli::run_command(command, cfg, out_dir.empty() ? cfg.output : out_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return static_cast<int>(ExitCode::internal);
  }
  return 0;
}
