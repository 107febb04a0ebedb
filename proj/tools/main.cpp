#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "driver.hpp"

int main(int argc, char** argv) {
  CLI::App app{"orbitlab: computational experiments for upper-triangular orbits in SL2 quotients"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir, sub;
  std::uint64_t seed = 0;
  bool seed_set = false, out_set = false;
  int threads = 0;

  app.add_option("--config", config_path, "flat key=value config file");
  auto* seed_opt = app.add_option("--seed", seed, "64-bit master seed");
  auto* out_opt = app.add_option("--out", out_dir, "artifact output directory");
  app.add_option("--threads", threads, "worker threads (results are thread-count invariant)");

  for (const std::string& name : orbitlab::subcommand_names())
    app.add_subcommand(name, "run the " + name + " suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  seed_set = seed_opt->count() > 0;
  out_set = out_opt->count() > 0;

  auto subs = app.get_subcommands();
  if (subs.empty()) {
    std::fprintf(stderr, "usage: orbitlab [--config F] [--seed N] [--out DIR] [--threads N] <subcommand>\n");
    std::fprintf(stderr, "subcommands:");
    for (const std::string& name : orbitlab::subcommand_names())
      std::fprintf(stderr, " %s", name.c_str());
    std::fprintf(stderr, "\n");
    return 2;
  }
  sub = subs.front()->get_name();

  orbitlab::ExperimentConfig cfg;
  if (!config_path.empty()) {
    std::string err;
    if (!orbitlab::parse_config_file(config_path, cfg, &err)) {
      std::fprintf(stderr, "config error: %s\n", err.c_str());
      return 2;
    }
  }
  if (seed_set) cfg.seed = seed;
  if (out_set) cfg.out_dir = out_dir;
  if (threads > 0) cfg.threads = threads;

  orbitlab::RunResult res = orbitlab::run_subcommand(sub, cfg);
  if (res.exit_code == 2) {
    std::fprintf(stderr, "%s\n", res.summary.c_str());
    return 2;
  }
  if (!orbitlab::write_artifacts(res, cfg)) {
    std::fprintf(stderr, "failed to write artifacts under %s\n", cfg.out_dir.c_str());
    return 1;
  }
  std::printf("%s [%s]\n", res.summary.c_str(), res.exit_code == 0 ? "pass" : "FAIL");
  return res.exit_code;
}
