#ifndef ORBITLAB_DRIVER_HPP
#define ORBITLAB_DRIVER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "orbitlab/lattice.hpp"

namespace orbitlab {

// Flat key=value experiment configuration.  A run is reproducible from the
// config plus the code version; the seed feeds every random stream.
struct ExperimentConfig {
  LatticeId lattice = LatticeId::SL2_GaussianIntegers;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string cache_dir;  // empty: <out>/cache, overridden by ORBITLAB_CACHE_DIR
  int threads = 1;

  double alpha = 0.5;
  double epsilon = 0.02;
  double kappa = 0.05;
  double beta0 = 1e-2;
  double eta = 0.008;
  int cache_depth = 6;
  int samples = 10000;
  double t = 12.0;
  double radius = 4.0;  // test-function radius

  std::map<std::string, std::string> extra;  // unrecognized keys, kept verbatim
};

// parse `key = value` lines; '#' comments; unknown keys land in extra
bool parse_config_file(const std::string& path, ExperimentConfig& cfg, std::string* err);
bool apply_config_line(const std::string& line, ExperimentConfig& cfg);

struct RunResult {
  int exit_code = 1;  // 0: all asserted invariants pass
  std::string summary;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> content
};

// execute one subcommand suite; artifacts carry a `# generated_at=` header
// line, everything below it is deterministic in (config, seed)
RunResult run_subcommand(const std::string& name, const ExperimentConfig& cfg);

std::vector<std::string> subcommand_names();

// write artifacts under cfg.out_dir; returns false on I/O failure
bool write_artifacts(const RunResult& result, const ExperimentConfig& cfg);

// strip the generated_at header for byte-identical comparisons
std::string strip_timestamp_header(const std::string& artifact);

}  // namespace orbitlab

#endif
