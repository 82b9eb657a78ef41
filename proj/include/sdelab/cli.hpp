#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdelab/coefficients.hpp"
#include "sdelab/config.hpp"
#include "sdelab/dichotomy.hpp"
#include "sdelab/fixedpoint.hpp"
#include "sdelab/robustness.hpp"
#include "sdelab/sde_engine.hpp"

namespace sdelab::cli {

enum ExitCode : int { kOk = 0, kViolations = 1, kConditionFailed = 2, kNotConverged = 3, kConfigError = 4 };

/// Everything a pipeline needs, read from a config file and overridden by flags.
struct ExperimentConfig {
  CoefficientSpec spec;
  SimGrid grid;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 1;
  std::optional<DichotomyParams> claimed;
  Matrix p0;  // base projection at spec.interval.t0; empty when not given
  std::filesystem::path output_dir = ".";
  double stderr_buffer = 3.0;
  double tol = 1e-4;
  std::size_t max_iter = 50;
  double t_trunc = std::numeric_limits<double>::quiet_NaN();
  std::size_t threads = 0;

  /// Throws ConfigError on invalid combinations.
  void validate() const;
};

/// Keys read in addition to the coefficient keys.
const std::vector<std::string>& experiment_keys();

/// Builds the experiment from a parsed config. Grid keys: grid_start, t_max,
/// dt, node_spacing. Throws ConfigError with the offending line.
ExperimentConfig load_experiment(const ConfigFile& cfg);

/// Collected results of one pipeline, written by emit_summary.
struct PipelineReport {
  std::optional<TransitionEnsemble> ensemble;
  std::vector<std::pair<std::string, MsNormCurve>> curves;  // label, curve
  std::vector<std::pair<std::string, DichotomyParams>> fits;
  std::vector<RobustnessReport> robustness;
  std::vector<std::pair<std::string, std::vector<ConvergenceEntry>>> convergence;
  std::vector<std::pair<std::string, Matrix>> projections;
  std::vector<std::pair<std::string, std::string>> summary;  // key, value
};

/// Writes ensemble.csv, curves.csv, fit.csv, robustness.csv, convergence.csv,
/// projections.csv and summary.txt into dir. Empty parts give header-only files.
void emit_summary(const PipelineReport& report, const std::filesystem::path& dir);

/// Entry point of the command-line tool. Messages go to out and err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace sdelab::cli
