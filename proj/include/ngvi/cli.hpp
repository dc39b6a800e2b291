#pragma once

// Experiment runner behind the `ngvi` executable: configuration, single runs,
// step-size sweeps, certification and figure replication.
//
// Configs are flat JSON objects with dotted keys ("box.U", "schedule.kind").
// Every key has a default; unknown keys are rejected.

#include "ngvi/diagnostics.hpp"
#include "ngvi/models.hpp"
#include "ngvi/optimizers.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ngvi::cli {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exit codes of the executable.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;

/// Environment variable naming the default output directory.
constexpr const char* kOutputDirEnv = "NGVI_OUTPUT_DIR";

std::string code_version();

/// Every accepted key with its default value.
const json& config_defaults();

/// Overlays `user` on the defaults.  Throws ConfigError on unknown keys,
/// wrong value types or values out of range.
json resolve_config(const json& user);
json load_config(const std::filesystem::path& path);

struct ExperimentSetup {
  json config;  // resolved
  LikelihoodModel model;
  ExpectationParams w0;
  RunOptions options;
  std::filesystem::path output_dir;
};

/// Builds model, initial point and run options from a resolved config.
/// File-based data sources are loaded here; failures become ConfigError.
ExperimentSetup make_setup(const json& resolved);

/// Deterministic Proj-SNGD estimate of the optimal value on the configured
/// box.  Unless "ell_star.gamma" is set the step is 1 / (2 beta) with beta from
/// the grid certificate.
OptimumEstimate compute_ell_star(const ExperimentSetup& setup);

/// Shortest round-trip decimal form; NaN as "nan".
std::string format_double(double v);

/// Header `t,gamma,elbo,grad_norm,bfbe,elapsed_s`.  elapsed_s is written as 0
/// unless `timing` is set, so that traces are reproducible byte for byte.
std::string trace_csv(const OptimizerTrace& trace, bool timing);

/// Linear-interpolation quantile (type 7) of a non-empty sample.
double quantile(std::vector<double> values, double p);

/// `run`: writes trace.csv and meta.json.  Returns kExitOk or kExitDiverged.
int cmd_run(const json& resolved);

struct SweepOptions {
  std::vector<double> gammas;
  double threshold = 0.0;
  /// Threshold read as the fraction r in l* + r (l(w0) - l*).
  bool relative = false;
};

struct SweepRow {
  std::string algorithm;
  double gamma0 = 0.0;
  std::uint64_t seed = 0;
  long long iterations = -1;  // -1: not reached within T, or diverged
};

/// `sweep`: one row per (algorithm, gamma0, seed), written to sweep.csv with a
/// sweep_meta.json beside it.
std::vector<SweepRow> cmd_sweep(const json& resolved, const SweepOptions& sweep);

/// Comma-separated list of reals.
std::vector<double> parse_gamma_list(const std::string& text);

/// `certify`: writes certificate.json and returns its content.
json cmd_certify(const json& resolved);

/// `replicate`: figure ids poisson_instability, poisson_projection and
/// stepsize_robustness.  Throws ConfigError on unknown ids.
void cmd_replicate(const std::string& figure, const std::filesystem::path& out_dir, std::uint64_t seed = 0);

/// Reads the elbo column of a trace.csv.
std::vector<double> read_trace_elbo(const std::filesystem::path& path);

}  // namespace ngvi::cli
