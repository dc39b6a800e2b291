// ngvi: run, sweep, certify and replicate natural-gradient VI experiments.

#include "ngvi/cli.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace {

std::string default_output_dir() {
  const char* env = std::getenv(ngvi::cli::kOutputDirEnv);
  return env && *env ? env : "ngvi_out";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ngvi::cli;

  CLI::App app{"Natural-gradient variational inference experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, gammas, figure;
  double threshold = 0.0;
  bool relative = false;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat JSON config with dotted keys")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
  };
  CLI::App* run = app.add_subcommand("run", "one optimizer run; writes trace.csv and meta.json");
  add_common(run);
  CLI::App* sweep = app.add_subcommand("sweep", "iterations-to-threshold over step sizes and seeds");
  add_common(sweep);
  sweep->add_option("--gammas", gammas, "comma-separated initial step sizes")->required();
  sweep->add_option("--threshold", threshold, "objective threshold")->required();
  sweep->add_flag("--relative", relative, "read the threshold as a fraction of l(w0) - l*");
  CLI::App* certify = app.add_subcommand("certify", "relative-smoothness certificate on the configured box");
  add_common(certify);
  CLI::App* replicate = app.add_subcommand("replicate", "fixed-protocol figure reproduction");
  replicate->add_option("--figure", figure, "poisson_instability, poisson_projection or stepsize_robustness")
      ->required();
  replicate->add_option("--out", out_dir, "output directory")->default_str(default_output_dir());
  replicate->add_option("--seed", seed, "seed for the random initial means");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*replicate) {
      cmd_replicate(figure, out_dir.empty() ? default_output_dir() : out_dir, seed);
      return kExitOk;
    }
    json cfg = load_config(config_path);
    if (!out_dir.empty()) cfg["output.dir"] = out_dir;
    if (*run) {
      const int code = cmd_run(cfg);
      if (code == kExitDiverged) std::cerr << "ngvi: run diverged (see meta.json)\n";
      return code;
    }
    if (*sweep) {
      cmd_sweep(cfg, {parse_gamma_list(gammas), threshold, relative});
      return kExitOk;
    }
    if (*certify) {
      const json cert = cmd_certify(cfg);
      std::cout << "alpha " << format_double(cert["alpha"].get<double>()) << "\nbeta "
                << format_double(cert["beta"].get<double>()) << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "ngvi: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "ngvi: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
