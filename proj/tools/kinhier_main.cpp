#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "kinhier/io_util.hpp"
#include "kinhier/scenarios.hpp"
#include "kinhier/version.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;  // negative: keep the configured value
  int threads = -1;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path,
                  "configuration file (JSON); falls back to "
                  "KINHIER_DEFAULT_CONFIG");
  cmd->add_option("--out", opt.out_dir, "output directory override");
  cmd->add_option("--seed", opt.seed, "seed override");
  cmd->add_option("--threads", opt.threads,
                  "worker threads override (0 = hardware count)");
}

kinhier::ExperimentConfig load_config(const CliOptions& opt) {
  std::string path = opt.config_path;
  if (path.empty()) {
    const char* env = std::getenv("KINHIER_DEFAULT_CONFIG");
    if (env) path = env;
  }
  if (path.empty())
    throw kinhier::config_error(
        "no configuration: pass --config or set KINHIER_DEFAULT_CONFIG");
  kinhier::ExperimentConfig cfg = kinhier::parse_config(kinhier::read_file(path));
  if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
  if (opt.threads >= 0) cfg.threads = opt.threads;
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  return cfg;
}

int finish(const kinhier::ScenarioOutput& out,
           const kinhier::ExperimentConfig& cfg) {
  for (const auto& f : out.files)
    kinhier::atomic_write(std::filesystem::path(cfg.output_dir) / f.first,
                          f.second);
  std::printf("kinhier %s: %s\n",
              out.report["scenario"].get<std::string>().c_str(),
              cfg.output_dir.c_str());
  for (const auto& row : out.report["checks"])
    std::printf("  %s %-38s %.6e %s %.6e\n",
                row["pass"].get<bool>() ? "PASS" : "FAIL",
                row["name"].get<std::string>().c_str(),
                row["value"].get<double>(),
                row["sense"].get<std::string>() == "min" ? ">=" : "<=",
                row["tolerance"].get<double>());
  std::printf("%s (%.2f s)\n", out.ok ? "ok" : "FAILED",
              out.report["wall_clock_seconds"].get<double>());
  return out.ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-body jump hierarchies at the kinetic scale"};
  app.set_version_flag("--version",
                       std::string("kinhier ") + kinhier::version());
  app.require_subcommand(1);

  CliOptions run_opt, verify_opt, sweep_opt;
  CLI::App* run_cmd =
      app.add_subcommand("run", "run the scenario named in the config");
  add_common(run_cmd, run_opt);
  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "run the self-test battery on the configured model");
  add_common(verify_cmd, verify_opt);
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "rerun the scenario across the sweep axes in the config");
  add_common(sweep_cmd, sweep_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const kinhier::ExperimentConfig cfg = load_config(run_opt);
      return finish(kinhier::run_scenario(cfg), cfg);
    }
    if (verify_cmd->parsed()) {
      const kinhier::ExperimentConfig cfg = load_config(verify_opt);
      return finish(kinhier::verify_suite(cfg), cfg);
    }
    const kinhier::ExperimentConfig cfg = load_config(sweep_opt);
    return finish(kinhier::run_sweep(cfg), cfg);
  } catch (const kinhier::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const kinhier::cap_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const kinhier::numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  }
}
