// wavesys command-line interface.
//
//   wavesys run <config>              integrate one experiment, write artifacts
//   wavesys resume <snapshot> <config> continue a run from a state snapshot
//   wavesys sweep <spec>              run a coupling-exponent sweep table
//   wavesys verify                    fast built-in invariant checks
//
// Exit status: 0 on success (including a clean "blowup" verdict), 1 on
// configuration or runtime errors; verify exits with its failure count.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wavesys/harness.hpp"

namespace {

std::string resolve_dir(const wavesys::ExperimentConfig& cfg,
                        const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("WAVESYS_OUT"); env && *env) return env;
  return cfg.out_dir;
}

void print_run(const wavesys::RunResult& r) {
  std::cout << "verdict: " << r.verdict << '\n';
  const auto& s = r.summary;
  std::cout << "rows: " << s["rows"].get<std::size_t>();
  if (!s["t_final"].is_null()) std::cout << "  t_final: " << s["t_final"].get<double>();
  std::cout << '\n';
  if (!s["final_drift_rel"].is_null())
    std::cout << "final energy drift (relative): " << s["final_drift_rel"].get<double>() << '\n';
  if (!s["blowup"].is_null())
    std::cout << "blowup: field " << s["blowup"]["field"].get<std::string>() << " reached "
              << s["blowup"]["value"].get<double>() << " at t = "
              << s["blowup"]["t"].get<double>() << '\n';
  if (!s["flux_residual"].is_null())
    std::cout << "cone flux residual: " << s["flux_residual"].get<double>()
              << "  (outward flux " << s["flux"].get<double>() << ")\n";
  if (!s["cone_mask_width"].is_null())
    std::cout << "cone boundary mask width (2h): " << s["cone_mask_width"].get<double>() << '\n';
  if (!s["morawetz_interaction"].is_null())
    std::cout << "morawetz interaction integral: " << s["morawetz_interaction"].get<double>()
              << '\n';
  if (!s["scattering"].is_null()) {
    std::cout << "scattering horizon: " << s["scattering"]["horizon"].get<double>()
              << " (cap " << s["scattering"]["horizon_cap"].get<double>() << ")";
    if (!s["scattering"]["final_distance"].is_null())
      std::cout << "  final free-flow distance: "
                << s["scattering"]["final_distance"].get<double>();
    std::cout << '\n';
    const std::string warning = s["scattering"]["warning"].get<std::string>();
    if (!warning.empty()) std::cout << "scattering warning: " << warning << '\n';
  }
  std::cout << "csv: " << r.csv_path.string() << '\n'
            << "snapshot: " << r.snapshot_path.string() << '\n'
            << "summary: " << r.summary_path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavesys: pseudospectral toolbox for coupled semilinear wave systems"};
  app.require_subcommand(1);

  std::string run_config, resume_snapshot, resume_config, sweep_spec_path;
  std::optional<std::string> out_flag;
  std::optional<int> stride_flag;
  bool override_horizon = false;
  int workers = 1;

  CLI::App* cmd_run = app.add_subcommand("run", "integrate one experiment from a config file");
  cmd_run->add_option("config", run_config, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_run->add_option("--out", out_flag, "output directory (beats WAVESYS_OUT and output.dir)");
  cmd_run->add_option("--stride", stride_flag, "override run.stride")->check(CLI::PositiveNumber);
  cmd_run->add_flag("--override-horizon", override_horizon,
                    "skip the wrap-around horizon check");

  CLI::App* cmd_resume =
      app.add_subcommand("resume", "continue a run from a snapshot up to the config horizon");
  cmd_resume->add_option("snapshot", resume_snapshot, "state snapshot (.wpl1)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_resume->add_option("config", resume_config, "the original experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_resume->add_option("--out", out_flag, "output directory");
  cmd_resume->add_option("--stride", stride_flag, "override run.stride")
      ->check(CLI::PositiveNumber);
  cmd_resume->add_flag("--override-horizon", override_horizon,
                       "skip the wrap-around horizon check");

  CLI::App* cmd_sweep = app.add_subcommand("sweep", "run a coupling-exponent sweep");
  cmd_sweep->add_option("spec", sweep_spec_path, "sweep spec file (base config + sweep.* keys)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_sweep->add_option("--out", out_flag, "output directory for the sweep table");
  cmd_sweep->add_option("--workers", workers, "concurrent rows")->check(CLI::PositiveNumber);
  cmd_sweep->add_flag("--override-horizon", override_horizon,
                      "skip the wrap-around horizon check for every row");

  CLI::App* cmd_verify = app.add_subcommand("verify", "run the built-in invariant checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_verify) {
      const int failures = wavesys::run_builtin_verification(std::cout);
      if (failures > 0) std::cout << failures << " check(s) failed\n";
      return failures;
    }

    wavesys::RunOverrides ov;
    ov.out_dir = out_flag;
    ov.stride = stride_flag;
    ov.force_override_horizon = override_horizon;

    if (*cmd_run) {
      const auto cfg =
          wavesys::load_experiment_config_text(wavesys::read_text_file(run_config));
      print_run(wavesys::run_experiment(cfg, ov));
      return 0;
    }
    if (*cmd_resume) {
      const auto cfg =
          wavesys::load_experiment_config_text(wavesys::read_text_file(resume_config));
      const wavesys::RunResult r = wavesys::resume_experiment(resume_snapshot, cfg, ov);
      std::cout << "resumed from t = " << r.summary["resumed_from"].get<double>() << '\n';
      print_run(r);
      return 0;
    }
    if (*cmd_sweep) {
      wavesys::SweepSpec spec =
          wavesys::load_sweep_spec_text(wavesys::read_text_file(sweep_spec_path));
      if (override_horizon) spec.base.override_horizon = true;
      const auto results = wavesys::run_sweep(spec, workers);
      const std::filesystem::path dir = resolve_dir(spec.base, out_flag);
      std::filesystem::create_directories(dir);
      const std::filesystem::path table = dir / "sweep_results.csv";
      std::ofstream out(table, std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open '" + table.string() + "'");
      out << wavesys::sweep_csv(results);
      out.close();
      for (const auto& row : results) {
        std::cout << "alpha " << row.spec.alpha << "  beta " << row.spec.beta << "  scale "
                  << row.spec.amplitude_scale << "  -> " << row.verdict;
        if (row.detection_time) std::cout << " (detected t = " << *row.detection_time << ")";
        std::cout << '\n';
      }
      std::cout << "table: " << table.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
