// Harness tests: config grammar, snapshot format, run/resume/sweep drivers,
// CSV and JSON emission, and the built-in verification suite.

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wavesys/harness.hpp"
#include "test_helpers.hpp"

using namespace wavesys;
using Catch::Matchers::ContainsSubstring;

namespace {

// Unique scratch directory, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& label) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("wavesys_" + label + "_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_cells(const std::string& row) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : row) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// A small nonlinear run on a horizon-safe grid, shared by several cases.
const char* kBaseConfig =
    "grid.d = 2\n"
    "grid.n = 16\n"
    "grid.L = 8\n"
    "params.sigma = -1\n"
    "params.alpha = 0\n"
    "params.beta = 2\n"
    "data.u.profile = gaussian\n"
    "data.u.amplitude = 0.4\n"
    "data.u.width = 0.3\n"
    "data.v.profile = gaussian\n"
    "data.v.amplitude = -0.3\n"
    "data.v.width = 0.35\n"
    "run.T = 1\n"
    "run.dt = 0.05\n"
    "run.stride = 2\n";

}  // namespace

TEST_CASE("config parsing handles comments, blanks, and trimming", "[harness]") {
  const std::string text =
      "# leading comment\n"
      "\n"
      "  grid.d =  2 \n"
      "data.u.profile=gaussian\n"
      "diagnostics.cone.apex_x = 0.5 -0.25\n"
      "   # indented comment\n";
  const auto kv = parse_config_text(text);
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("grid.d") == "2");
  CHECK(kv.at("data.u.profile") == "gaussian");
  CHECK(kv.at("diagnostics.cone.apex_x") == "0.5 -0.25");

  SECTION("syntax violations are all reported together") {
    CHECK_THROWS_WITH(parse_config_text("grid.d = 2\ngrid.d = 3\nno equals here\n= 4\n"),
                      ContainsSubstring("duplicate key 'grid.d'") &&
                          ContainsSubstring("expected 'key = value'") &&
                          ContainsSubstring("empty key"));
  }
}

TEST_CASE("config loading applies defaults and typed values", "[harness]") {
  SECTION("defaults") {
    const ExperimentConfig cfg = load_experiment_config_text("grid.d = 2\ngrid.n = 16\n");
    CHECK(cfg.d == 2);
    CHECK(cfg.n == 16);
    CHECK(cfg.L == 8.0);
    CHECK(cfg.params.sign == -1);
    CHECK(cfg.stride == 1);
    CHECK(cfg.blowup_threshold == 1e6);
    CHECK(cfg.u.name == "zero");
    CHECK_FALSE(cfg.cone_enabled);
    CHECK_FALSE(cfg.scattering_enabled);
    CHECK(cfg.csv_name == "diagnostics.csv");
    CHECK(cfg.snapshot_name == "final_state.wpl1");
    CHECK(cfg.summary_name == "summary.json");
    CHECK(cfg.hsc_exponent() == critical_exponent(2, 0.0, 0.0));
  }
  SECTION("explicit keys round-trip") {
    const ExperimentConfig cfg = load_experiment_config_text(
        "grid.d = 3\ngrid.n = 32\ngrid.L = 16\n"
        "params.lambda = 0.5\nparams.mu = 2\nparams.alpha = 1\nparams.beta = 2\n"
        "params.sigma = 1\n"
        "data.u.profile = sine\ndata.u.amplitude = 0.2\ndata.u.axis = 1\n"
        "data.u.harmonic = 3\n"
        "data.v.profile = gaussian\ndata.v.amplitude = -0.1\ndata.v.width = 0.7\n"
        "data.v.separation = 1.5\n"
        "run.T = 2\nrun.dt = 0.01\nrun.stride = 4\nrun.blowup_threshold = 100\n"
        "run.override_horizon = true\n"
        "diagnostics.sobolev_exponent = 1.25\n"
        "diagnostics.cone.enabled = true\n"
        "diagnostics.cone.apex_x = 0.5 0 -0.5\n"
        "diagnostics.cone.apex_t = 1.5\n"
        "diagnostics.cone.section_lo = 0.5\ndiagnostics.cone.section_hi = 1.25\n"
        "diagnostics.morawetz.enabled = true\ndiagnostics.morawetz.start = 0.25\n"
        "diagnostics.scattering.enabled = true\n"
        "diagnostics.scattering.direction = past\n"
        "seed = 41\noutput.dir = results\noutput.csv = diag.csv\n");
    CHECK(cfg.params.lambda == 0.5);
    CHECK(cfg.params.sign == 1);
    CHECK(cfg.u.name == "sine");
    CHECK(cfg.u.axis == 1);
    CHECK(cfg.u.harmonic == 3);
    CHECK(cfg.v.separation == 1.5);
    CHECK(cfg.override_horizon);
    CHECK(cfg.hsc_exponent() == 1.25);
    CHECK(cfg.cone_enabled);
    CHECK(cfg.cone.apex_x[0] == 0.5);
    CHECK(cfg.cone.apex_x[2] == -0.5);
    CHECK(cfg.cone.apex_t == 1.5);
    CHECK(cfg.morawetz_enabled);
    CHECK(cfg.scattering_enabled);
    CHECK(cfg.scattering_direction == ScatterDirection::past);
    CHECK(cfg.seed == 41);
    CHECK(cfg.out_dir == "results");
    CHECK(cfg.csv_name == "diag.csv");
  }
  SECTION("violations are collected, not truncated at the first") {
    CHECK_THROWS_WITH(
        load_experiment_config_text("grid.d = 2\n"
                                    "grid.n = 33\n"
                                    "grid.L = eight\n"
                                    "run.stride = 1.5\n"
                                    "run.override_horizon = maybe\n"
                                    "data.u.profile = blob\n"
                                    "diagnostics.cone.apex_x = 1 2 3\n"
                                    "mystery.key = 1\n"
                                    "run.dt = 0\n"),
        ContainsSubstring("grid.L: expected a finite number") &&
            ContainsSubstring("run.stride: expected an integer") &&
            ContainsSubstring("run.override_horizon: expected true/false") &&
            ContainsSubstring("unknown profile 'blob'") &&
            ContainsSubstring("expected 2 coordinates, got 3") &&
            ContainsSubstring("unknown key 'mystery.key'") &&
            ContainsSubstring("run.dt: must be > 0") &&
            ContainsSubstring("power of two"));
  }
}

TEST_CASE("snapshots round-trip bitwise and reject malformed files", "[harness]") {
  TempDir dir("snapshot");
  Grid g(2, 16, 8.0);
  State s = make_state(g, gaussian_profile(0.37, 0.8), sine_profile(0.21, 1, 2, g.box_length),
                       gaussian_profile(-0.11, 1.1, {0.5, 0.0, 0.0, 0.0}), zero_profile());
  s.t = 1.375;
  CouplingParams p{0.75, 1.5, 1.0, 2.0, 1};
  const auto path = dir.path / "state.wpl1";
  write_snapshot(path, s, p);
  CHECK(std::filesystem::file_size(path) == 76 + 32 * g.total);

  const SnapshotData snap = read_snapshot(path);
  CHECK(snap.state.t == 1.375);
  CHECK(snap.state.grid() == g);
  CHECK(snap.state.u.values == s.u.values);
  CHECK(snap.state.ut.values == s.ut.values);
  CHECK(snap.state.v.values == s.v.values);
  CHECK(snap.state.vt.values == s.vt.values);
  CHECK(snap.params.lambda == 0.75);
  CHECK(snap.params.mu == 1.5);
  CHECK(snap.params.alpha == 1.0);
  CHECK(snap.params.beta == 2.0);
  CHECK(snap.params.sign == 1);

  SECTION("truncation is reported with byte counts") {
    std::string bytes = slurp(path);
    bytes.resize(bytes.size() - 17);
    std::ofstream out(dir.path / "short.wpl1", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(read_snapshot(dir.path / "short.wpl1"),
                      ContainsSubstring("truncated") && ContainsSubstring("8268") &&
                          ContainsSubstring("8251"));
  }
  SECTION("bad magic is rejected") {
    std::string bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream out(dir.path / "bad.wpl1", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(read_snapshot(dir.path / "bad.wpl1"), ContainsSubstring("bad magic"));
  }
  SECTION("missing file is reported by name") {
    CHECK_THROWS_WITH(read_snapshot(dir.path / "absent.wpl1"), ContainsSubstring("absent.wpl1"));
  }
}

TEST_CASE("zero data runs to a clean global verdict with zero rows", "[harness]") {
  TempDir dir("zero");
  ExperimentConfig cfg = load_experiment_config_text(
      "grid.d = 2\ngrid.n = 16\ngrid.L = 8\nrun.T = 0.5\nrun.dt = 0.05\nrun.stride = 5\n");
  RunOverrides ov;
  ov.out_dir = dir.path.string();
  const RunResult r = run_experiment(cfg, ov);
  CHECK(r.verdict == "global");
  REQUIRE(r.rows.size() == 3);  // steps 0, 5, 10
  CHECK(r.rows.front().rec.t == 0.0);
  CHECK(r.rows.back().rec.t == 0.5);
  const std::string csv = slurp(r.csv_path);
  const auto lines = split_lines(csv);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == csv_header());
  CHECK(lines[1] == "0,0,0,0,0,0,0,0,0,,,,,");
  for (const auto& line : {lines[2], lines[3]}) {
    const auto cells = split_cells(line);
    REQUIRE(cells.size() == 14);
    for (std::size_t i = 1; i <= 8; ++i) CHECK(cells[i] == "0");
    for (std::size_t i = 9; i <= 13; ++i) CHECK(cells[i].empty());
  }
  CHECK(r.summary["initial_energy"] == 0.0);
  CHECK(r.summary["final_drift_rel"] == 0.0);
  const SnapshotData snap = read_snapshot(r.snapshot_path);
  CHECK(max_abs(snap.state.u) == 0.0);
  CHECK(snap.state.t == 0.5);
}

TEST_CASE("decoupled run conserves energy and scatters onto itself", "[harness]") {
  TempDir dir("linear");
  // v = 0 decouples u onto the free flow; the extracted scattering state is
  // then the initial data itself and every distance column sits at roundoff.
  // The gaussian is kept wide relative to h so its Nyquist content (which the
  // gradient-based energy cannot see) is below roundoff.
  ExperimentConfig cfg = load_experiment_config_text(
      "grid.d = 2\ngrid.n = 64\ngrid.L = 16\n"
      "params.sigma = -1\nparams.beta = 2\n"
      "data.u.profile = gaussian\ndata.u.amplitude = 0.1\ndata.u.width = 0.75\n"
      "run.T = 1\nrun.dt = 0.05\nrun.stride = 2\n"
      "diagnostics.scattering.enabled = true\n");
  RunOverrides ov;
  ov.out_dir = dir.path.string();
  const RunResult r = run_experiment(cfg, ov);
  CHECK(r.verdict == "global");
  REQUIRE(r.rows.size() == 11);
  for (const DiagnosticsRow& row : r.rows) {
    CHECK(std::abs(row.rec.E_w_drift_rel) <= 1e-12);
    REQUIRE(row.scatter_dist.has_value());
    CHECK(*row.scatter_dist <= 1e-11);
  }
  CHECK(r.summary["verdict"] == "global");
  REQUIRE_FALSE(r.summary["scattering"].is_null());
  CHECK(r.summary["scattering"]["final_distance"].get<double>() <= 1e-11);
  CHECK(r.summary["scattering"]["direction"] == "future");
  CHECK(r.summary["scattering"]["warning"] == "");
  CHECK(r.summary["scattering"]["horizon"].get<double>() == Catch::Approx(1.0));

  SECTION("summary carries the documented keys") {
    for (const char* key :
         {"schema", "csv_schema", "verdict", "grid", "params", "seed", "rows", "t_final",
          "initial_energy", "final_energy", "final_drift_rel", "sup_u_max", "sup_v_max",
          "detection_time", "blowup", "flux_residual", "flux", "cone_mask_width",
          "morawetz_interaction", "scattering", "resumed_from", "artifacts"}) {
      INFO(key);
      CHECK(r.summary.contains(key));
    }
    CHECK(r.summary["schema"] == "wavesys-summary-v1");
    CHECK(r.summary["csv_schema"] == csv_header());
    CHECK(r.summary["grid"]["n"] == 64);
    CHECK(r.summary["params"]["beta"] == 2.0);
    CHECK(r.summary["blowup"].is_null());
    CHECK(r.summary["detection_time"].is_null());
    CHECK(r.summary["flux_residual"].is_null());
    CHECK(r.summary["cone_mask_width"].is_null());  // no cone diagnostics in this run
    CHECK(r.summary["resumed_from"].is_null());
    CHECK(r.summary["rows"] == 11);
    CHECK(r.summary["t_final"] == 1.0);
    CHECK(r.summary["artifacts"]["csv"] == "diagnostics.csv");
  }
}

TEST_CASE("resume reproduces the uninterrupted rows bit for bit", "[harness]") {
  TempDir full_dir("resume_full");
  TempDir half_dir("resume_half");
  TempDir tail_dir("resume_tail");

  const ExperimentConfig full = load_experiment_config_text(kBaseConfig);
  ExperimentConfig half = full;
  half.T = 0.5;

  RunOverrides ov_full, ov_half, ov_tail;
  ov_full.out_dir = full_dir.path.string();
  ov_half.out_dir = half_dir.path.string();
  ov_tail.out_dir = tail_dir.path.string();

  const RunResult r_full = run_experiment(full, ov_full);
  const RunResult r_half = run_experiment(half, ov_half);
  REQUIRE(r_full.verdict == "global");
  REQUIRE(r_half.rows.back().rec.t == 0.5);

  const RunResult r_tail = resume_experiment(r_half.snapshot_path, full, ov_tail);
  CHECK(r_tail.summary["resumed_from"] == 0.5);
  REQUIRE(r_full.rows.size() == 11);
  REQUIRE(r_tail.rows.size() == 6);
  for (std::size_t i = 0; i < r_tail.rows.size(); ++i) {
    INFO("tail row " << i);
    CHECK(csv_row(r_tail.rows[i]) == csv_row(r_full.rows[i + 5]));
  }
  // final snapshots agree bitwise as well
  const SnapshotData end_full = read_snapshot(r_full.snapshot_path);
  const SnapshotData end_tail = read_snapshot(r_tail.snapshot_path);
  CHECK(end_full.state.u.values == end_tail.state.u.values);
  CHECK(end_full.state.ut.values == end_tail.state.ut.values);
  CHECK(end_full.state.v.values == end_tail.state.v.values);
  CHECK(end_full.state.vt.values == end_tail.state.vt.values);
  CHECK(end_full.state.t == end_tail.state.t);

  SECTION("mismatched coupling parameters are rejected") {
    ExperimentConfig other = full;
    other.params.lambda = 0.5;
    CHECK_THROWS_WITH(resume_experiment(r_half.snapshot_path, other, ov_tail),
                      ContainsSubstring("parameters do not match"));
  }
  SECTION("snapshot time must land on a stride boundary") {
    ExperimentConfig coarse = full;
    coarse.stride = 4;  // t = 0.5 is step 10, not a multiple of 4
    CHECK_THROWS_WITH(resume_experiment(r_half.snapshot_path, coarse, ov_tail),
                      ContainsSubstring("stride boundary"));
  }
  SECTION("scattering cannot be resumed mid-run") {
    ExperimentConfig scat = full;
    scat.scattering_enabled = true;
    CHECK_THROWS_WITH(resume_experiment(r_half.snapshot_path, scat, ov_tail),
                      ContainsSubstring("full trajectory"));
  }
}

TEST_CASE("repeated runs emit identical artifact bytes", "[harness]") {
  TempDir dir_a("det_a");
  TempDir dir_b("det_b");
  const ExperimentConfig cfg = load_experiment_config_text(kBaseConfig);
  RunOverrides ov_a, ov_b;
  ov_a.out_dir = dir_a.path.string();
  ov_b.out_dir = dir_b.path.string();
  const RunResult ra = run_experiment(cfg, ov_a);
  const RunResult rb = run_experiment(cfg, ov_b);
  CHECK(slurp(ra.csv_path) == slurp(rb.csv_path));
  CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));
  CHECK(slurp(ra.snapshot_path) == slurp(rb.snapshot_path));
}

TEST_CASE("blowup ends the run with a verdict, not a crash", "[harness]") {
  TempDir dir("blowup");
  ExperimentConfig cfg = load_experiment_config_text(
      "grid.d = 2\ngrid.n = 32\ngrid.L = 8\n"
      "params.sigma = 1\nparams.beta = 2\n"
      "data.u.profile = gaussian\ndata.u.amplitude = 4\ndata.u.width = 0.5\n"
      "data.v.profile = gaussian\ndata.v.amplitude = 3.5\ndata.v.width = 0.5\n"
      "run.T = 1\nrun.dt = 0.05\nrun.stride = 1\nrun.blowup_threshold = 1000\n"
      "diagnostics.morawetz.enabled = true\n");
  RunOverrides ov;
  ov.out_dir = dir.path.string();
  const RunResult r = run_experiment(cfg, ov);
  CHECK(r.verdict == "blowup");
  REQUIRE_FALSE(r.summary["blowup"].is_null());
  CHECK(r.summary["blowup"]["value"].get<double>() > 1000.0);
  CHECK(r.summary["detection_time"].get<double>() > 0.0);
  CHECK(r.summary["detection_time"].get<double>() <= 1.0);
  // whole-run diagnostics are skipped once the solution leaves the window
  CHECK(r.summary["morawetz_interaction"].is_null());
  REQUIRE_FALSE(r.rows.empty());
  CHECK(r.rows.back().rec.t < 1.0);
  // every stored row is finite, and the snapshot holds the last finite state
  for (const DiagnosticsRow& row : r.rows) CHECK(std::isfinite(row.rec.sup_u));
  const SnapshotData snap = read_snapshot(r.snapshot_path);
  CHECK(all_finite(snap.state.u));
  CHECK(snap.state.t == r.rows.back().rec.t);
}

TEST_CASE("run validation lists horizon and budget violations together", "[harness]") {
  ExperimentConfig cfg = load_experiment_config_text(
      "grid.d = 2\ngrid.n = 32\ngrid.L = 8\n"
      "data.u.profile = gaussian\ndata.u.amplitude = 0.5\ndata.u.width = 1.4\n"
      "run.T = 2\nrun.dt = 0.2\n");
  CHECK_THROWS_WITH(run_experiment(cfg),
                    ContainsSubstring("horizon") && ContainsSubstring("stability budget"));
  SECTION("override flags clear both") {
    cfg.override_horizon = true;
    cfg.override_dt_budget = true;
    cfg.T = 0.4;  // keep it cheap; overrides are what is under test
    CHECK_NOTHROW(run_experiment(cfg, [] {
      RunOverrides ov;
      ov.write_artifacts = false;
      return ov;
    }()));
  }
}

TEST_CASE("output directory precedence: flag beats environment beats config", "[harness]") {
  TempDir env_dir("out_env");
  TempDir flag_dir("out_flag");
  ExperimentConfig cfg = load_experiment_config_text(
      "grid.d = 2\ngrid.n = 16\ngrid.L = 8\nrun.T = 0.1\nrun.dt = 0.05\n");

  REQUIRE(setenv("WAVESYS_OUT", env_dir.path.c_str(), 1) == 0);
  const RunResult r_env = run_experiment(cfg);
  CHECK(r_env.csv_path == env_dir.path / "diagnostics.csv");
  CHECK(std::filesystem::exists(r_env.csv_path));

  RunOverrides ov;
  ov.out_dir = flag_dir.path.string();
  const RunResult r_flag = run_experiment(cfg, ov);
  CHECK(r_flag.csv_path == flag_dir.path / "diagnostics.csv");
  REQUIRE(unsetenv("WAVESYS_OUT") == 0);
}

TEST_CASE("sweeps expand rows, capture verdicts, and keep going on errors", "[harness]") {
  SECTION("row expansion keeps declared order and crosses amplitude scales") {
    const SweepSpec spec = load_sweep_spec_text(
        "grid.d = 2\ngrid.n = 16\ngrid.L = 8\nrun.T = 0.25\nrun.dt = 0.05\n"
        "data.u.profile = gaussian\ndata.u.amplitude = 0.2\ndata.u.width = 0.3\n"
        "sweep.pairs = 0:2 1:1\n"
        "sweep.sums = 2.5\n"
        "sweep.ratios = 0.4\n"
        "sweep.amplitude_scales = 1 2\n");
    REQUIRE(spec.rows.size() == 6);
    CHECK(spec.rows[0].alpha == 0.0);
    CHECK(spec.rows[0].beta == 2.0);
    CHECK(spec.rows[0].amplitude_scale == 1.0);
    CHECK(spec.rows[1].amplitude_scale == 2.0);
    CHECK(spec.rows[2].alpha == 1.0);
    CHECK(spec.rows[2].beta == 1.0);
    CHECK(spec.rows[4].alpha == 1.0);
    CHECK(spec.rows[4].beta == 1.5);
    CHECK(spec.rows[5].amplitude_scale == 2.0);
    CHECK(spec.base.T == 0.25);
  }
  SECTION("negative exponents and empty sweeps are rejected") {
    CHECK_THROWS_WITH(load_sweep_spec_text("grid.d = 2\nsweep.pairs = -1:2\n"),
                      ContainsSubstring("must be >= 0"));
    CHECK_THROWS_WITH(load_sweep_spec_text("grid.d = 2\nsweep.pairs = 1;2\n"),
                      ContainsSubstring("expected alpha:beta"));
    CHECK_THROWS_WITH(load_sweep_spec_text("grid.d = 2\ngrid.n = 16\n"),
                      ContainsSubstring("defines no rows"));
  }
  SECTION("a single-pair sweep matches the direct run verdict") {
    const std::string base(kBaseConfig);
    const SweepSpec spec = load_sweep_spec_text(base + "sweep.pairs = 0:2\n");
    const auto rows = run_sweep(spec, 1);
    REQUIRE(rows.size() == 1);
    RunOverrides ov;
    ov.write_artifacts = false;
    const RunResult direct = run_experiment(load_experiment_config_text(base), ov);
    CHECK(rows[0].verdict == direct.verdict);
    CHECK(rows[0].error.empty());
    CHECK(rows[0].drift_rel == direct.rows.back().rec.E_w_drift_rel);
    CHECK_FALSE(rows[0].detection_time.has_value());
  }
  SECTION("a lambda = 0 row keeps the weighted energy of the free field") {
    // Band-limited data: for resolved (Nyquist-free) fields the lambda = 0
    // rows leave u exactly on the free flow, so the weighted energy (which
    // then carries only the u block) is conserved to roundoff.  Periodic
    // sine data fills the box, so the horizon check is overridden.
    const SweepSpec spec = load_sweep_spec_text(
        "grid.d = 2\ngrid.n = 16\ngrid.L = 8\n"
        "params.lambda = 0\nparams.sigma = -1\n"
        "data.u.profile = sine\ndata.u.amplitude = 0.3\ndata.u.harmonic = 2\n"
        "data.v.profile = sine\ndata.v.amplitude = 0.2\ndata.v.axis = 1\n"
        "run.T = 0.5\nrun.dt = 0.05\nrun.override_horizon = true\n"
        "sweep.pairs = 0:2 1:1\n");
    const auto rows = run_sweep(spec, 2);  // exercises the worker-thread path
    REQUIRE(rows.size() == 2);
    for (const SweepRowResult& row : rows) {
      INFO("pair (" << row.spec.alpha << ", " << row.spec.beta << ")");
      CHECK(row.verdict == "global");
      CHECK(std::abs(row.drift_rel) <= 1e-12);
      CHECK(row.max_sup > 0.0);
    }
  }
  SECTION("per-row failures are recorded and the sweep completes") {
    const SweepSpec spec = load_sweep_spec_text(
        "grid.d = 2\ngrid.n = 16\ngrid.L = 8\n"
        "data.u.profile = gaussian\ndata.u.amplitude = 0.2\ndata.u.width = 1.4\n"
        "run.T = 2\nrun.dt = 0.05\n"
        "sweep.pairs = 0:2 1:1\n");
    const auto rows = run_sweep(spec, 1);
    REQUIRE(rows.size() == 2);
    for (const SweepRowResult& row : rows) {
      CHECK(row.verdict == "error");
      CHECK_THAT(row.error, ContainsSubstring("horizon"));
    }
    const std::string csv = sweep_csv(rows);
    const auto lines = split_lines(csv);
    // each row's quoted multi-line error message spans two text lines
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == sweep_csv_header());
    CHECK_THAT(lines[1], ContainsSubstring(",error,"));
    CHECK_THAT(lines[1], ContainsSubstring("\""));  // multi-line message is quoted
  }
}

TEST_CASE("builtin verification suite passes", "[harness]") {
  std::ostringstream os;
  const int failures = run_builtin_verification(os);
  INFO(os.str());
  CHECK(failures == 0);
  CHECK_THAT(os.str(), ContainsSubstring("PASS  fourier round trip"));
  CHECK_THAT(os.str(), ContainsSubstring("PASS  energy conservation"));
  CHECK_THAT(os.str(), ContainsSubstring("PASS  snapshot round trip"));
  CHECK_THAT(os.str(), !ContainsSubstring("FAIL"));
}
