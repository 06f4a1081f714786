#pragma once

// Experiment harness: configuration, run/sweep/resume drivers, CSV and JSON
// emission, and binary state snapshots.
//
// Config grammar (flat key = value text):
//   - one `key = value` per line; the first '=' splits, both sides trimmed;
//   - keys are dotted lowercase identifiers (e.g. grid.n, data.u.amplitude);
//   - values are scalar tokens, or space-separated lists where documented;
//   - blank lines and lines starting with '#' are ignored;
//   - duplicate keys and unknown keys are validation errors;
//   - every violated invariant is reported, not just the first.
// The only environment override honored is WAVESYS_OUT (output directory);
// an explicit --out flag beats it, and both beat output.dir from the file.
//
// Diagnostics CSV (schema v1, fixed column order):
//   t,E_w,E_w_drift_rel,L2_u,L2_v,Hsc_u,Hsc_v,sup_u,sup_v,
//   cone_E,cone_potential,flux_residual,morawetz_interaction,scatter_dist
// One row per stored boundary (every run.stride steps plus the final step).
// Numbers are printed with %.17g so values round-trip bit-exactly; absent
// diagnostics emit empty cells, never zeros.  Whole-run quantities
// (flux_residual, morawetz_interaction) appear on the final row only; the
// cone columns cover section_lo <= t <= apex_t, and scatter_dist covers
// every row once a scattering state has been extracted.
//
// Row times are labeled t = step_index * dt with the step index counted from
// the original t = 0 run, which is what makes resumed runs reproduce the
// uninterrupted CSV rows bit-for-bit.
//
// Snapshot format "WPL1", little-endian throughout:
//   bytes 0-3   magic "WPL1"
//   int64       d, n
//   float64     L, t, lambda, mu, alpha, beta
//   int64       sigma
//   float64[n^d] u, ut, v, vt   (row-major, in that order)
// Total size is 76 + 32 n^d bytes; truncation errors name expected vs actual.
//
// JSON summary keys (schema wavesys-summary-v1): schema, csv_schema, verdict
// ("global" | "blowup"), grid{d,n,L}, params{lambda,mu,alpha,beta,sigma},
// seed, rows, t_final, initial_energy, final_energy, final_drift_rel,
// sup_u_max, sup_v_max, detection_time, blowup{t,field,value}|null,
// flux_residual|null, flux|null, cone_mask_width|null,
// morawetz_interaction|null,
// scattering{horizon,horizon_cap,direction,warning,final_distance}|null,
// resumed_from|null, artifacts{csv,snapshot,summary}.  cone_mask_width is the
// boundary smoothing width (2h) every cone diagnostic in the run used.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wavesys/core.hpp"
#include "wavesys/diagnostics.hpp"
#include "wavesys/scattering.hpp"
#include "wavesys/solver.hpp"
#include "wavesys/spectral.hpp"

namespace wavesys {

// ---------------------------------------------------------------------------
// Flat key = value parsing
// ---------------------------------------------------------------------------

namespace harness_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double state_sup_diff(const State& a, const State& b) {
  double worst = 0.0;
  const std::array<const Field*, 4> fa{&a.u, &a.ut, &a.v, &a.vt};
  const std::array<const Field*, 4> fb{&b.u, &b.ut, &b.v, &b.vt};
  for (int c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < fa[c]->size(); ++i)
      worst = std::max(worst, std::abs((*fa[c])[i] - (*fb[c])[i]));
  return worst;
}

}  // namespace harness_detail

// Parses the flat config grammar into an ordered key -> value map.  Syntax
// problems (missing '=', empty key, duplicate key) are all collected and
// thrown together.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::vector<std::string> errors;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = harness_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value', got '" + t +
                       "'");
      continue;
    }
    const std::string key = harness_detail::trim(t.substr(0, eq));
    const std::string value = harness_detail::trim(t.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    if (kv.count(key)) {
      errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
      continue;
    }
    kv.emplace(key, value);
  }
  if (!errors.empty()) {
    std::string msg = "config syntax:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
  return kv;
}

namespace harness_detail {

// Typed access into the parsed map; records which keys were consumed so the
// caller can flag unknown ones, and collects conversion errors by key.
struct ConfigView {
  const std::map<std::string, std::string>& kv;
  std::set<std::string>& used;
  std::vector<std::string>& errors;

  bool has(const std::string& key) const { return kv.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used.insert(key);
    return it->second;
  }

  double real(const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used.insert(key);
    return parse_real(key, it->second, fallback);
  }

  long long integer(const std::string& key, long long fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used.insert(key);
    const double x = parse_real(key, it->second, static_cast<double>(fallback));
    const long long r = std::llround(x);
    if (static_cast<double>(r) != x) {
      errors.push_back(key + ": expected an integer, got '" + it->second + "'");
      return fallback;
    }
    return r;
  }

  bool boolean(const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used.insert(key);
    const std::string& v = it->second;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    errors.push_back(key + ": expected true/false, got '" + v + "'");
    return fallback;
  }

  std::vector<double> real_list(const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return {};
    used.insert(key);
    std::vector<double> out;
    for (const std::string& tok : split_ws(it->second))
      out.push_back(parse_real(key, tok, 0.0));
    return out;
  }

 private:
  double parse_real(const std::string& key, const std::string& tok, double fallback) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double x = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(x)) {
      errors.push_back(key + ": expected a finite number, got '" + tok + "'");
      return fallback;
    }
    return x;
  }
};

}  // namespace harness_detail

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

// Named initial-data profile for one field.
struct ProfileSpec {
  std::string name = "zero";  // zero | gaussian | sine
  double amplitude = 0.0;
  double width = 1.0;
  double separation = 0.0;  // gaussian center offset along the first axis
  int axis = 0;             // sine only
  int harmonic = 1;         // sine only
};

struct ExperimentConfig {
  int d = 3;
  int n = 32;
  double L = 8.0;
  CouplingParams params{};
  ProfileSpec u, ut, v, vt;
  double T = 1.0;
  double dt = 0.01;
  int stride = 1;
  double blowup_threshold = 1e6;
  bool override_horizon = false;
  bool override_dt_budget = false;

  double sobolev_exponent = -1.0;  // < 0: use the critical exponent
  bool cone_enabled = false;
  ConeSpec cone{};
  bool morawetz_enabled = false;
  double morawetz_start = 0.0;
  bool scattering_enabled = false;
  ScatterDirection scattering_direction = ScatterDirection::future;
  double scattering_horizon = 0.0;  // 0: use the full stored trajectory

  long long seed = 0;

  std::string out_dir = ".";
  std::string csv_name = "diagnostics.csv";
  std::string snapshot_name = "final_state.wpl1";
  std::string summary_name = "summary.json";

  double hsc_exponent() const {
    return sobolev_exponent >= 0.0 ? sobolev_exponent
                                   : critical_exponent(d, params.alpha, params.beta);
  }
};

namespace harness_detail {

inline void load_profile(ConfigView& view, const std::string& prefix, ProfileSpec& spec,
                         std::vector<std::string>& errors) {
  spec.name = view.str(prefix + ".profile", spec.name);
  spec.amplitude = view.real(prefix + ".amplitude", spec.amplitude);
  spec.width = view.real(prefix + ".width", spec.width);
  spec.separation = view.real(prefix + ".separation", spec.separation);
  spec.axis = static_cast<int>(view.integer(prefix + ".axis", spec.axis));
  spec.harmonic = static_cast<int>(view.integer(prefix + ".harmonic", spec.harmonic));
  if (spec.name != "zero" && spec.name != "gaussian" && spec.name != "sine")
    errors.push_back(prefix + ".profile: unknown profile '" + spec.name +
                     "' (expected zero, gaussian, or sine)");
  if (spec.name == "gaussian" && !(spec.width > 0.0))
    errors.push_back(prefix + ".width: gaussian width must be > 0");
}

inline Profile build_profile(const ProfileSpec& spec, double L) {
  if (spec.name == "gaussian")
    return gaussian_profile(spec.amplitude, spec.width, {spec.separation, 0.0, 0.0, 0.0});
  if (spec.name == "sine") return sine_profile(spec.amplitude, spec.axis, spec.harmonic, L);
  return zero_profile();
}

}  // namespace harness_detail

// Builds an ExperimentConfig from parsed keys, collecting every violation
// (unknown keys, malformed values, broken invariants) before throwing.
inline ExperimentConfig load_experiment_config(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  std::set<std::string> used;
  std::vector<std::string> errors;
  harness_detail::ConfigView view{kv, used, errors};

  cfg.d = static_cast<int>(view.integer("grid.d", cfg.d));
  cfg.n = static_cast<int>(view.integer("grid.n", cfg.n));
  cfg.L = view.real("grid.L", cfg.L);
  cfg.params.lambda = view.real("params.lambda", cfg.params.lambda);
  cfg.params.mu = view.real("params.mu", cfg.params.mu);
  cfg.params.alpha = view.real("params.alpha", cfg.params.alpha);
  cfg.params.beta = view.real("params.beta", cfg.params.beta);
  cfg.params.sign = static_cast<int>(view.integer("params.sigma", cfg.params.sign));

  harness_detail::load_profile(view, "data.u", cfg.u, errors);
  harness_detail::load_profile(view, "data.ut", cfg.ut, errors);
  harness_detail::load_profile(view, "data.v", cfg.v, errors);
  harness_detail::load_profile(view, "data.vt", cfg.vt, errors);

  cfg.T = view.real("run.T", cfg.T);
  cfg.dt = view.real("run.dt", cfg.dt);
  cfg.stride = static_cast<int>(view.integer("run.stride", cfg.stride));
  cfg.blowup_threshold = view.real("run.blowup_threshold", cfg.blowup_threshold);
  cfg.override_horizon = view.boolean("run.override_horizon", cfg.override_horizon);
  cfg.override_dt_budget = view.boolean("run.override_dt_budget", cfg.override_dt_budget);

  cfg.sobolev_exponent = view.real("diagnostics.sobolev_exponent", cfg.sobolev_exponent);
  cfg.cone_enabled = view.boolean("diagnostics.cone.enabled", cfg.cone_enabled);
  const std::vector<double> apex = view.real_list("diagnostics.cone.apex_x");
  cfg.cone.apex_t = view.real("diagnostics.cone.apex_t", cfg.cone.apex_t);
  cfg.cone.section_lo = view.real("diagnostics.cone.section_lo", cfg.cone.section_lo);
  cfg.cone.section_hi = view.real("diagnostics.cone.section_hi", cfg.cone.section_hi);
  cfg.morawetz_enabled = view.boolean("diagnostics.morawetz.enabled", cfg.morawetz_enabled);
  cfg.morawetz_start = view.real("diagnostics.morawetz.start", cfg.morawetz_start);
  cfg.scattering_enabled = view.boolean("diagnostics.scattering.enabled", cfg.scattering_enabled);
  cfg.scattering_horizon = view.real("diagnostics.scattering.horizon", cfg.scattering_horizon);
  const std::string dir = view.str("diagnostics.scattering.direction", "future");
  if (dir == "future")
    cfg.scattering_direction = ScatterDirection::future;
  else if (dir == "past")
    cfg.scattering_direction = ScatterDirection::past;
  else
    errors.push_back("diagnostics.scattering.direction: expected future or past, got '" + dir +
                     "'");

  cfg.seed = view.integer("seed", cfg.seed);
  cfg.out_dir = view.str("output.dir", cfg.out_dir);
  cfg.csv_name = view.str("output.csv", cfg.csv_name);
  cfg.snapshot_name = view.str("output.snapshot", cfg.snapshot_name);
  cfg.summary_name = view.str("output.summary", cfg.summary_name);

  for (const auto& [key, value] : kv)
    if (!used.count(key)) errors.push_back("unknown key '" + key + "'");

  if (!apex.empty()) {
    if (apex.size() != static_cast<std::size_t>(cfg.d))
      errors.push_back("diagnostics.cone.apex_x: expected " + std::to_string(cfg.d) +
                       " coordinates, got " + std::to_string(apex.size()));
    else
      for (std::size_t a = 0; a < apex.size(); ++a) cfg.cone.apex_x[a] = apex[a];
  }

  // structural invariants checkable without building the initial data
  try {
    Grid probe(cfg.d, cfg.n, cfg.L);
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    cfg.params.validate();
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  if (!(cfg.T >= 0.0)) errors.push_back("run.T: must be >= 0");
  if (!(cfg.dt > 0.0)) errors.push_back("run.dt: must be > 0");
  if (cfg.stride < 1) errors.push_back("run.stride: must be >= 1");
  if (!(cfg.blowup_threshold > 0.0)) errors.push_back("run.blowup_threshold: must be > 0");

  if (!errors.empty()) {
    std::string msg = "config validation:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config_text(const std::string& text) {
  return load_experiment_config(parse_config_text(text));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Snapshots (format "WPL1"; layout documented at the top of this header)
// ---------------------------------------------------------------------------

struct SnapshotData {
  State state;
  CouplingParams params;
};

namespace harness_detail {

static_assert(std::endian::native == std::endian::little,
              "snapshot format is little-endian; writer assumes a little-endian host");

inline void put_i64(std::string& buf, std::int64_t x) {
  char b[8];
  std::memcpy(b, &x, 8);
  buf.append(b, 8);
}

inline void put_f64(std::string& buf, double x) {
  char b[8];
  std::memcpy(b, &x, 8);
  buf.append(b, 8);
}

struct SnapshotCursor {
  const std::string& buf;
  std::size_t pos = 0;

  std::int64_t i64() {
    std::int64_t x;
    std::memcpy(&x, buf.data() + pos, 8);
    pos += 8;
    return x;
  }
  double f64() {
    double x;
    std::memcpy(&x, buf.data() + pos, 8);
    pos += 8;
    return x;
  }
};

}  // namespace harness_detail

inline void write_snapshot(const std::filesystem::path& path, const State& s,
                           const CouplingParams& p) {
  s.check_consistent();
  const Grid& g = s.grid();
  std::string buf;
  buf.reserve(76 + 32 * g.total);
  buf.append("WPL1", 4);
  harness_detail::put_i64(buf, g.dim);
  harness_detail::put_i64(buf, g.points_per_axis);
  harness_detail::put_f64(buf, g.box_length);
  harness_detail::put_f64(buf, s.t);
  harness_detail::put_f64(buf, p.lambda);
  harness_detail::put_f64(buf, p.mu);
  harness_detail::put_f64(buf, p.alpha);
  harness_detail::put_f64(buf, p.beta);
  harness_detail::put_i64(buf, p.sign);
  for (const Field* f : {&s.u, &s.ut, &s.v, &s.vt})
    buf.append(reinterpret_cast<const char*>(f->values.data()), 8 * g.total);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write to '" + path.string() + "'");
}

inline SnapshotData read_snapshot(const std::filesystem::path& path) {
  const std::string buf = read_text_file(path);
  if (buf.size() < 76 || buf.compare(0, 4, "WPL1") != 0)
    throw std::runtime_error("snapshot '" + path.string() +
                             "': bad magic (expected \"WPL1\" header)");
  harness_detail::SnapshotCursor cur{buf, 4};
  const std::int64_t d = cur.i64();
  const std::int64_t n = cur.i64();
  const double L = cur.f64();
  const double t = cur.f64();
  CouplingParams p;
  p.lambda = cur.f64();
  p.mu = cur.f64();
  p.alpha = cur.f64();
  p.beta = cur.f64();
  p.sign = static_cast<int>(cur.i64());

  Grid g(static_cast<int>(d), static_cast<int>(n), L);  // validates shape
  const std::size_t expected = 76 + 32 * g.total;
  if (buf.size() != expected) {
    std::ostringstream os;
    os << "snapshot '" << path.string() << "': truncated or padded: expected " << expected
       << " bytes, got " << buf.size();
    throw std::runtime_error(os.str());
  }
  SnapshotData snap{State(g, t), p};
  for (Field* f : {&snap.state.u, &snap.state.ut, &snap.state.v, &snap.state.vt}) {
    std::memcpy(f->values.data(), buf.data() + cur.pos, 8 * g.total);
    cur.pos += 8 * g.total;
  }
  for (const Field* f : {&snap.state.u, &snap.state.ut, &snap.state.v, &snap.state.vt})
    if (!all_finite(*f))
      throw std::runtime_error("snapshot '" + path.string() + "': non-finite field values");
  return snap;
}

// ---------------------------------------------------------------------------
// Diagnostics CSV
// ---------------------------------------------------------------------------

struct DiagnosticsRow {
  DiagnosticsRecord rec;
  std::optional<double> scatter_dist;
};

inline const char* csv_header() {
  return "t,E_w,E_w_drift_rel,L2_u,L2_v,Hsc_u,Hsc_v,sup_u,sup_v,"
         "cone_E,cone_potential,flux_residual,morawetz_interaction,scatter_dist";
}

inline std::string csv_row(const DiagnosticsRow& row) {
  using harness_detail::format_g17;
  auto opt = [](const std::optional<double>& x) { return x ? format_g17(*x) : std::string(); };
  const DiagnosticsRecord& r = row.rec;
  std::string line;
  line += format_g17(r.t);
  line += ',' + format_g17(r.E_w);
  line += ',' + format_g17(r.E_w_drift_rel);
  line += ',' + format_g17(r.L2_u);
  line += ',' + format_g17(r.L2_v);
  line += ',' + format_g17(r.Hs_u);
  line += ',' + format_g17(r.Hs_v);
  line += ',' + format_g17(r.sup_u);
  line += ',' + format_g17(r.sup_v);
  line += ',' + opt(r.cone_E);
  line += ',' + opt(r.cone_potential);
  line += ',' + opt(r.flux_residual);
  line += ',' + opt(r.morawetz_interaction);
  line += ',' + opt(row.scatter_dist);
  return line;
}

// ---------------------------------------------------------------------------
// Run driver
// ---------------------------------------------------------------------------

struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<int> stride;
  bool force_override_horizon = false;
  bool write_artifacts = true;  // sweeps run rows without per-row files
};

struct RunResult {
  std::string verdict;  // "global" | "blowup"
  nlohmann::json summary;
  std::vector<DiagnosticsRow> rows;
  std::filesystem::path csv_path, snapshot_path, summary_path;
};

namespace harness_detail {

inline std::string resolve_out_dir(const ExperimentConfig& cfg, const RunOverrides& ov) {
  if (ov.out_dir) return *ov.out_dir;
  if (const char* env = std::getenv("WAVESYS_OUT"); env && *env) return env;
  return cfg.out_dir;
}

// Pre-run validation that needs the instantiated grid and initial data; every
// violated invariant is listed.
inline void validate_run(const ExperimentConfig& cfg, const Grid& g, const State& s0,
                         double resume_t) {
  std::vector<std::string> errors;
  const double budget = 0.5 * g.spacing;
  if (!cfg.override_dt_budget && cfg.dt > budget + 1e-15) {
    std::ostringstream os;
    os << "run.dt = " << cfg.dt << " exceeds the stability budget 0.5 h = " << budget
       << " (set run.override_dt_budget = true to force)";
    errors.push_back(os.str());
  }
  const double extent = cfg.T - resume_t;
  if (!cfg.override_horizon) {
    const double radius = effective_data_radius(s0);
    const double limit = 0.5 * g.box_length - 2.0 * g.spacing;
    if (radius + extent > limit) {
      std::ostringstream os;
      os << "horizon: data radius " << radius << " + time extent " << extent
         << " exceeds L/2 - 2h = " << limit << " (set run.override_horizon = true to force)";
      errors.push_back(os.str());
    }
  }
  if (cfg.cone_enabled) {
    try {
      cfg.cone.validate(g);
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
    if (cfg.dt * cfg.stride > g.spacing + 1e-12) {
      std::ostringstream os;
      os << "flux sections need stored spacing dt*stride <= h = " << g.spacing
         << " (stride <= " << std::max(1.0, std::floor(g.spacing / cfg.dt)) << ")";
      errors.push_back(os.str());
    }
  }
  if (cfg.scattering_enabled && cfg.stride > 8)
    errors.push_back("scattering extraction needs run.stride <= 8");
  if (cfg.hsc_exponent() < 0.0)
    errors.push_back("diagnostics.sobolev_exponent: must be >= 0");

  const bool retain = cfg.cone_enabled || cfg.morawetz_enabled || cfg.scattering_enabled;
  if (retain) {
    const double rows = extent / (cfg.dt * cfg.stride) + 2.0;
    const double bytes = rows * 4.0 * static_cast<double>(g.total) * 8.0;
    if (bytes > 4.0 * 1024.0 * 1024.0 * 1024.0) {
      std::ostringstream os;
      os << "cone/morawetz/scattering diagnostics retain the stored trajectory (~"
         << bytes / (1024.0 * 1024.0 * 1024.0) << " GiB here); raise run.stride or shorten run.T";
      errors.push_back(os.str());
    }
  }
  if (!errors.empty()) {
    std::string msg = "run validation:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
}

inline nlohmann::json params_json(const CouplingParams& p) {
  return {{"lambda", p.lambda}, {"mu", p.mu},       {"alpha", p.alpha},
          {"beta", p.beta},     {"sigma", p.sign}};
}

// Shared core of run and resume: integrates from `start` (which sits
// `resume_steps` steps after the original t = 0), emits rows, diagnostics,
// and artifacts.
inline RunResult execute_run(const ExperimentConfig& cfg, const RunOverrides& ov,
                             const State& start, std::size_t resume_steps, double initial_energy) {
  const Grid g = start.grid();
  const CouplingParams& p = cfg.params;
  const double s_exp = cfg.hsc_exponent();
  const bool retain = cfg.cone_enabled || cfg.morawetz_enabled || cfg.scattering_enabled;
  const double cone_fuzz = 1e-9 * std::max(1.0, cfg.T);

  std::vector<DiagnosticsRow> rows;
  State last = start;
  auto observer = [&](const State& s, std::size_t step) {
    // label the row time from the global step count so resumed runs place
    // bit-identical times (and cone radii) on every row
    State labeled = s;
    labeled.t = static_cast<double>(resume_steps + step) * cfg.dt;
    DiagnosticsRow row;
    row.rec = diagnostics_record(labeled, p, s_exp, initial_energy);
    if (cfg.cone_enabled && labeled.t >= cfg.cone.section_lo - cone_fuzz &&
        labeled.t <= cfg.cone.apex_t + cone_fuzz) {
      row.rec.cone_E = cone_energy(labeled, cfg.cone, p);
      row.rec.cone_potential = cone_potential(labeled, cfg.cone, p);
    }
    rows.push_back(std::move(row));
    last = std::move(labeled);
  };

  IntegrateOptions opt;
  opt.stride = cfg.stride;
  opt.blowup_threshold = cfg.blowup_threshold;
  opt.override_horizon = true;   // validated above, with the full-run extent
  opt.override_dt_budget = cfg.override_dt_budget;
  opt.observers.push_back(observer);
  if (!retain) opt.store_window = {cfg.T + 1.0, cfg.T + 2.0};  // retain nothing

  Trajectory traj = integrate(start, cfg.T - start.t, cfg.dt, p, opt);

  RunResult result;
  result.verdict = traj.blowup ? "blowup" : "global";

  nlohmann::json summary;
  summary["schema"] = "wavesys-summary-v1";
  summary["csv_schema"] = csv_header();
  summary["verdict"] = result.verdict;
  summary["grid"] = {{"d", cfg.d}, {"n", cfg.n}, {"L", cfg.L}};
  summary["params"] = params_json(p);
  summary["seed"] = cfg.seed;
  summary["initial_energy"] = initial_energy;
  summary["resumed_from"] =
      resume_steps == 0 ? nlohmann::json() : nlohmann::json(start.t);
  summary["blowup"] = nlohmann::json();
  summary["detection_time"] = nlohmann::json();
  if (traj.blowup) {
    summary["blowup"] = {{"t", traj.blowup->t},
                         {"field", traj.blowup->field},
                         {"value", traj.blowup->value}};
    summary["detection_time"] = traj.blowup->t;
  }
  summary["flux_residual"] = nlohmann::json();
  summary["flux"] = nlohmann::json();
  summary["cone_mask_width"] = nlohmann::json();
  summary["morawetz_interaction"] = nlohmann::json();
  summary["scattering"] = nlohmann::json();
  if (cfg.cone_enabled) summary["cone_mask_width"] = 2.0 * g.spacing;

  if (!traj.blowup && retain && !traj.states.empty()) {
    if (cfg.cone_enabled) {
      const FluxResult fx = flux_identity_residual(traj, cfg.cone, p);
      if (!rows.empty()) rows.back().rec.flux_residual = fx.residual;
      summary["flux_residual"] = fx.residual;
      summary["flux"] = fx.flux;
    }
    if (cfg.morawetz_enabled) {
      const double m = morawetz_interaction(traj, cfg.morawetz_start, p);
      if (!rows.empty()) rows.back().rec.morawetz_interaction = m;
      summary["morawetz_interaction"] = m;
    }
    if (cfg.scattering_enabled) {
      Trajectory window = traj;
      if (cfg.scattering_horizon > 0.0) {
        window.states.clear();
        for (const State& st : traj.states)
          if (st.t - traj.states.front().t <= cfg.scattering_horizon + 1e-12)
            window.states.push_back(st);
      }
      const ScatteringState sc = extract_scattering_state(window, p, cfg.scattering_direction);
      for (std::size_t i = 0; i < rows.size() && i < traj.states.size(); ++i)
        rows[i].scatter_dist =
            energy_norm_distance(traj.states[i], sc, rows[i].rec.t);
      summary["scattering"] = {
          {"horizon", sc.horizon},
          {"horizon_cap", sc.horizon_cap},
          {"direction", sc.direction == ScatterDirection::future ? "future" : "past"},
          {"warning", sc.warning},
          {"final_distance", rows.empty() || !rows.back().scatter_dist
                                 ? nlohmann::json()
                                 : nlohmann::json(*rows.back().scatter_dist)}};
    }
  }

  double sup_u_max = 0.0, sup_v_max = 0.0;
  for (const DiagnosticsRow& r : rows) {
    sup_u_max = std::max(sup_u_max, r.rec.sup_u);
    sup_v_max = std::max(sup_v_max, r.rec.sup_v);
  }
  summary["rows"] = rows.size();
  summary["t_final"] = rows.empty() ? nlohmann::json() : nlohmann::json(rows.back().rec.t);
  summary["final_energy"] = rows.empty() ? nlohmann::json() : nlohmann::json(rows.back().rec.E_w);
  summary["final_drift_rel"] =
      rows.empty() ? nlohmann::json() : nlohmann::json(rows.back().rec.E_w_drift_rel);
  summary["sup_u_max"] = sup_u_max;
  summary["sup_v_max"] = sup_v_max;

  if (ov.write_artifacts) {
    const std::filesystem::path dir = resolve_out_dir(cfg, ov);
    std::filesystem::create_directories(dir);
    result.csv_path = dir / cfg.csv_name;
    result.snapshot_path = dir / cfg.snapshot_name;
    result.summary_path = dir / cfg.summary_name;
    summary["artifacts"] = {{"csv", cfg.csv_name},
                            {"snapshot", cfg.snapshot_name},
                            {"summary", cfg.summary_name}};

    std::ofstream csv(result.csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open '" + result.csv_path.string() + "'");
    csv << csv_header() << '\n';
    for (const DiagnosticsRow& r : rows) csv << csv_row(r) << '\n';
    csv.close();

    write_snapshot(result.snapshot_path, last, p);

    std::ofstream js(result.summary_path, std::ios::trunc);
    if (!js) throw std::runtime_error("cannot open '" + result.summary_path.string() + "'");
    js << summary.dump(2) << '\n';
    js.close();
  } else {
    summary["artifacts"] = nlohmann::json();
  }

  result.summary = std::move(summary);
  result.rows = std::move(rows);
  return result;
}

}  // namespace harness_detail

inline State build_initial_state(const ExperimentConfig& cfg) {
  Grid g(cfg.d, cfg.n, cfg.L);
  return make_state(g, harness_detail::build_profile(cfg.u, cfg.L),
                    harness_detail::build_profile(cfg.ut, cfg.L),
                    harness_detail::build_profile(cfg.v, cfg.L),
                    harness_detail::build_profile(cfg.vt, cfg.L));
}

inline RunResult run_experiment(const ExperimentConfig& cfg_in, const RunOverrides& ov = {}) {
  ExperimentConfig cfg = cfg_in;
  if (ov.stride) cfg.stride = *ov.stride;
  if (ov.force_override_horizon) cfg.override_horizon = true;
  const State s0 = build_initial_state(cfg);
  harness_detail::validate_run(cfg, s0.grid(), s0, 0.0);
  const double e0 = energy_weighted(s0, cfg.params);
  return harness_detail::execute_run(cfg, ov, s0, 0, e0);
}

// Resumes a run from a harness snapshot.  The config supplies the original
// initial data (the drift reference energy is recomputed from it bit-exactly)
// and the total horizon T; rows are emitted from the snapshot time onward.
inline RunResult resume_experiment(const std::filesystem::path& snapshot_path,
                                   const ExperimentConfig& cfg_in, const RunOverrides& ov = {}) {
  ExperimentConfig cfg = cfg_in;
  if (ov.stride) cfg.stride = *ov.stride;
  if (ov.force_override_horizon) cfg.override_horizon = true;

  const SnapshotData snap = read_snapshot(snapshot_path);
  std::vector<std::string> errors;
  const Grid& g = snap.state.grid();
  if (g.dim != cfg.d || g.points_per_axis != cfg.n || g.box_length != cfg.L)
    errors.push_back("snapshot grid (d=" + std::to_string(g.dim) +
                     ", n=" + std::to_string(g.points_per_axis) + ") does not match the config");
  const CouplingParams& a = snap.params;
  const CouplingParams& b = cfg.params;
  if (a.lambda != b.lambda || a.mu != b.mu || a.alpha != b.alpha || a.beta != b.beta ||
      a.sign != b.sign)
    errors.push_back("snapshot coupling parameters do not match the config");
  const double t_r = snap.state.t;
  if (!(t_r >= 0.0 && t_r <= cfg.T + 1e-12))
    errors.push_back("snapshot time " + harness_detail::format_g17(t_r) +
                     " lies outside [0, run.T]");
  const double steps_real = t_r / cfg.dt;
  const long long k = std::llround(steps_real);
  if (k < 0 || std::abs(static_cast<double>(k) * cfg.dt - t_r) > 1e-9 * std::max(1.0, cfg.T))
    errors.push_back("snapshot time is not a whole number of dt steps");
  else if (k % cfg.stride != 0)
    errors.push_back("snapshot time is not a stride boundary (stride " +
                     std::to_string(cfg.stride) + ")");
  if (cfg.scattering_enabled)
    errors.push_back("scattering extraction needs the full trajectory; rerun from t = 0");
  if (cfg.cone_enabled && cfg.cone.section_lo < t_r - 1e-12)
    errors.push_back("cone section_lo lies before the snapshot time; flux cannot be resumed");
  if (cfg.morawetz_enabled && cfg.morawetz_start < t_r - 1e-12)
    errors.push_back("morawetz start lies before the snapshot time");
  if (!errors.empty()) {
    std::string msg = "resume validation:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }

  const State s_init = build_initial_state(cfg);
  harness_detail::validate_run(cfg, g, s_init, t_r);
  const double e0 = energy_weighted(s_init, cfg.params);
  return harness_detail::execute_run(cfg, ov, snap.state, static_cast<std::size_t>(k), e0);
}

// ---------------------------------------------------------------------------
// Critical-line sweeps
// ---------------------------------------------------------------------------

struct SweepRowSpec {
  double alpha = 0.0;
  double beta = 0.0;
  double amplitude_scale = 1.0;
};

struct SweepSpec {
  ExperimentConfig base;
  std::vector<SweepRowSpec> rows;
};

// Sweep files carry the base experiment keys plus:
//   sweep.pairs            list of alpha:beta tokens (declared order kept)
//   sweep.sums             list of alpha+beta sums for a critical-line sweep
//   sweep.ratios           list of alpha/(alpha+beta) fractions (default 0.5)
//   sweep.amplitude_scales list of data-amplitude multipliers (default 1)
// Rows are the declared pairs, then sums x ratios, each crossed with every
// amplitude scale.
inline SweepSpec load_sweep_spec(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> base_kv = kv;
  std::vector<std::string> pair_tokens;
  std::vector<double> sums, ratios, scales;
  {
    std::set<std::string> used;
    std::vector<std::string> errors;
    harness_detail::ConfigView view{kv, used, errors};
    pair_tokens = harness_detail::split_ws(view.str("sweep.pairs", ""));
    sums = view.real_list("sweep.sums");
    ratios = view.real_list("sweep.ratios");
    scales = view.real_list("sweep.amplitude_scales");
    if (!errors.empty()) {
      std::string msg = "sweep validation:";
      for (const auto& e : errors) msg += "\n  - " + e;
      throw std::invalid_argument(msg);
    }
    for (const std::string& key : used) base_kv.erase(key);
  }

  SweepSpec spec;
  spec.base = load_experiment_config(base_kv);
  if (ratios.empty()) ratios.push_back(0.5);
  if (scales.empty()) scales.push_back(1.0);

  std::vector<std::string> errors;
  std::vector<std::pair<double, double>> pairs;
  for (const std::string& tok : pair_tokens) {
    const auto colon = tok.find(':');
    double a = 0.0, b = 0.0;
    bool ok = colon != std::string::npos;
    if (ok) {
      try {
        a = std::stod(tok.substr(0, colon));
        b = std::stod(tok.substr(colon + 1));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      errors.push_back("sweep.pairs: expected alpha:beta, got '" + tok + "'");
      continue;
    }
    pairs.emplace_back(a, b);
  }
  for (double sum : sums)
    for (double ratio : ratios) pairs.emplace_back(ratio * sum, (1.0 - ratio) * sum);

  for (const auto& [a, b] : pairs) {
    if (!(a >= 0.0) || !(b >= 0.0)) {
      std::ostringstream os;
      os << "sweep pair (" << a << ", " << b << "): alpha and beta must be >= 0";
      errors.push_back(os.str());
      continue;
    }
    for (double scale : scales) spec.rows.push_back({a, b, scale});
  }
  if (spec.rows.empty()) errors.push_back("sweep defines no rows (set sweep.pairs or sweep.sums)");
  if (!errors.empty()) {
    std::string msg = "sweep validation:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
  return spec;
}

inline SweepSpec load_sweep_spec_text(const std::string& text) {
  return load_sweep_spec(parse_config_text(text));
}

struct SweepRowResult {
  SweepRowSpec spec;
  std::string verdict;  // "global" | "blowup" | "error"
  std::optional<double> detection_time;
  double max_sup = 0.0;
  double drift_rel = 0.0;
  std::string error;
};

namespace harness_detail {

inline ExperimentConfig row_config(const SweepSpec& spec, const SweepRowSpec& row) {
  ExperimentConfig cfg = spec.base;
  cfg.params.alpha = row.alpha;
  cfg.params.beta = row.beta;
  for (ProfileSpec* ps : {&cfg.u, &cfg.ut, &cfg.v, &cfg.vt})
    ps->amplitude *= row.amplitude_scale;
  return cfg;
}

inline SweepRowResult run_sweep_row(const SweepSpec& spec, const SweepRowSpec& row) {
  SweepRowResult out;
  out.spec = row;
  try {
    RunOverrides ov;
    ov.write_artifacts = false;
    const RunResult r = run_experiment(row_config(spec, row), ov);
    out.verdict = r.verdict;
    out.max_sup = std::max(r.summary["sup_u_max"].get<double>(),
                           r.summary["sup_v_max"].get<double>());
    if (!r.rows.empty()) out.drift_rel = r.rows.back().rec.E_w_drift_rel;
    if (!r.summary["detection_time"].is_null())
      out.detection_time = r.summary["detection_time"].get<double>();
  } catch (const std::exception& e) {
    out.verdict = "error";
    out.error = e.what();
  }
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace harness_detail

inline const char* sweep_csv_header() {
  return "alpha,beta,amplitude_scale,verdict,detection_time,max_sup,E_w_drift_rel,error";
}

// Runs every sweep row (concurrently up to `workers`), keeping declared
// order in the result table.  Row failures are recorded, never fatal.
inline std::vector<SweepRowResult> run_sweep(const SweepSpec& spec, int workers = 1) {
  if (workers < 1) throw std::invalid_argument("run_sweep: workers must be >= 1");
  std::vector<SweepRowResult> results(spec.rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= spec.rows.size()) return;
      results[i] = harness_detail::run_sweep_row(spec, spec.rows[i]);
    }
  };
  const int n_threads = std::min<int>(workers, static_cast<int>(spec.rows.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  return results;
}

inline std::string sweep_csv(const std::vector<SweepRowResult>& results) {
  using harness_detail::format_g17;
  std::string out = sweep_csv_header();
  out += '\n';
  for (const SweepRowResult& r : results) {
    out += format_g17(r.spec.alpha);
    out += ',' + format_g17(r.spec.beta);
    out += ',' + format_g17(r.spec.amplitude_scale);
    out += ',' + r.verdict;
    out += ',' + (r.detection_time ? format_g17(*r.detection_time) : std::string());
    out += ',' + format_g17(r.max_sup);
    out += ',' + format_g17(r.drift_rel);
    out += ',' + harness_detail::csv_escape(r.error);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in verification suite (the CLI `verify` subcommand)
// ---------------------------------------------------------------------------

// Fast self-contained invariant checks; prints one PASS/FAIL line each and
// returns the failure count.
inline int run_builtin_verification(std::ostream& os) {
  int failures = 0;
  auto check = [&](const char* name, bool ok, const std::string& detail) {
    os << (ok ? "PASS" : "FAIL") << "  " << name;
    if (!ok && !detail.empty()) os << "  (" << detail << ")";
    os << '\n';
    if (!ok) ++failures;
  };
  auto detail_val = [](double x) { return "value " + harness_detail::format_g17(x); };

  Grid g(2, 32, 8.0);
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};

  {  // spectral round trip
    State s = make_state(g, gaussian_profile(0.7, 0.9), gaussian_profile(-0.2, 1.1),
                         zero_profile(), zero_profile());
    const MultiplierPlan& plan = plan_for(g);
    Field back = plan.inverse(plan.forward(s.u));
    double worst = 0.0;
    for (std::size_t i = 0; i < g.total; ++i) worst = std::max(worst, std::abs(back[i] - s.u[i]));
    check("fourier round trip", worst <= 1e-13, detail_val(worst));
  }
  {  // Parseval: physical l2 equals spectral l2
    Field f = make_state(g, gaussian_profile(0.5, 1.0), zero_profile(), zero_profile(),
                         zero_profile())
                  .u;
    const double a = l2_norm(f);
    const double b = sobolev_norm(f, 0.0);
    check("parseval identity", std::abs(a - b) <= 1e-12 * std::max(1.0, a),
          detail_val(std::abs(a - b)));
  }
  {  // plane wave: u(t,x) = cos(xi t) sin(k x) under the free flow
    const int harmonic = 3;
    State s = make_state(g, sine_profile(1.0, 0, harmonic, g.box_length), zero_profile(),
                         zero_profile(), zero_profile());
    const double xi = 2.0 * pi * harmonic / g.box_length;
    const double t = 0.37;
    State out = propagate_linear(s, t);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.total; ++i)
      worst = std::max(worst, std::abs(out.u[i] - std::cos(xi * t) * s.u[i]));
    check("plane wave rotation", worst <= 1e-12, detail_val(worst));
  }
  {  // free group law A(s + t) = A(s) A(t)
    State s = make_state(g, gaussian_profile(0.6, 0.8), gaussian_profile(0.2, 1.0),
                         zero_profile(), zero_profile());
    State two = propagate_linear(propagate_linear(s, 0.3), 0.4);
    State one = propagate_linear(s, 0.7);
    check("free group law", harness_detail::state_sup_diff(two, one) <= 1e-12,
          detail_val(harness_detail::state_sup_diff(two, one)));
  }
  {  // time reversal: the free flow run forward then backward returns the data
    State s = make_state(g, gaussian_profile(0.3, 0.8), gaussian_profile(0.15, 1.2),
                         gaussian_profile(-0.25, 0.9), zero_profile());
    State back = propagate_linear(propagate_linear(s, 0.7), -0.7);
    back.t = s.t;
    check("time reversal", harness_detail::state_sup_diff(back, s) <= 1e-12,
          detail_val(harness_detail::state_sup_diff(back, s)));
  }
  {  // v = 0 decoupling onto the linear flow
    State s = make_state(g, gaussian_profile(0.8, 0.7), gaussian_profile(-0.3, 0.9),
                         zero_profile(), zero_profile());
    IntegrateOptions opt;
    opt.override_horizon = true;
    Trajectory traj = integrate(s, 1.0, 0.05, p, opt);
    State lin = propagate_linear(s, 1.0);
    check("linear decoupling", harness_detail::state_sup_diff(traj.states.back(), lin) <= 1e-12,
          detail_val(harness_detail::state_sup_diff(traj.states.back(), lin)));
  }
  {  // weighted energy conservation on a coupled defocusing run
    State s = make_state(g, gaussian_profile(1.2, 0.9), zero_profile(),
                         gaussian_profile(-1.0, 1.05), zero_profile());
    const double e0 = energy_weighted(s, p);
    IntegrateOptions opt;
    opt.override_horizon = true;
    Trajectory traj = integrate(s, 0.5, 0.0125, p, opt);
    const double e1 = energy_weighted(traj.states.back(), p);
    const double drift = std::abs(e1 - e0) / std::abs(e0);
    check("energy conservation", drift <= 1e-6, detail_val(drift));
  }
  {  // determinism: identical runs produce identical bits
    State s = make_state(g, gaussian_profile(0.9, 0.8), zero_profile(),
                         gaussian_profile(-0.7, 0.9), zero_profile());
    IntegrateOptions opt;
    opt.override_horizon = true;
    Trajectory t1 = integrate(s, 0.3, 0.05, p, opt);
    Trajectory t2 = integrate(s, 0.3, 0.05, p, opt);
    check("determinism", harness_detail::state_sup_diff(t1.states.back(), t2.states.back()) == 0.0, "");
  }
  {  // snapshot round trip is bitwise
    State s = make_state(g, gaussian_profile(0.4, 0.7), gaussian_profile(0.1, 0.8),
                         gaussian_profile(-0.2, 0.9), zero_profile());
    s.t = 0.625;
    const auto path = std::filesystem::temp_directory_path() / "wavesys_verify.wpl1";
    write_snapshot(path, s, p);
    SnapshotData snap = read_snapshot(path);
    std::filesystem::remove(path);
    const bool same = snap.state.u.values == s.u.values && snap.state.ut.values == s.ut.values &&
                      snap.state.v.values == s.v.values && snap.state.vt.values == s.vt.values &&
                      snap.state.t == s.t && snap.params.beta == p.beta;
    check("snapshot round trip", same, "");
  }
  {  // critical exponent closed form
    check("critical exponent", critical_exponent(3, 0.0, 2.0) == 1.0 &&
                                   critical_exponent(4, 0.0, 0.0) == 1.0,
          "");
  }
  return failures;
}

}  // namespace wavesys
