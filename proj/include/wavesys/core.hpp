#pragma once

// Core value types: grids, fields, states, coupling parameters, cone geometry.
// Everything here is value-semantic and freely movable between threads.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wavesys {

inline constexpr double pi = 3.14159265358979323846264338327950288;

// Uniform periodic grid on [-L/2, L/2)^d, n points per axis, h = L/n.
// Index i along an axis sits at coordinate -L/2 + i*h, so the origin is the
// grid point i = n/2.
struct Grid {
  int dim = 0;
  int points_per_axis = 0;
  double box_length = 0.0;
  double spacing = 0.0;
  std::size_t total = 0;

  Grid() = default;

  Grid(int d, int n, double L, std::size_t max_points = default_max_points()) {
    if (d < 2 || d > 4)
      throw std::invalid_argument("Grid: dim must be 2, 3, or 4 (got " + std::to_string(d) + ")");
    if (n < 8 || (n & (n - 1)) != 0)
      throw std::invalid_argument("Grid: points per axis must be a power of two >= 8 (got " +
                                  std::to_string(n) + ")");
    if (!(L > 0.0) || !std::isfinite(L))
      throw std::invalid_argument("Grid: box length must be positive and finite");
    std::size_t count = 1;
    for (int a = 0; a < d; ++a) {
      if (count > max_points / static_cast<std::size_t>(n))
        throw std::invalid_argument("Grid: n^d exceeds the memory budget of " +
                                    std::to_string(max_points) + " points");
      count *= static_cast<std::size_t>(n);
    }
    dim = d;
    points_per_axis = n;
    box_length = L;
    spacing = L / n;  // exact for power-of-two n
    total = count;
  }

  static constexpr std::size_t default_max_points() { return std::size_t{1} << 31; }

  double coordinate(int i) const { return -0.5 * box_length + i * spacing; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dim == b.dim && a.points_per_axis == b.points_per_axis &&
           a.box_length == b.box_length;
  }
};

// Visits every grid point; idx receives the per-axis indices (size dim).
template <class F>
void for_each_point(const Grid& g, F&& f) {
  std::array<int, 4> idx{};
  const int n = g.points_per_axis;
  for (std::size_t flat = 0; flat < g.total; ++flat) {
    f(flat, std::span<const int>(idx.data(), static_cast<std::size_t>(g.dim)));
    for (int a = g.dim - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < n) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }
}

// Real scalar samples over a grid, row-major.
struct Field {
  Grid grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(g.total, fill) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

inline double max_abs(const Field& f) {
  double m = 0.0;
  for (double x : f.values) m = std::max(m, std::abs(x));
  return m;
}

inline bool all_finite(const Field& f) {
  for (double x : f.values)
    if (!std::isfinite(x)) return false;
  return true;
}

// Solution snapshot (u, u_t, v, v_t) at time t; all fields share one grid.
struct State {
  double t = 0.0;
  Field u, ut, v, vt;

  State() = default;
  explicit State(const Grid& g, double time = 0.0) : t(time), u(g), ut(g), v(g), vt(g) {}

  const Grid& grid() const { return u.grid; }

  void check_consistent() const {
    if (!(u.grid == ut.grid && u.grid == v.grid && u.grid == vt.grid))
      throw std::invalid_argument("State: fields do not share one grid");
  }
};

// Exchanges the roles of the two components: (u,ut) <-> (v,vt).
inline State swapped(const State& s) {
  State r;
  r.t = s.t;
  r.u = s.v;
  r.ut = s.vt;
  r.v = s.u;
  r.vt = s.ut;
  return r;
}

// Parameters of the coupled system
//   u_tt - Lap u = sign * lambda * |u|^alpha    * |v|^(beta+2) * u
//   v_tt - Lap v = sign * mu     * |u|^(alpha+2) * |v|^beta     * v
// sign = -1 gives the defocusing-type convention used by default.
struct CouplingParams {
  double lambda = 1.0;
  double mu = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  int sign = -1;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0))
      throw std::invalid_argument("CouplingParams: alpha and beta must be >= 0");
    if (!std::isfinite(lambda) || !std::isfinite(mu))
      throw std::invalid_argument("CouplingParams: lambda and mu must be finite");
    if (sign != 1 && sign != -1)
      throw std::invalid_argument("CouplingParams: sign must be +1 or -1");
  }

  // Energy weights: the u-block carries A = mu*(alpha+2), the v-block
  // B = lambda*(beta+2). Recomputed on demand, never stored.
  double weight_u() const { return mu * (alpha + 2.0); }
  double weight_v() const { return lambda * (beta + 2.0); }

  CouplingParams swapped_roles() const { return {mu, lambda, beta, alpha, sign}; }
};

inline std::pair<double, double> weights(const CouplingParams& p) {
  return {p.weight_u(), p.weight_v()};
}

// Backward light cone with vertex (apex_x, apex_t); sections taken at times
// in [section_lo, section_hi]. The spatial ball at time t has radius apex_t - t.
struct ConeSpec {
  std::array<double, 4> apex_x{0.0, 0.0, 0.0, 0.0};
  double apex_t = 0.0;
  double section_lo = 0.0;
  double section_hi = 0.0;

  void validate(const Grid& g) const {
    std::vector<std::string> bad;
    if (!(section_lo <= section_hi))
      bad.push_back("section times must satisfy S <= T");
    if (!(section_hi <= apex_t))
      bad.push_back("sections must not pass the vertex time");
    const double r_max = apex_t - section_lo;
    for (int a = 0; a < g.dim; ++a) {
      const double margin = 0.5 * g.box_length - std::abs(apex_x[static_cast<std::size_t>(a)]);
      if (r_max + 2.0 * g.spacing > margin) {
        std::ostringstream os;
        os << "cone ball (radius " << r_max << ") leaves the box margin on axis " << a
           << " (need radius + 2h <= " << margin << ")";
        bad.push_back(os.str());
        break;
      }
    }
    if (!bad.empty()) {
      std::string msg = "ConeSpec:";
      for (const auto& b : bad) msg += " " + b + ";";
      throw std::invalid_argument(msg);
    }
  }
};

using Profile = std::function<double(std::span<const double>)>;

inline Profile zero_profile() {
  return [](std::span<const double>) { return 0.0; };
}

// a * exp(-|x - c|^2 / w^2)
inline Profile gaussian_profile(double amplitude, double width,
                                std::array<double, 4> center = {0.0, 0.0, 0.0, 0.0}) {
  return [amplitude, width, center](std::span<const double> x) {
    double r2 = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) {
      const double d = x[a] - center[a];
      r2 += d * d;
    }
    return amplitude * std::exp(-r2 / (width * width));
  };
}

// a * sin(2*pi*harmonic*x_axis / L)
inline Profile sine_profile(double amplitude, int axis, int harmonic, double L) {
  return [amplitude, axis, harmonic, L](std::span<const double> x) {
    return amplitude * std::sin(2.0 * pi * harmonic * x[static_cast<std::size_t>(axis)] / L);
  };
}

// Samples four closed-form profiles onto a grid, producing the t = 0 state.
inline State make_state(const Grid& g, const Profile& u0, const Profile& ut0, const Profile& v0,
                        const Profile& vt0) {
  State s(g, 0.0);
  const char* names[4] = {"u", "ut", "v", "vt"};
  const Profile* profs[4] = {&u0, &ut0, &v0, &vt0};
  Field* fields[4] = {&s.u, &s.ut, &s.v, &s.vt};
  std::array<double, 4> x{};
  for_each_point(g, [&](std::size_t flat, std::span<const int> idx) {
    for (int a = 0; a < g.dim; ++a)
      x[static_cast<std::size_t>(a)] = g.coordinate(idx[static_cast<std::size_t>(a)]);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(g.dim));
    for (int k = 0; k < 4; ++k) {
      const double val = (*profs[k])(xs);
      if (!std::isfinite(val)) {
        std::ostringstream os;
        os << "make_state: profile for field '" << names[k] << "' produced a non-finite value at (";
        for (int a = 0; a < g.dim; ++a) os << (a ? ", " : "") << xs[static_cast<std::size_t>(a)];
        os << ")";
        throw std::domain_error(os.str());
      }
      (*fields[k])[flat] = val;
    }
  });
  return s;
}

}  // namespace wavesys
