#pragma once

// Time evolution: an interaction-picture (integrating-factor) RK4 stepper
// whose linear half-wave part is applied exactly by per-mode rotations, the
// Picard/Duhamel local solver, the mollified variant, and blowup detection.
//
// The long-run scheme works on the spectral representation of
// Y = (uhat, uthat, vhat, vthat). With E(dt) the exact linear propagator and
// N(Y) = (0, f1hat, 0, f2hat) the de-aliased nonlinear source, one step is
// the classical Lawson form of RK4:
//   k1 = N(Y)
//   k2 = N(E2 Y + (dt/2) E2 k1)      E2 = E(dt/2)
//   k3 = N(E2 Y + (dt/2) k2)
//   k4 = N(E  Y + dt     E2 k3)
//   Y' = E Y + (dt/6) (E k1 + 2 E2 k2 + 2 E2 k3 + k4)
// This is exact when N == 0, which makes the v == 0 decoupling property a
// statement about rotations only, and it is fourth order in dt otherwise.
//
// Determinism contract: integrate() materializes the physical-space state at
// every stride boundary and re-enters the spectral loop by transforming that
// materialized state. Snapshots written at boundaries therefore contain the
// exact continuation state, so a resumed run reproduces the original run
// bitwise (same dt, same stride).

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "fourier.hpp"
#include "nonlinear.hpp"
#include "spectral.hpp"

namespace wavesys {

struct BlowupDiagnostic {
  double t = 0.0;
  std::string field;
  double value = 0.0;
};

struct Trajectory {
  std::vector<State> states;  // time-ordered, strided, finite
  double dt = 0.0;
  int stride = 1;
  std::string scheme;
  std::optional<BlowupDiagnostic> blowup;

  const State& initial() const { return states.front(); }
  const State& final_state() const { return states.back(); }
};

// Sup-norm / finiteness scan. Returns a record naming the first offending
// field if any value is non-finite or exceeds the threshold.
inline std::optional<BlowupDiagnostic> detect_blowup(const State& s, double threshold) {
  const char* names[4] = {"u", "ut", "v", "vt"};
  const Field* fields[4] = {&s.u, &s.ut, &s.v, &s.vt};
  for (int k = 0; k < 4; ++k) {
    for (double x : fields[k]->values)
      if (!std::isfinite(x)) return BlowupDiagnostic{s.t, names[k], x};
    const double m = max_abs(*fields[k]);
    if (m > threshold) return BlowupDiagnostic{s.t, names[k], m};
  }
  return std::nullopt;
}

// Smallest radius containing all samples above 1e-10 of the state's sup;
// 0 for identically-zero data. Used by the horizon guard.
inline double effective_data_radius(const State& s) {
  const Grid& g = s.grid();
  double sup = 0.0;
  for (const Field* f : {&s.u, &s.ut, &s.v, &s.vt}) sup = std::max(sup, max_abs(*f));
  if (sup == 0.0) return 0.0;
  const double cut = 1e-10 * sup;
  double radius = 0.0;
  for_each_point(g, [&](std::size_t flat, std::span<const int> idx) {
    const double m = std::max(std::max(std::abs(s.u[flat]), std::abs(s.ut[flat])),
                              std::max(std::abs(s.v[flat]), std::abs(s.vt[flat])));
    if (m <= cut) return;
    double r2 = 0.0;
    for (int a = 0; a < g.dim; ++a) {
      const double x = g.coordinate(idx[static_cast<std::size_t>(a)]);
      r2 += x * x;
    }
    radius = std::max(radius, std::sqrt(r2));
  });
  return radius;
}

// Checks that data of the given radius cannot feel the periodic boundary
// within time extent: radius + extent <= L/2 - 2h (unit propagation speed).
inline void check_horizon(const Grid& g, double radius, double extent, const char* who) {
  const double limit = 0.5 * g.box_length - 2.0 * g.spacing;
  if (radius + extent > limit) {
    std::ostringstream os;
    os << who << ": horizon violation: data radius " << radius << " + time extent " << extent
       << " exceeds L/2 - 2h = " << limit
       << " (wrap-around would contaminate the run; shrink T, enlarge the box, or override)";
    throw std::invalid_argument(os.str());
  }
}

namespace detail {

using Cvec = std::vector<std::complex<double>>;

struct SpecQuad {
  Cvec c[4];  // uhat, uthat, vhat, vthat
  explicit SpecQuad(std::size_t modes) {
    for (auto& v : c) v.assign(modes, {0.0, 0.0});
  }
  SpecQuad() = default;
};

// Exact half-wave rotation table for a fixed time offset.
struct RotationTable {
  std::vector<double> cosv, sin_over, neg_sin;
  RotationTable() = default;
  RotationTable(const MultiplierPlan& plan, double dt) {
    const std::size_t m = plan.mode_count();
    cosv.resize(m);
    sin_over.resize(m);
    neg_sin.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double xi = plan.xi_abs(k);
      if (xi == 0.0) {
        cosv[k] = 1.0;
        sin_over[k] = dt;
        neg_sin[k] = 0.0;
      } else {
        const double th = xi * dt;
        const double s = std::sin(th);
        cosv[k] = std::cos(th);
        sin_over[k] = s / xi;
        neg_sin[k] = -xi * s;
      }
    }
  }

  void apply(SpecQuad& dst, const SpecQuad& src) const {
    const std::size_t m = cosv.size();
    for (int pair = 0; pair < 2; ++pair) {
      const Cvec& p = src.c[2 * pair];
      const Cvec& q = src.c[2 * pair + 1];
      Cvec& dp = dst.c[2 * pair];
      Cvec& dq = dst.c[2 * pair + 1];
      for (std::size_t k = 0; k < m; ++k) {
        const std::complex<double> a = p[k], b = q[k];
        dp[k] = cosv[k] * a + sin_over[k] * b;
        dq[k] = neg_sin[k] * a + cosv[k] * b;
      }
    }
  }
};

// Workspace for the spectral loop; owns all scratch so stepping allocates
// nothing. A mollifier symbol may wrap the nonlinearity (integrate_mollified).
struct SpectralStepper {
  const MultiplierPlan& plan;
  CouplingParams params;
  std::size_t modes;
  RotationTable half;  // E(dt/2)
  std::vector<double> moll;  // empty = no mollifier
  SpecQuad Z, K, ACC, ARG, EZ;
  Field pu, pv, pf1, pf2;
  Cvec scratch;
  double dt;

  SpectralStepper(const Grid& g, double dt_, const CouplingParams& p, int moll_scale = 0)
      : plan(plan_for(g)),
        params(p),
        modes(plan.mode_count()),
        half(plan, dt_ * 0.5),
        Z(modes),
        K(modes),
        ACC(modes),
        ARG(modes),
        EZ(modes),
        pu(g),
        pv(g),
        pf1(g),
        pf2(g),
        scratch(modes),
        dt(dt_) {
    if (moll_scale > 0) {
      moll.resize(modes);
      for (std::size_t k = 0; k < modes; ++k)
        moll[k] = mollifier_symbol(plan.xi_abs(k), moll_scale);
    }
  }

  void to_spectral(const State& s, SpecQuad& out) {
    plan.execute_forward(s.u.values.data(), out.c[0].data());
    plan.execute_forward(s.ut.values.data(), out.c[1].data());
    plan.execute_forward(s.v.values.data(), out.c[2].data());
    plan.execute_forward(s.vt.values.data(), out.c[3].data());
  }

  State to_physical(const SpecQuad& y, double t) {
    State s(plan.grid(), t);
    Field* fields[4] = {&s.u, &s.ut, &s.v, &s.vt};
    const double inv_n = 1.0 / static_cast<double>(plan.grid().total);
    for (int k = 0; k < 4; ++k) {
      scratch = y.c[k];
      plan.execute_inverse_destructive(scratch.data(), fields[k]->values.data());
      for (double& x : fields[k]->values) x *= inv_n;
    }
    return s;
  }

  // N(Y) = (0, f1hat, 0, f2hat), de-aliased; with a mollifier m the source is
  // m * fhat(m*u, m*v) per the regularized system.
  void eval_source(const SpecQuad& y, SpecQuad& out) {
    const double inv_n = 1.0 / static_cast<double>(plan.grid().total);
    auto inverse_component = [&](const Cvec& src, Field& dst) {
      scratch = src;
      if (!moll.empty())
        for (std::size_t k = 0; k < modes; ++k) scratch[k] *= moll[k];
      plan.execute_inverse_destructive(scratch.data(), dst.values.data());
      for (double& x : dst.values) x *= inv_n;
    };
    inverse_component(y.c[0], pu);
    inverse_component(y.c[2], pv);
    pf1 = eval_f1(pu, pv, params);
    pf2 = eval_f2(pu, pv, params);
    plan.execute_forward(pf1.values.data(), out.c[1].data());
    plan.execute_forward(pf2.values.data(), out.c[3].data());
    for (std::size_t k = 0; k < modes; ++k) {
      const double keep = plan.dealias_keep(k) ? 1.0 : 0.0;
      const double m = moll.empty() ? 1.0 : moll[k];
      out.c[1][k] *= keep * m;
      out.c[3][k] *= keep * m;
      out.c[0][k] = {0.0, 0.0};
      out.c[2][k] = {0.0, 0.0};
    }
  }

  static void axpy(SpecQuad& y, double a, const SpecQuad& x) {
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < y.c[c].size(); ++k) y.c[c][k] += a * x.c[c][k];
  }

  // One Lawson-RK4 step of Y in place.
  void advance(SpecQuad& Y) {
    eval_source(Y, K);        // k1
    half.apply(Z, Y);         // Z = E2 Y
    half.apply(ACC, K);       // ACC = E2 k1
    for (int c = 0; c < 4; ++c) {
      for (std::size_t k = 0; k < modes; ++k)
        ARG.c[c][k] = Z.c[c][k] + 0.5 * dt * ACC.c[c][k];
    }
    eval_source(ARG, K);      // k2
    half.apply(EZ, ACC);      // EZ = E k1 (temporarily)
    std::swap(ACC.c[0], EZ.c[0]);
    std::swap(ACC.c[1], EZ.c[1]);
    std::swap(ACC.c[2], EZ.c[2]);
    std::swap(ACC.c[3], EZ.c[3]);  // ACC = E k1
    half.apply(ARG, K);       // ARG = E2 k2
    axpy(ACC, 2.0, ARG);
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < modes; ++k)
        ARG.c[c][k] = Z.c[c][k] + 0.5 * dt * K.c[c][k];  // Z + dt/2 k2
    eval_source(ARG, K);      // k3
    half.apply(ARG, K);       // ARG = E2 k3
    axpy(ACC, 2.0, ARG);
    half.apply(EZ, Z);        // EZ = E Y
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < modes; ++k)
        Z.c[c][k] = EZ.c[c][k] + dt * ARG.c[c][k];  // E Y + dt E2 k3
    eval_source(Z, K);        // k4
    axpy(ACC, 1.0, K);
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < modes; ++k)
        Y.c[c][k] = EZ.c[c][k] + dt / 6.0 * ACC.c[c][k];
  }
};

inline void check_dt_budget(const Grid& g, double dt, bool override_budget, const char* who) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument(std::string(who) + ": dt must be positive and finite");
  if (!override_budget && dt > 0.5 * g.spacing * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << who << ": dt = " << dt << " exceeds the stability budget 0.5*h = " << 0.5 * g.spacing
       << " (nonlinear source resolution); pass the override to proceed anyway";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

// One interaction-picture RK4 step.
inline State step(const State& s, double dt, const CouplingParams& p,
                  bool override_dt_budget = false) {
  s.check_consistent();
  p.validate();
  detail::check_dt_budget(s.grid(), dt, override_dt_budget, "step");
  detail::SpectralStepper stepper(s.grid(), dt, p);
  detail::SpecQuad Y(stepper.modes);
  stepper.to_spectral(s, Y);
  stepper.advance(Y);
  return stepper.to_physical(Y, s.t + dt);
}

using Observer = std::function<void(const State&, std::size_t step_index)>;

struct IntegrateOptions {
  int stride = 1;
  double blowup_threshold = 1e6;
  std::optional<std::pair<double, double>> store_window;  // retain states with t inside
  std::optional<double> data_radius;  // horizon input; estimated from data when absent
  bool override_horizon = false;
  bool override_dt_budget = false;
  std::vector<Observer> observers;
  int mollifier_scale = 0;  // > 0: regularized system at that scale
};

namespace detail {

inline bool in_window(const IntegrateOptions& opt, double t) {
  if (!opt.store_window) return true;
  const auto [lo, hi] = *opt.store_window;
  return t >= lo - 1e-12 && t <= hi + 1e-12;
}

inline Trajectory integrate_impl(const State& s0, double T, double dt, const CouplingParams& p,
                                 const IntegrateOptions& opt, const char* scheme_name) {
  s0.check_consistent();
  p.validate();
  if (!(T >= 0.0)) throw std::invalid_argument("integrate: T must be >= 0");
  if (opt.stride < 1) throw std::invalid_argument("integrate: stride must be >= 1");

  Trajectory traj;
  traj.dt = dt;
  traj.stride = opt.stride;
  traj.scheme = scheme_name;

  if (T == 0.0) {
    traj.states.push_back(s0);
    return traj;
  }

  check_dt_budget(s0.grid(), dt, opt.override_dt_budget, "integrate");
  const double steps_real = T / dt;
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(steps_real));
  if (n_steps == 0 || std::abs(static_cast<double>(n_steps) * dt - T) > 1e-12 * std::max(1.0, T))
    throw std::invalid_argument("integrate: T must be an integer multiple of dt (within 1e-12)");
  if (!opt.override_horizon) {
    const double radius =
        opt.data_radius ? *opt.data_radius : effective_data_radius(s0);
    check_horizon(s0.grid(), radius, T, "integrate");
  }

  SpectralStepper stepper(s0.grid(), dt, p, opt.mollifier_scale);

  State current = s0;
  if (opt.mollifier_scale > 0) {
    current.u = mollify(s0.u, opt.mollifier_scale);
    current.ut = mollify(s0.ut, opt.mollifier_scale);
    current.v = mollify(s0.v, opt.mollifier_scale);
    current.vt = mollify(s0.vt, opt.mollifier_scale);
  }

  for (const Observer& ob : opt.observers) ob(current, 0);
  if (in_window(opt, current.t)) traj.states.push_back(current);

  SpecQuad Y(stepper.modes);
  stepper.to_spectral(current, Y);

  for (std::size_t i = 1; i <= n_steps; ++i) {
    stepper.advance(Y);
    const bool boundary = (i % static_cast<std::size_t>(opt.stride) == 0) || i == n_steps;
    if (!boundary) continue;
    const double t_here = s0.t + static_cast<double>(i) * dt;
    State phys = stepper.to_physical(Y, t_here);
    if (auto bd = detect_blowup(phys, opt.blowup_threshold)) {
      traj.blowup = bd;
      break;  // stored states end at the last finite snapshot
    }
    for (const Observer& ob : opt.observers) ob(phys, i);
    if (in_window(opt, phys.t)) traj.states.push_back(phys);
    // canonical re-entry from the materialized state: this quantization makes
    // snapshot-resume bitwise-reproducible
    stepper.to_spectral(phys, Y);
  }
  return traj;
}

}  // namespace detail

inline Trajectory integrate(const State& s0, double T, double dt, const CouplingParams& p,
                            const IntegrateOptions& opt = {}) {
  return detail::integrate_impl(s0, T, dt, p, opt, "rk4-interaction");
}

inline Trajectory integrate(const State& s0, double T, double dt, const CouplingParams& p,
                            const std::vector<Observer>& observers, int stride) {
  IntegrateOptions opt;
  opt.observers = observers;
  opt.stride = stride;
  return integrate(s0, T, dt, p, opt);
}

// Regularized evolution: data mollified at scale j, nonlinearity wrapped as
// moll * f(moll*u, moll*v). Conserves the mollified energy to scheme order.
inline Trajectory integrate_mollified(const State& s0, int j, double T, double dt,
                                      const CouplingParams& p, const IntegrateOptions& opt = {}) {
  if (j < 1) throw std::invalid_argument("integrate_mollified: scale index j must be >= 1");
  IntegrateOptions o = opt;
  o.mollifier_scale = j;
  return detail::integrate_impl(s0, T, dt, p, o, "rk4-interaction-mollified");
}

struct PicardReport {
  int iterates = 0;
  std::vector<double> diff_norms;
  std::vector<double> contraction_ratios;
  bool converged = false;
};

// Fixed-point iteration on the Duhamel form
//   u(t) = Kdot(t) u0 + K(t) ut0 + int_0^t K(t - tau) f1(u,v)(tau) dtau
// (same shape for v), discretized on n_time_nodes uniform nodes spanning
// [0, T]. The iterate is stored spectrally at the nodes; the tau-integral
// uses composite 4-point Gauss-Legendre per panel with 4-point Lagrange
// interpolation of the iterate in time, and K is applied as a multiplier.
// The report norm is max over nodes of ||grad d||_2 + ||d||_2 summed over
// the (u, v) pair differences.
inline std::pair<Trajectory, PicardReport> picard_local_solve(const State& s0,
                                                              const CouplingParams& p, double T,
                                                              int n_time_nodes, int max_iter,
                                                              double tol,
                                                              bool override_horizon = false) {
  s0.check_consistent();
  p.validate();
  if (!(T > 0.0)) throw std::invalid_argument("picard_local_solve: T must be > 0");
  if (n_time_nodes < 4)
    throw std::invalid_argument("picard_local_solve: need at least 4 time nodes");
  if (max_iter < 1) throw std::invalid_argument("picard_local_solve: max_iter must be >= 1");
  if (!override_horizon)
    check_horizon(s0.grid(), effective_data_radius(s0), T, "picard_local_solve");

  const Grid& g = s0.grid();
  const MultiplierPlan& plan = plan_for(g);
  const std::size_t modes = plan.mode_count();
  const int M = n_time_nodes - 1;  // panels
  const double dt_node = T / M;
  const std::size_t n_nodes = static_cast<std::size_t>(M + 1);

  using detail::Cvec;
  const Cvec empty(modes, {0.0, 0.0});

  // initial data spectra
  Cvec u0(modes), ut0(modes), v0(modes), vt0(modes);
  plan.execute_forward(s0.u.values.data(), u0.data());
  plan.execute_forward(s0.ut.values.data(), ut0.data());
  plan.execute_forward(s0.v.values.data(), v0.data());
  plan.execute_forward(s0.vt.values.data(), vt0.data());

  // free part at each node (positions now, velocities later)
  auto free_position = [&](double t, const Cvec& pos0, const Cvec& vel0, Cvec& out) {
    for (std::size_t k = 0; k < modes; ++k) {
      const double xi = plan.xi_abs(k);
      if (xi == 0.0)
        out[k] = pos0[k] + t * vel0[k];
      else
        out[k] = std::cos(xi * t) * pos0[k] + std::sin(xi * t) / xi * vel0[k];
    }
  };

  std::vector<Cvec> free_u(n_nodes, empty), free_v(n_nodes, empty);
  for (std::size_t jn = 0; jn < n_nodes; ++jn) {
    const double t = static_cast<double>(jn) * dt_node;
    free_position(t, u0, ut0, free_u[jn]);
    free_position(t, v0, vt0, free_v[jn]);
  }

  std::vector<Cvec> cur_u = free_u, cur_v = free_v;  // iterate 0 = free evolution
  std::vector<Cvec> next_u(n_nodes, empty), next_v(n_nodes, empty);

  // Gauss-Legendre 4-point rule on [-1, 1]
  const double gl_x[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                          0.8611363115940526};
  const double gl_w[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                          0.3478548451374538};

  // quadrature points with Lagrange stencils over nodes base..base+3
  struct QuadPoint {
    double tau;
    double weight;
    int base;
    double lag[4];
  };
  std::vector<QuadPoint> qpts;
  qpts.reserve(static_cast<std::size_t>(4 * M));
  for (int q = 0; q < M; ++q) {
    const double a = q * dt_node, b = (q + 1) * dt_node;
    const int base = std::min(std::max(q - 1, 0), M - 3);
    for (int m = 0; m < 4; ++m) {
      QuadPoint qp;
      qp.tau = 0.5 * (a + b) + 0.5 * (b - a) * gl_x[m];
      qp.weight = 0.5 * (b - a) * gl_w[m];
      qp.base = base;
      for (int i = 0; i < 4; ++i) {
        double num = 1.0, den = 1.0;
        const double ti = (base + i) * dt_node;
        for (int jj = 0; jj < 4; ++jj) {
          if (jj == i) continue;
          const double tj = (base + jj) * dt_node;
          num *= qp.tau - tj;
          den *= ti - tj;
        }
        qp.lag[i] = num / den;
      }
      qpts.push_back(qp);
    }
  }

  // source spectra at quadrature points, refreshed from a given iterate
  std::vector<Cvec> fq_u(qpts.size(), empty), fq_v(qpts.size(), empty);
  Field phys_u(g), phys_v(g);
  Cvec scratch(modes);
  auto refresh_sources = [&](const std::vector<Cvec>& iu, const std::vector<Cvec>& iv) {
    const double inv_n = 1.0 / static_cast<double>(g.total);
    for (std::size_t qi = 0; qi < qpts.size(); ++qi) {
      const QuadPoint& qp = qpts[qi];
      auto interp_to_physical = [&](const std::vector<Cvec>& nodes_spec, Field& out) {
        for (std::size_t k = 0; k < modes; ++k) {
          std::complex<double> acc{0.0, 0.0};
          for (int i = 0; i < 4; ++i)
            acc += qp.lag[i] * nodes_spec[static_cast<std::size_t>(qp.base + i)][k];
          scratch[k] = acc;
        }
        plan.execute_inverse_destructive(scratch.data(), out.values.data());
        for (double& x : out.values) x *= inv_n;
      };
      interp_to_physical(iu, phys_u);
      interp_to_physical(iv, phys_v);
      const Field f1 = eval_f1(phys_u, phys_v, p);
      const Field f2 = eval_f2(phys_u, phys_v, p);
      plan.execute_forward(f1.values.data(), fq_u[qi].data());
      plan.execute_forward(f2.values.data(), fq_v[qi].data());
      for (std::size_t k = 0; k < modes; ++k) {
        if (!plan.dealias_keep(k)) {
          fq_u[qi][k] = {0.0, 0.0};
          fq_v[qi][k] = {0.0, 0.0};
        }
      }
    }
  };

  // one Duhamel update: next = free + int K(t_j - tau) f(tau)
  auto apply_duhamel = [&]() {
    next_u[0] = free_u[0];
    next_v[0] = free_v[0];
    for (std::size_t jn = 1; jn < n_nodes; ++jn) {
      const double tj = static_cast<double>(jn) * dt_node;
      next_u[jn] = free_u[jn];
      next_v[jn] = free_v[jn];
      const std::size_t q_count = 4 * jn;  // panels fully below t_j
      for (std::size_t qi = 0; qi < q_count; ++qi) {
        const double delta = tj - qpts[qi].tau;
        const double w = qpts[qi].weight;
        for (std::size_t k = 0; k < modes; ++k) {
          const double xi = plan.xi_abs(k);
          const double kern = (xi == 0.0) ? delta : std::sin(xi * delta) / xi;
          next_u[jn][k] += w * kern * fq_u[qi][k];
          next_v[jn][k] += w * kern * fq_v[qi][k];
        }
      }
    }
  };

  // report norm: max over nodes of sum of ||grad d||_2 + ||d||_2 over u and v
  const double parseval_scale = std::pow(g.spacing, g.dim) / static_cast<double>(g.total);
  auto diff_norm = [&](const std::vector<Cvec>& au, const std::vector<Cvec>& av,
                       const std::vector<Cvec>& bu, const std::vector<Cvec>& bv) {
    double worst = 0.0;
    for (std::size_t jn = 0; jn < n_nodes; ++jn) {
      double l2_u = 0.0, h1_u = 0.0, l2_v = 0.0, h1_v = 0.0;
      for (std::size_t k = 0; k < modes; ++k) {
        const double wgt = plan.parseval_weight(k);
        const double xi2 = plan.xi_abs(k) * plan.xi_abs(k);
        const double du = std::norm(au[jn][k] - bu[jn][k]);
        const double dv = std::norm(av[jn][k] - bv[jn][k]);
        l2_u += wgt * du;
        h1_u += wgt * xi2 * du;
        l2_v += wgt * dv;
        h1_v += wgt * xi2 * dv;
      }
      const double node_norm = std::sqrt(parseval_scale * h1_u) + std::sqrt(parseval_scale * l2_u) +
                               std::sqrt(parseval_scale * h1_v) + std::sqrt(parseval_scale * l2_v);
      worst = std::max(worst, node_norm);
    }
    return worst;
  };

  PicardReport report;
  for (int iter = 0; iter < max_iter; ++iter) {
    refresh_sources(cur_u, cur_v);
    apply_duhamel();
    const double d = diff_norm(next_u, next_v, cur_u, cur_v);
    if (!std::isfinite(d))
      throw std::runtime_error("picard_local_solve: iterate diverged (non-finite)");
    report.diff_norms.push_back(d);
    if (report.diff_norms.size() > 1) {
      const double prev = report.diff_norms[report.diff_norms.size() - 2];
      report.contraction_ratios.push_back(prev > 0.0 ? d / prev : 0.0);
    }
    std::swap(cur_u, next_u);
    std::swap(cur_v, next_v);
    if (d <= tol) {
      report.converged = true;
      break;
    }
  }
  report.iterates = static_cast<int>(report.diff_norms.size());

  // velocities of the final iterate: d/dt of the Duhamel form, sources
  // recomputed from the converged positions
  refresh_sources(cur_u, cur_v);
  auto free_velocity = [&](double t, const Cvec& pos0, const Cvec& vel0, Cvec& out) {
    for (std::size_t k = 0; k < modes; ++k) {
      const double xi = plan.xi_abs(k);
      if (xi == 0.0)
        out[k] = vel0[k];
      else
        out[k] = -xi * std::sin(xi * t) * pos0[k] + std::cos(xi * t) * vel0[k];
    }
  };
  std::vector<Cvec> vel_u(n_nodes, empty), vel_v(n_nodes, empty);
  for (std::size_t jn = 0; jn < n_nodes; ++jn) {
    const double tj = static_cast<double>(jn) * dt_node;
    free_velocity(tj, u0, ut0, vel_u[jn]);
    free_velocity(tj, v0, vt0, vel_v[jn]);
    const std::size_t q_count = 4 * jn;
    for (std::size_t qi = 0; qi < q_count; ++qi) {
      const double delta = tj - qpts[qi].tau;
      const double w = qpts[qi].weight;
      for (std::size_t k = 0; k < modes; ++k) {
        const double kern = std::cos(plan.xi_abs(k) * delta);  // Kdot; 1 at xi=0
        vel_u[jn][k] += w * kern * fq_u[qi][k];
        vel_v[jn][k] += w * kern * fq_v[qi][k];
      }
    }
  }

  Trajectory traj;
  traj.dt = dt_node;
  traj.stride = 1;
  traj.scheme = "picard";
  const double inv_n = 1.0 / static_cast<double>(g.total);
  for (std::size_t jn = 0; jn < n_nodes; ++jn) {
    State st(g, s0.t + static_cast<double>(jn) * dt_node);
    auto materialize = [&](const Cvec& src, Field& dst) {
      scratch = src;
      plan.execute_inverse_destructive(scratch.data(), dst.values.data());
      for (double& x : dst.values) x *= inv_n;
    };
    materialize(cur_u[jn], st.u);
    materialize(vel_u[jn], st.ut);
    materialize(cur_v[jn], st.v);
    materialize(vel_v[jn], st.vt);
    traj.states.push_back(std::move(st));
  }
  return {std::move(traj), std::move(report)};
}

}  // namespace wavesys
