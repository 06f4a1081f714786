#pragma once

// Critical-exponent arithmetic, Strichartz admissibility predicates,
// numerical scattering-state (wave-operator) extraction, and the energy-norm
// distance that measures how well the free flow of the extracted data tracks
// the nonlinear solution.
//
// Extraction.  The nonlinear solution satisfies the Duhamel identity
//   (u, ut)(t) = A(t)(u10, u20) + Int_0^t A(t - s) (0, f1(s)) ds,
// with A(t) the free wave propagator.  The free data whose linear flow
// matches the solution near t = +T_ext are therefore
//   (u1, u2) = (u10, u20) + Int_0^{T_ext} A(-s) (0, f1(s)) ds
//            = (u10 - Int K(s) f1(s) ds,  u20 + Int K'(s) f1(s) ds),
// where K(s) = sin(s|grad|)/|grad| and K'(s) = cos(s|grad|); the v pair uses
// f2.  The `past` direction flips the sign of the integral term (s -> -s),
// which is the matching convention when the stored trajectory represents the
// backward flow.  The integral is a trapezoid over the stored snapshots, with
// sources de-aliased exactly as the time stepper de-aliases them, so the
// extraction approximates the dynamics the solver actually enacted.
//
// Horizon cap.  On the periodic box the solution emulates free space only up
// to the wrap-around horizon; the extraction integral is never taken past
//   cap = L/2 - 2h - (effective data radius of the initial state),
// and the state records both the cap and the horizon actually used.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wavesys/core.hpp"
#include "wavesys/fourier.hpp"
#include "wavesys/nonlinear.hpp"
#include "wavesys/solver.hpp"
#include "wavesys/spectral.hpp"

namespace wavesys {

// Scaling-critical homogeneous Sobolev exponent of the coupled system.
inline double critical_exponent(int d, double alpha, double beta) {
  if (d < 2 || d > 4) throw std::invalid_argument("critical_exponent: d must be 2, 3, or 4");
  if (!(alpha >= 0.0) || !(beta >= 0.0))
    throw std::invalid_argument("critical_exponent: alpha and beta must be >= 0");
  return 0.5 * d - 2.0 / (alpha + beta + 2.0);
}

// Wave admissibility predicate: 2 <= q <= inf, 2 <= r < inf, and
// 1/q <= (d-1)/2 * (1/2 - 1/r).  Exact inequalities, no tolerance.
inline bool is_wave_admissible(double q, double r, int d) {
  if (d < 2 || d > 4) throw std::invalid_argument("is_wave_admissible: d must be 2, 3, or 4");
  if (!(q >= 2.0)) return false;                       // also rejects NaN
  if (!(r >= 2.0) || !std::isfinite(r)) return false;  // r = inf excluded
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
  return inv_q <= 0.5 * (d - 1) * (0.5 - 1.0 / r);
}

// An exponent pair for space-time norms; the derived exponents are
// recomputed from (q, r, d) on every call and never stored.
struct AdmissiblePair {
  double q = 2.0;
  double r = 2.0;

  double half_minus_inv_r() const { return 0.5 - 1.0 / r; }
  double gamma(int d) const { return (d - 1) * half_minus_inv_r(); }
  double delta(int d) const { return d * half_minus_inv_r(); }
  double eta(int d) const { return 0.5 * (d + 1) * half_minus_inv_r(); }
  bool admissible(int d) const { return is_wave_admissible(q, r, d); }
};

enum class ScatterDirection { past, future };

struct ScatteringState {
  Field u1, u2, v1, v2;  // free data: positions (u1, v1) and velocities (u2, v2)
  ScatterDirection direction = ScatterDirection::future;
  double horizon = 0.0;      // extraction horizon actually integrated to
  double horizon_cap = 0.0;  // wrap-around cap implied by the box geometry
  std::string warning;       // non-empty when capped or outside the small-data regime

  ScatteringState(const Grid& g) : u1(g), u2(g), v1(g), v2(g) {}

  // The free data as a state at time zero, ready for propagate_linear.
  State to_state() const {
    State s(u1.grid);
    s.t = 0.0;
    s.u = u1;
    s.ut = u2;
    s.v = v1;
    s.vt = v2;
    return s;
  }
};

inline ScatteringState extract_scattering_state(const Trajectory& traj, const CouplingParams& p,
                                                ScatterDirection direction) {
  if (traj.states.empty())
    throw std::invalid_argument("extract_scattering_state: empty trajectory");
  p.validate();
  if (traj.blowup) {
    std::ostringstream os;
    os << "extract_scattering_state: trajectory blew up at t = " << traj.blowup->t
       << "; no scattering state exists for this run";
    throw std::runtime_error(os.str());
  }
  const State& init = traj.states.front();
  const Grid& g = init.u.grid;
  const double fuzz = 1e-9 * std::max(1.0, std::abs(traj.states.back().t));

  // Coverage: the trapezoid needs snapshots no sparser than eight steps.
  const double max_gap = 8.0 * traj.dt + fuzz;
  for (std::size_t i = 0; i + 1 < traj.states.size(); ++i) {
    const double gap = traj.states[i + 1].t - traj.states[i].t;
    if (gap > max_gap) {
      std::ostringstream os;
      os << "extract_scattering_state: coverage gap of " << gap
         << " between stored snapshots (need stride <= 8 steps, spacing <= " << 8.0 * traj.dt
         << ")";
      throw std::invalid_argument(os.str());
    }
  }

  ScatteringState out(g);
  out.direction = direction;

  // Wrap-around cap: never integrate past the time to which the box
  // faithfully emulates free space for these data.
  const double cap =
      0.5 * g.box_length - 2.0 * g.spacing - effective_data_radius(init);
  out.horizon_cap = cap;
  std::size_t last = traj.states.size() - 1;
  const double stored_extent = traj.states.back().t - init.t;
  if (cap < stored_extent - fuzz) {
    while (last > 0 && traj.states[last].t - init.t > cap + fuzz) --last;
    std::ostringstream os;
    os << "extraction horizon capped at " << (last == 0 ? 0.0 : traj.states[last].t - init.t)
       << " (stored trajectory reaches " << stored_extent << ") by box wrap-around";
    out.warning = os.str();
  }
  if (last == 0)
    throw std::runtime_error(
        "extract_scattering_state: the wrap-around horizon cap leaves no usable snapshots; "
        "enlarge the box or localize the data");
  out.horizon = traj.states[last].t - init.t;

  const MultiplierPlan& plan = plan_for(g);
  const std::size_t n_modes = plan.xi_abs_table().size();
  std::vector<std::complex<double>> acc_k1(n_modes), acc_c1(n_modes), acc_k2(n_modes),
      acc_c2(n_modes);

  for (std::size_t k = 0; k <= last; ++k) {
    const State& s = traj.states[k];
    const double tau = s.t - init.t;
    double w;
    if (last == 0) {
      w = 0.0;
    } else if (k == 0) {
      w = 0.5 * (traj.states[1].t - traj.states[0].t);
    } else if (k == last) {
      w = 0.5 * (traj.states[last].t - traj.states[last - 1].t);
    } else {
      w = 0.5 * (traj.states[k + 1].t - traj.states[k - 1].t);
    }
    const SpectralField f1 = plan.forward(eval_f1(s.u, s.v, p));
    const SpectralField f2 = plan.forward(eval_f2(s.u, s.v, p));
    for (std::size_t m = 0; m < n_modes; ++m) {
      if (!plan.dealias_keep(m)) continue;
      const double xi = plan.xi_abs(m);
      const double kern = (xi == 0.0) ? tau : std::sin(xi * tau) / xi;
      const double cosk = (xi == 0.0) ? 1.0 : std::cos(xi * tau);
      acc_k1[m] += (w * kern) * f1.modes[m];
      acc_c1[m] += (w * cosk) * f1.modes[m];
      acc_k2[m] += (w * kern) * f2.modes[m];
      acc_c2[m] += (w * cosk) * f2.modes[m];
    }
  }

  auto to_field = [&](std::vector<std::complex<double>>& modes) {
    SpectralField sf(g);
    sf.modes = std::move(modes);
    return plan.inverse(sf);
  };
  const Field ik1 = to_field(acc_k1);
  const Field ic1 = to_field(acc_c1);
  const Field ik2 = to_field(acc_k2);
  const Field ic2 = to_field(acc_c2);

  const double sgn = (direction == ScatterDirection::future) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < g.total; ++i) {
    out.u1[i] = init.u[i] - sgn * ik1[i];
    out.u2[i] = init.ut[i] + sgn * ic1[i];
    out.v1[i] = init.v[i] - sgn * ik2[i];
    out.v2[i] = init.vt[i] + sgn * ic2[i];
  }

  // Small-data advisory: the Duhamel tail estimates that make the extraction
  // meaningful are contraction-regime statements.
  auto pair_norm = [](const Field& pos, const Field& vel) {
    const double gpart = sobolev_norm(pos, 1.0);
    const double vpart = lp_norm(vel, 2.0);
    return std::sqrt(0.5 * (gpart * gpart + vpart * vpart));
  };
  const double data_norm = pair_norm(init.u, init.ut) + pair_norm(init.v, init.vt);
  if (data_norm > 0.25) {
    if (!out.warning.empty()) out.warning += "; ";
    std::ostringstream os;
    os << "initial energy norm " << data_norm
       << " is outside the small-data regime; the free flow may not track the solution";
    out.warning += os.str();
  }
  return out;
}

// Which quadratic pair the scattering distance pairs with the gradient term.
// `gradient_time` is the standard energy seminorm (gradient with the time
// derivative) that the Duhamel estimates control; `gradient_identity` is the
// printed variant pairing the half-Laplacian with the function itself.
enum class EnergyNormVariant { gradient_time, gradient_identity };

inline double energy_norm_distance(const State& s, const ScatteringState& sc, double t,
                                   EnergyNormVariant variant = EnergyNormVariant::gradient_time) {
  if (!(s.u.grid == sc.u1.grid))
    throw std::invalid_argument("energy_norm_distance: state and scattering data must share a grid");
  const State free = propagate_linear(sc.to_state(), t);

  auto seminorm = [&](const Field& w, const Field& wt) {
    const double grad = sobolev_norm(w, 1.0);
    const double second =
        (variant == EnergyNormVariant::gradient_time) ? lp_norm(wt, 2.0) : lp_norm(w, 2.0);
    return std::sqrt(0.5 * (grad * grad + second * second));
  };
  Field du(s.u.grid), dut(s.u.grid), dv(s.u.grid), dvt(s.u.grid);
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    du[i] = s.u[i] - free.u[i];
    dut[i] = s.ut[i] - free.ut[i];
    dv[i] = s.v[i] - free.v[i];
    dvt[i] = s.vt[i] - free.vt[i];
  }
  return seminorm(du, dut) + seminorm(dv, dvt);
}

// ---------------------------------------------------------------------------
// Norm time series
// ---------------------------------------------------------------------------

struct CriticalNormSample {
  double t = 0.0;
  double u_s = 0.0;      // homogeneous H^s of u
  double v_s = 0.0;      // homogeneous H^s of v
  double ut_sm1 = 0.0;   // homogeneous H^{s-1} of ut
  double vt_sm1 = 0.0;   // homogeneous H^{s-1} of vt
};

struct CriticalNormSeries {
  double exponent = 0.0;
  std::vector<CriticalNormSample> samples;
  double sup_u_s = 0.0, sup_v_s = 0.0, sup_ut_sm1 = 0.0, sup_vt_sm1 = 0.0;

  // The linearly-conserved combination per component.
  double combined_u(std::size_t i) const {
    return std::hypot(samples[i].u_s, samples[i].ut_sm1);
  }
  double combined_v(std::size_t i) const {
    return std::hypot(samples[i].v_s, samples[i].vt_sm1);
  }
};

inline CriticalNormSeries critical_norm_series(const Trajectory& traj, double s) {
  CriticalNormSeries out;
  out.exponent = s;
  out.samples.reserve(traj.states.size());
  for (const State& st : traj.states) {
    CriticalNormSample smp;
    smp.t = st.t;
    smp.u_s = sobolev_norm(st.u, s);
    smp.v_s = sobolev_norm(st.v, s);
    smp.ut_sm1 = sobolev_norm(st.ut, s - 1.0);
    smp.vt_sm1 = sobolev_norm(st.vt, s - 1.0);
    out.sup_u_s = std::max(out.sup_u_s, smp.u_s);
    out.sup_v_s = std::max(out.sup_v_s, smp.v_s);
    out.sup_ut_sm1 = std::max(out.sup_ut_sm1, smp.ut_sm1);
    out.sup_vt_sm1 = std::max(out.sup_vt_sm1, smp.vt_sm1);
    out.samples.push_back(smp);
  }
  return out;
}

// Space-time L^q_t L^r_x norms of the two position components, trapezoidal in
// time.  Diagnostic only, and only for finite exponents — no claim is made
// about inequality constants.
struct StrichartzNorms {
  double u = 0.0;
  double v = 0.0;
};

inline StrichartzNorms strichartz_norm(const Trajectory& traj, double q, double r) {
  if (!std::isfinite(q) || !std::isfinite(r) || q < 1.0 || r < 1.0)
    throw std::invalid_argument("strichartz_norm: computed only for finite exponents q, r >= 1");
  if (traj.states.empty()) return {};
  double su = 0.0, sv = 0.0;
  for (std::size_t i = 0; i + 1 < traj.states.size(); ++i) {
    const double w = traj.states[i + 1].t - traj.states[i].t;
    auto term = [&](const State& st, double& au, double& av) {
      au += 0.5 * w * std::pow(lp_norm(st.u, r), q);
      av += 0.5 * w * std::pow(lp_norm(st.v, r), q);
    };
    term(traj.states[i], su, sv);
    term(traj.states[i + 1], su, sv);
  }
  return {std::pow(su, 1.0 / q), std::pow(sv, 1.0 / q)};
}

}  // namespace wavesys
