#pragma once

// Fourier-multiplier machinery: fractional derivatives, the exact linear wave
// propagator, the Duhamel kernel, Sobolev/Besov norms, dyadic (Littlewood-
// Paley) decomposition, and the spectral mollifier.
//
// Norm convention, used everywhere: continuum norms are Riemann sums, i.e.
// ||f||_p = (h^d * sum |f|^p)^(1/p), ||f||_inf = max |f|. In spectral form
// ||f||_2^2 = (h^d / n^d) * sum_k w_k |fhat_k|^2 with w_k the real-transform
// multiplicity weight (2 for interior last-axis modes, 1 on the two
// self-conjugate planes).

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "core.hpp"
#include "fourier.hpp"

namespace wavesys {

inline double mean(const Field& f) {
  double s = 0.0;
  for (double x : f.values) s += x;
  return s / static_cast<double>(f.values.size());
}

inline double lp_norm(const Field& f, double p) {
  if (std::isinf(p)) return max_abs(f);
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must satisfy 1 <= p <= inf");
  const double h = f.grid.spacing;
  double s = 0.0;
  for (double x : f.values) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p) * std::pow(h, f.grid.dim / p);
}

inline double l2_norm(const Field& f) {
  const double h = f.grid.spacing;
  double s = 0.0;
  for (double x : f.values) s += x * x;
  return std::sqrt(s) * std::pow(h, 0.5 * f.grid.dim);
}

namespace detail {

// |fhat_0| relative to the spectral l2 mass; 1 for constants, 0 for zero-mean.
inline double zero_mode_relative(const MultiplierPlan& plan,
                                 const std::vector<std::complex<double>>& modes) {
  double total = 0.0;
  for (std::size_t k = 0; k < modes.size(); ++k)
    total += plan.parseval_weight(k) * std::norm(modes[k]);
  const double denom = std::sqrt(total);
  if (denom == 0.0) return 0.0;
  return std::abs(modes[0]) / denom;
}

inline void require_zero_mean(const MultiplierPlan& plan,
                              const std::vector<std::complex<double>>& modes, const char* op) {
  const double rel = zero_mode_relative(plan, modes);
  if (rel > 1e-12)
    throw std::domain_error(std::string(op) +
                            ": zero-mode singularity: negative-order multiplier requires "
                            "zero-mean input (relative zero-mode mass " +
                            std::to_string(rel) + ")");
}

}  // namespace detail

// Spectral multiplication by |xi|^s. For s > 0 the zero mode is annihilated;
// s = 0 is the identity; s < 0 demands zero-mean input.
inline Field fractional_derivative(const Field& f, double s) {
  const MultiplierPlan& plan = plan_for(f.grid);
  SpectralField sf = plan.forward(f);
  if (s < 0.0) detail::require_zero_mean(plan, sf.modes, "fractional_derivative");
  if (s == 0.0) return f;
  for (std::size_t k = 0; k < sf.modes.size(); ++k) {
    const double xi = plan.xi_abs(k);
    sf.modes[k] *= (xi == 0.0) ? 0.0 : std::pow(xi, s);
  }
  return plan.inverse(sf);
}

// d/dx_axis as the multiplier i*xi_axis (Nyquist coefficient mapped to 0 so
// the result stays real and the operator stays antisymmetric).
inline Field partial_derivative(const Field& f, int axis) {
  const MultiplierPlan& plan = plan_for(f.grid);
  SpectralField sf = plan.forward(f);
  for (std::size_t k = 0; k < sf.modes.size(); ++k) {
    const double xi = plan.xi_component_odd(k, axis);
    const std::complex<double> c = sf.modes[k];
    sf.modes[k] = {-xi * c.imag(), xi * c.real()};
  }
  return plan.inverse(sf);
}

inline std::vector<Field> gradient(const Field& f) {
  std::vector<Field> g;
  g.reserve(static_cast<std::size_t>(f.grid.dim));
  for (int a = 0; a < f.grid.dim; ++a) g.push_back(partial_derivative(f, a));
  return g;
}

// Exact free evolution of u_tt = Lap u for both component pairs: per mode
//   (uhat, uthat) -> ( cos(|xi|dt) uhat + sin(|xi|dt)/|xi| uthat,
//                     -|xi| sin(|xi|dt) uhat + cos(|xi|dt) uthat )
// with the |xi| -> 0 limits (1, dt; 0, 1), i.e. the zero mode drifts linearly.
inline State propagate_linear(const State& state, double dt) {
  if (!std::isfinite(dt)) throw std::invalid_argument("propagate_linear: dt must be finite");
  state.check_consistent();
  const MultiplierPlan& plan = plan_for(state.grid());
  State out(state.grid(), state.t + dt);
  const Field* pos_in[2] = {&state.u, &state.v};
  const Field* vel_in[2] = {&state.ut, &state.vt};
  Field* pos_out[2] = {&out.u, &out.v};
  Field* vel_out[2] = {&out.ut, &out.vt};
  for (int c = 0; c < 2; ++c) {
    SpectralField p = plan.forward(*pos_in[c]);
    SpectralField q = plan.forward(*vel_in[c]);
    for (std::size_t k = 0; k < p.modes.size(); ++k) {
      const double xi = plan.xi_abs(k);
      double cosv, sin_over, neg_xi_sin;
      if (xi == 0.0) {
        cosv = 1.0;
        sin_over = dt;
        neg_xi_sin = 0.0;
      } else {
        const double th = xi * dt;
        cosv = std::cos(th);
        const double sv = std::sin(th);
        sin_over = sv / xi;
        neg_xi_sin = -xi * sv;
      }
      const std::complex<double> a = p.modes[k];
      const std::complex<double> b = q.modes[k];
      p.modes[k] = cosv * a + sin_over * b;
      q.modes[k] = neg_xi_sin * a + cosv * b;
    }
    *pos_out[c] = plan.inverse(p);
    *vel_out[c] = plan.inverse(q);
  }
  return out;
}

// The wave kernel K(dt) = sin(|xi| dt)/|xi| applied to a source field
// (zero mode: multiplication by dt).
inline Field duhamel_kernel_apply(const Field& f, double dt) {
  if (!std::isfinite(dt)) throw std::invalid_argument("duhamel_kernel_apply: dt must be finite");
  const MultiplierPlan& plan = plan_for(f.grid);
  SpectralField sf = plan.forward(f);
  for (std::size_t k = 0; k < sf.modes.size(); ++k) {
    const double xi = plan.xi_abs(k);
    sf.modes[k] *= (xi == 0.0) ? dt : std::sin(xi * dt) / xi;
  }
  return plan.inverse(sf);
}

// Homogeneous Sobolev norm ||  |xi|^s fhat ||_2 under the Riemann-sum
// Parseval normalization, so sobolev_norm(f, 0) is the continuum L2 norm.
inline double sobolev_norm(const Field& f, double s) {
  const MultiplierPlan& plan = plan_for(f.grid);
  SpectralField sf = plan.forward(f);
  if (s < 0.0) detail::require_zero_mean(plan, sf.modes, "sobolev_norm");
  double sum = 0.0;
  for (std::size_t k = 0; k < sf.modes.size(); ++k) {
    const double xi = plan.xi_abs(k);
    double mult;
    if (xi == 0.0)
      mult = (s == 0.0) ? 1.0 : 0.0;  // s<0 certified zero-mean; s>0 annihilates
    else
      mult = std::pow(xi, 2.0 * s);
    sum += plan.parseval_weight(k) * mult * std::norm(sf.modes[k]);
  }
  const double h = f.grid.spacing;
  const double scale = std::pow(h, f.grid.dim) / static_cast<double>(f.grid.total);
  return std::sqrt(scale * sum);
}

// ---------------------------------------------------------------------------
// Dyadic windows: chi is 1 on [0,1], 0 on [2,inf), with a C^2 quintic ramp in
// between, and w_j(xi) = chi(|xi|/2^j) - chi(|xi|/2^(j-1)). Telescoping makes
// sum_j w_j an exact partition of unity on the resolved nonzero modes; band j
// has support exactly inside the annulus (2^(j-1), 2^(j+1)).

inline double dyadic_chi(double rho) {
  if (rho <= 1.0) return 1.0;
  if (rho >= 2.0) return 0.0;
  const double t = rho - 1.0;
  return 1.0 - t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

inline double dyadic_window(double xi, int j) {
  if (xi <= 0.0) return 0.0;
  return dyadic_chi(xi / std::ldexp(1.0, j)) - dyadic_chi(xi / std::ldexp(1.0, j - 1));
}

struct DyadicRange {
  int j_min = 0;
  int j_max = 0;
  double xi_min = 0.0;  // smallest nonzero resolved |xi| (box scale)
  double xi_max = 0.0;  // largest resolved |xi| (Nyquist corner)
};

inline DyadicRange dyadic_range(const Grid& g) {
  DyadicRange r;
  r.xi_min = 2.0 * pi / g.box_length;
  r.xi_max = r.xi_min * 0.5 * g.points_per_axis * std::sqrt(static_cast<double>(g.dim));
  r.j_min = static_cast<int>(std::floor(std::log2(r.xi_min)));
  r.j_max = static_cast<int>(std::ceil(std::log2(r.xi_max)));
  while (std::ldexp(1.0, r.j_min) > r.xi_min) --r.j_min;
  while (std::ldexp(1.0, r.j_max) < r.xi_max) ++r.j_max;
  return r;
}

// Bands of the dyadic decomposition. Frequencies below the box scale simply
// do not exist on the grid and the mean carries no band, so the recorded
// range [j_min, j_max] states which annuli are actually resolved.
struct DyadicDecomposition {
  int j_min = 0;
  int j_max = 0;
  double xi_min = 0.0;
  double xi_max = 0.0;
  std::vector<std::pair<int, Field>> bands;
};

inline DyadicDecomposition littlewood_paley(const Field& f) {
  const MultiplierPlan& plan = plan_for(f.grid);
  const SpectralField sf = plan.forward(f);
  const DyadicRange r = dyadic_range(f.grid);
  DyadicDecomposition dec;
  dec.j_min = r.j_min;
  dec.j_max = r.j_max;
  dec.xi_min = r.xi_min;
  dec.xi_max = r.xi_max;
  SpectralField band(f.grid);
  for (int j = r.j_min; j <= r.j_max; ++j) {
    for (std::size_t k = 0; k < sf.modes.size(); ++k)
      band.modes[k] = sf.modes[k] * dyadic_window(plan.xi_abs(k), j);
    dec.bands.emplace_back(j, plan.inverse(band));
  }
  return dec;
}

// { sum_j 2^(j m theta) ||band_j||_l^m }^(1/m); l or m = inf by the max
// convention. The dyadic windows vanish at xi = 0, so the mean of f is not
// represented by this homogeneous norm.
inline double besov_norm(const Field& f, double theta, double l, double m) {
  if (!(l >= 1.0) || !(m >= 1.0))
    throw std::invalid_argument("besov_norm: l and m must satisfy 1 <= l, m <= inf");
  const MultiplierPlan& plan = plan_for(f.grid);
  const SpectralField sf = plan.forward(f);
  const DyadicRange r = dyadic_range(f.grid);
  SpectralField band(f.grid);
  double acc = 0.0;
  double worst = 0.0;
  for (int j = r.j_min; j <= r.j_max; ++j) {
    bool any = false;
    for (std::size_t k = 0; k < sf.modes.size(); ++k) {
      const double w = dyadic_window(plan.xi_abs(k), j);
      band.modes[k] = sf.modes[k] * w;
      if (w != 0.0 && std::norm(sf.modes[k]) != 0.0) any = true;
    }
    if (!any) continue;
    const double bn = lp_norm(plan.inverse(band), l);
    const double weighted = std::pow(2.0, j * theta) * bn;
    if (std::isinf(m))
      worst = std::max(worst, weighted);
    else
      acc += std::pow(weighted, m);
  }
  return std::isinf(m) ? worst : std::pow(acc, 1.0 / m);
}

// Smooth compactly-supported spectral mollifier symbol at scale j:
// g(rho) = exp(-rho^2 / (1 - rho^2)) for rho < 1, 0 otherwise, rho = |xi|/j.
// Unit mass (g(0) = 1), an L2 contraction (|g| <= 1), and 1 - g ~ rho^2 gives
// second-order convergence on band-limited fields as j grows.
inline double mollifier_symbol(double xi, int j) {
  const double rho = xi / static_cast<double>(j);
  if (rho >= 1.0) return 0.0;
  const double r2 = rho * rho;
  return std::exp(-r2 / (1.0 - r2));
}

inline Field mollify(const Field& f, int j) {
  if (j < 1) throw std::invalid_argument("mollify: scale index j must be >= 1");
  const MultiplierPlan& plan = plan_for(f.grid);
  SpectralField sf = plan.forward(f);
  for (std::size_t k = 0; k < sf.modes.size(); ++k)
    sf.modes[k] *= mollifier_symbol(plan.xi_abs(k), j);
  return plan.inverse(sf);
}

}  // namespace wavesys
