#pragma once

// Shared helpers for the unit suites: direct field sampling, seeded random
// fields (optionally band-limited), and crude norm utilities that do not go
// through the library's own spectral code paths.

#include <cmath>
#include <functional>
#include <random>

#include "wavesys/core.hpp"
#include "wavesys/fourier.hpp"

namespace testutil {

using wavesys::Field;
using wavesys::Grid;
using wavesys::State;

inline Field sample(const Grid& g, const std::function<double(std::span<const double>)>& fn) {
  Field f(g);
  std::array<double, 4> x{};
  wavesys::for_each_point(g, [&](std::size_t flat, std::span<const int> idx) {
    for (int a = 0; a < g.dim; ++a)
      x[static_cast<std::size_t>(a)] = g.coordinate(idx[static_cast<std::size_t>(a)]);
    f[flat] = fn(std::span<const double>(x.data(), static_cast<std::size_t>(g.dim)));
  });
  return f;
}

inline Field random_field(const Grid& g, std::uint64_t seed, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  Field f(g);
  for (double& x : f.values) x = dist(rng);
  return f;
}

// Random trigonometric polynomial with wavevector components |k_a| <= k_max:
// smooth, band-limited, zero-mean.
inline Field random_bandlimited(const Grid& g, std::uint64_t seed, int k_max, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  struct Mode {
    std::array<int, 4> k;
    double c, s;
  };
  std::vector<Mode> modes;
  std::array<int, 4> k{};
  std::function<void(int)> rec = [&](int axis) {
    if (axis == g.dim) {
      bool zero = true;
      for (int a = 0; a < g.dim; ++a) zero = zero && k[static_cast<std::size_t>(a)] == 0;
      if (!zero) modes.push_back({k, dist(rng), dist(rng)});
      return;
    }
    for (int kk = -k_max; kk <= k_max; ++kk) {
      k[static_cast<std::size_t>(axis)] = kk;
      rec(axis + 1);
    }
  };
  rec(0);
  const double base = 2.0 * wavesys::pi / g.box_length;
  Field f(g);
  std::array<double, 4> x{};
  wavesys::for_each_point(g, [&](std::size_t flat, std::span<const int> idx) {
    for (int a = 0; a < g.dim; ++a)
      x[static_cast<std::size_t>(a)] = g.coordinate(idx[static_cast<std::size_t>(a)]);
    double val = 0.0;
    for (const Mode& m : modes) {
      double phase = 0.0;
      for (int a = 0; a < g.dim; ++a)
        phase += base * m.k[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
      val += m.c * std::cos(phase) + m.s * std::sin(phase);
    }
    f[flat] = amp * val / static_cast<double>(modes.size());
  });
  return f;
}

inline State random_bandlimited_state(const Grid& g, std::uint64_t seed, int k_max,
                                      double amp = 1.0) {
  State s(g, 0.0);
  s.u = random_bandlimited(g, seed, k_max, amp);
  s.ut = random_bandlimited(g, seed + 1, k_max, amp);
  s.v = random_bandlimited(g, seed + 2, k_max, amp);
  s.vt = random_bandlimited(g, seed + 3, k_max, amp);
  return s;
}

inline double sup_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sup_diff(const State& a, const State& b) {
  return std::max(std::max(sup_diff(a.u, b.u), sup_diff(a.ut, b.ut)),
                  std::max(sup_diff(a.v, b.v), sup_diff(a.vt, b.vt)));
}

}  // namespace testutil
