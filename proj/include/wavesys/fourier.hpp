#pragma once

// FFTW-backed transform layer: real-to-complex plans shared per grid, mode
// geometry tables (|xi|, Parseval weights, de-alias mask), and the
// SpectralField container. Plans are immutable after construction and safe to
// share across threads; execution uses the new-array interface with
// caller-owned buffers. Plan creation/destruction is serialized behind a
// global mutex because FFTW's planner is not thread-safe.

#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "core.hpp"

namespace wavesys {

struct SpectralField {
  Grid grid;
  std::vector<std::complex<double>> modes;  // row-major, last axis n/2+1

  SpectralField() = default;
  explicit SpectralField(const Grid& g)
      : grid(g),
        modes(g.total / static_cast<std::size_t>(g.points_per_axis) *
              (static_cast<std::size_t>(g.points_per_axis) / 2 + 1)) {}
};

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class MultiplierPlan {
 public:
  explicit MultiplierPlan(const Grid& g) : grid_(g) {
    const int n = g.points_per_axis;
    n_half_ = n / 2 + 1;
    modes_ = g.total / static_cast<std::size_t>(n) * static_cast<std::size_t>(n_half_);

    int dims[4] = {n, n, n, n};
    std::vector<double> proto_real(g.total);
    std::vector<std::complex<double>> proto_cplx(modes_);
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
      fwd_ = fftw_plan_dft_r2c(g.dim, dims, proto_real.data(),
                               reinterpret_cast<fftw_complex*>(proto_cplx.data()), flags);
      bwd_ = fftw_plan_dft_c2r(g.dim, dims, reinterpret_cast<fftw_complex*>(proto_cplx.data()),
                               proto_real.data(), flags);
    }
    if (!fwd_ || !bwd_) throw std::runtime_error("MultiplierPlan: FFTW plan creation failed");

    // Mode geometry tables.
    xi_abs_.resize(modes_);
    parseval_.resize(modes_);
    dealias_keep_.resize(modes_);
    const double base = 2.0 * pi / g.box_length;
    const int cutoff = n / 3;  // 2/3 rule: keep |k| <= n/3
    std::array<int, 4> k{};
    for (std::size_t flat = 0; flat < modes_; ++flat) {
      mode_indices(flat, k.data());
      double xi2 = 0.0;
      bool keep = true;
      for (int a = 0; a < g.dim; ++a) {
        const double xia = base * k[static_cast<std::size_t>(a)];
        xi2 += xia * xia;
        if (std::abs(k[static_cast<std::size_t>(a)]) > cutoff) keep = false;
      }
      xi_abs_[flat] = std::sqrt(xi2);
      const int kz = k[static_cast<std::size_t>(g.dim - 1)];
      parseval_[flat] = (kz == 0 || kz == n / 2) ? 1.0 : 2.0;
      dealias_keep_[flat] = keep ? 1 : 0;
    }
  }

  ~MultiplierPlan() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }

  MultiplierPlan(const MultiplierPlan&) = delete;
  MultiplierPlan& operator=(const MultiplierPlan&) = delete;

  const Grid& grid() const { return grid_; }
  std::size_t mode_count() const { return modes_; }

  // Signed integer wavevector of a flat spectral index; k[a] in [-n/2, n/2)
  // for the leading axes, k[dim-1] in [0, n/2].
  void mode_indices(std::size_t flat, int* k) const {
    const int n = grid_.points_per_axis;
    std::size_t rem = flat;
    for (int a = grid_.dim - 1; a >= 0; --a) {
      const int extent = (a == grid_.dim - 1) ? n_half_ : n;
      int idx = static_cast<int>(rem % static_cast<std::size_t>(extent));
      rem /= static_cast<std::size_t>(extent);
      if (a != grid_.dim - 1 && idx > n / 2) idx -= n;
      if (a != grid_.dim - 1 && idx == n / 2) idx = -n / 2;
      k[a] = idx;
    }
  }

  double xi_abs(std::size_t flat) const { return xi_abs_[flat]; }
  double parseval_weight(std::size_t flat) const { return parseval_[flat]; }
  bool dealias_keep(std::size_t flat) const { return dealias_keep_[flat] != 0; }
  const std::vector<double>& xi_abs_table() const { return xi_abs_; }
  const std::vector<double>& parseval_table() const { return parseval_; }

  // xi component along one axis, with the Nyquist coefficient mapped to 0 so
  // odd (gradient) multipliers keep real fields real.
  double xi_component_odd(std::size_t flat, int axis) const {
    std::array<int, 4> k{};
    mode_indices(flat, k.data());
    const int ka = k[static_cast<std::size_t>(axis)];
    if (ka == -grid_.points_per_axis / 2) return 0.0;
    return 2.0 * pi / grid_.box_length * ka;
  }

  // Raw executes. Forward preserves its input; the inverse clobbers it
  // (FFTW multidimensional c2r), is unnormalized, and expects the caller to
  // divide by n^d.
  void execute_forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(fwd_, const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
  }
  void execute_inverse_destructive(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(bwd_, reinterpret_cast<fftw_complex*>(in), out);
  }

  SpectralField forward(const Field& f) const {
    if (!(f.grid == grid_)) throw std::invalid_argument("MultiplierPlan: grid mismatch");
    SpectralField s(grid_);
    execute_forward(f.values.data(), s.modes.data());
    return s;
  }

  Field inverse(const SpectralField& s) const {
    if (!(s.grid == grid_)) throw std::invalid_argument("MultiplierPlan: grid mismatch");
    std::vector<std::complex<double>> scratch(s.modes);
    Field f(grid_);
    execute_inverse_destructive(scratch.data(), f.values.data());
    const double inv_n = 1.0 / static_cast<double>(grid_.total);
    for (double& x : f.values) x *= inv_n;
    return f;
  }

 private:
  Grid grid_;
  int n_half_ = 0;
  std::size_t modes_ = 0;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
  std::vector<double> xi_abs_;
  std::vector<double> parseval_;
  std::vector<unsigned char> dealias_keep_;
};

// Shared immutable plan per (d, n, L); thread-safe.
inline const MultiplierPlan& plan_for(const Grid& g) {
  using Key = std::tuple<int, int, std::uint64_t>;
  static std::map<Key, std::unique_ptr<MultiplierPlan>> cache;
  static std::mutex cache_mutex;
  std::uint64_t lbits;
  std::memcpy(&lbits, &g.box_length, sizeof lbits);
  const Key key{g.dim, g.points_per_axis, lbits};
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, std::make_unique<MultiplierPlan>(g)).first;
  return *it->second;
}

}  // namespace wavesys
