#pragma once

#include "errors.hpp"
#include "spectrum.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace shapeinv {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

//! Equidistant grid t_i = 2*pi*i/n, i = 0..n-1, with n odd.
//!
//! The grid owns a table of the n-th roots of unity so that every
//! e^{-i l t_s} used by the discrete Fourier sums is an exact table lookup
//! at index (l*s) mod n.
class SamplingGrid
{
public:
  explicit SamplingGrid(int n)
    : n_(n)
  {
    if (n < 3)
      throw Error(ErrorCode::TooSmall, "grid needs at least 3 points");
    if (n % 2 == 0)
      throw Error(ErrorCode::EvenSampleCount,
                  "n must be odd (got " + std::to_string(n) + ")");
    points_.resize(static_cast<std::size_t>(n));
    roots_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double t = two_pi * i / n;
      points_[static_cast<std::size_t>(i)] = t;
      roots_[static_cast<std::size_t>(i)] = cplx(std::cos(t), -std::sin(t));
    }
  }

  int n() const { return n_; }
  double operator[](int i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& points() const { return points_; }

  //! e^{-i l t_s}.
  cplx twiddle(int l, int s) const
  {
    long long k = (static_cast<long long>(l) * s) % n_;
    if (k < 0)
      k += n_;
    return roots_[static_cast<std::size_t>(k)];
  }

private:
  int n_;
  std::vector<double> points_;
  std::vector<cplx> roots_;
};

inline SamplingGrid
make_grid(int n)
{
  return SamplingGrid(n);
}

//! Discrete Fourier coefficients of real samples for |l| <= m.
struct DftBlock
{
  int m = 0;
  int source_n = 0;
  std::vector<cplx> coeffs; // index l + m

  cplx operator[](int l) const { return coeffs[static_cast<std::size_t>(l + m)]; }
};

//! c_l = (1/n) sum_s samples[s] e^{-i l t_s} for |l| <= m; requires 2m < n.
inline DftBlock
dft(std::span<const double> samples, const SamplingGrid& grid, int m)
{
  const int n = grid.n();
  if (static_cast<int>(samples.size()) != n)
    throw Error(ErrorCode::LengthMismatch,
                "expected " + std::to_string(n) + " samples, got " +
                  std::to_string(samples.size()));
  if (m < 0 || 2 * m >= n)
    throw Error(ErrorCode::BandTooWide,
                "2m < n violated (m=" + std::to_string(m) +
                  ", n=" + std::to_string(n) + ")");

  DftBlock out{ m, n, std::vector<cplx>(static_cast<std::size_t>(2 * m + 1)) };
  for (int l = 0; l <= m; ++l) {
    cplx acc(0.0, 0.0);
    for (int s = 0; s < n; ++s)
      acc += samples[static_cast<std::size_t>(s)] * grid.twiddle(l, s);
    acc /= static_cast<double>(n);
    if (l == 0)
      acc = cplx(acc.real(), 0.0);
    out.coeffs[static_cast<std::size_t>(m + l)] = acc;
    out.coeffs[static_cast<std::size_t>(m - l)] = std::conj(acc);
  }
  return out;
}

//! phi_n(t) = (1/n) sum_{s=1..n} e^{2 i pi s t}.
inline cplx
orthogonality_kernel(double t, int n)
{
  cplx acc(0.0, 0.0);
  for (int s = 1; s <= n; ++s) {
    double arg = two_pi * s * t;
    acc += cplx(std::cos(arg), std::sin(arg));
  }
  return acc / static_cast<double>(n);
}

//! Value of sum_{|l|<=m} c_l e^{i l t} (the l = 0 term only when the
//! spectrum carries a level).
inline double
evaluate_spectrum(const ShapeSpectrum& spec, double t)
{
  if (!spec.is_hermitian(1e-9))
    throw Error(ErrorCode::NonHermitianSpectrum,
                "c_{-l} != conj(c_l) beyond 1e-9");
  double acc = spec.level();
  for (int l = 1; l <= spec.m(); ++l) {
    cplx e(std::cos(l * t), std::sin(l * t));
    // Hermitian part of the pair (c_l, c_{-l}).
    cplx c = 0.5 * (spec[l] + std::conj(spec[-l]));
    acc += 2.0 * (c * e).real();
  }
  return acc;
}

} // namespace shapeinv
