#pragma once

#include "errors.hpp"

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace shapeinv {

using cplx = std::complex<double>;

//! Complex Fourier coefficients c_l, |l| <= m, of a real trigonometric
//! polynomial. The l = 0 entry is only meaningful when `has_level()` is true
//! (non-centered shapes); otherwise it is held at zero.
class ShapeSpectrum
{
public:
  ShapeSpectrum() = default;

  explicit ShapeSpectrum(int m, bool has_level = false)
    : m_(m)
    , has_level_(has_level)
    , coeffs_(static_cast<std::size_t>(2 * m + 1), cplx(0.0, 0.0))
  {
    if (m < 0)
      throw Error(ErrorCode::BandTooWide, "band limit must be non-negative");
  }

  int m() const { return m_; }
  bool has_level() const { return has_level_; }

  cplx operator[](int l) const
  {
    if (l < -m_ || l > m_)
      return cplx(0.0, 0.0);
    return coeffs_[static_cast<std::size_t>(l + m_)];
  }

  //! Sets c_l and c_{-l} = conj(c_l).
  void set_pair(int l, cplx c)
  {
    check_index(l);
    if (l == 0) {
      if (!has_level_)
        throw Error(ErrorCode::ConstraintViolation,
                    "centered spectrum has no l = 0 coefficient");
      coeffs_[static_cast<std::size_t>(m_)] = cplx(c.real(), 0.0);
      return;
    }
    coeffs_[static_cast<std::size_t>(l + m_)] = c;
    coeffs_[static_cast<std::size_t>(-l + m_)] = std::conj(c);
  }

  //! Sets a single coefficient without symmetrizing (used to build
  //! arbitrary, possibly non-Hermitian, inputs).
  void set_raw(int l, cplx c)
  {
    check_index(l);
    if (l == 0 && !has_level_)
      throw Error(ErrorCode::ConstraintViolation,
                  "centered spectrum has no l = 0 coefficient");
    coeffs_[static_cast<std::size_t>(l + m_)] = c;
  }

  double level() const { return has_level_ ? (*this)[0].real() : 0.0; }

  //! Sum over 1 <= |l| <= m of |c_l|^2, the squared L2 norm of the
  //! centered part.
  double centered_energy() const
  {
    double s = 0.0;
    for (int l = 1; l <= m_; ++l)
      s += std::norm((*this)[l]) + std::norm((*this)[-l]);
    return s;
  }

  //! Squared L2 norm including the level term.
  double energy() const { return centered_energy() + level() * level(); }

  //! Sum of l^2 |c_l|^2, the squared L2 norm of the derivative.
  double derivative_energy() const
  {
    double s = 0.0;
    for (int l = 1; l <= m_; ++l)
      s += double(l) * l * (std::norm((*this)[l]) + std::norm((*this)[-l]));
    return s;
  }

  bool is_hermitian(double tol) const
  {
    for (int l = 1; l <= m_; ++l)
      if (std::abs((*this)[-l] - std::conj((*this)[l])) > tol)
        return false;
    return std::abs((*this)[0].imag()) <= tol;
  }

  bool is_zero() const
  {
    for (const auto& c : coeffs_)
      if (c != cplx(0.0, 0.0))
        return false;
    return true;
  }

  const std::vector<cplx>& coefficients() const { return coeffs_; }

private:
  void check_index(int l) const
  {
    if (l < -m_ || l > m_)
      throw Error(ErrorCode::BandTooWide, "frequency outside the band");
  }

  int m_ = 0;
  bool has_level_ = false;
  std::vector<cplx> coeffs_ = std::vector<cplx>(1, cplx(0.0, 0.0));
};

} // namespace shapeinv
