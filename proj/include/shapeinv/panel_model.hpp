#pragma once

#include "errors.hpp"
#include "random.hpp"
#include "sampling_grid.hpp"
#include "spectrum.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace shapeinv {

using RowMatrix =
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! Wraps an angle into [0, 2*pi).
inline double
wrap_angle(double x)
{
  double r = std::fmod(x, two_pi);
  if (r < 0.0)
    r += two_pi;
  if (r >= two_pi)
    r = 0.0;
  return r;
}

//! Signed circular difference x - y mapped into (-pi, pi].
inline double
circular_difference(double x, double y)
{
  double d = std::remainder(x - y, two_pi);
  if (d <= -std::numbers::pi)
    d += two_pi;
  return d;
}

//! J curves observed on a common equidistant grid. Row j of `y` holds
//! curve j.
class CurvePanel
{
public:
  CurvePanel(SamplingGrid grid, RowMatrix y, std::vector<std::string> labels = {})
    : grid_(std::move(grid))
    , y_(std::move(y))
    , labels_(std::move(labels))
  {
    if (y_.rows() < 2)
      throw Error(ErrorCode::ConstraintViolation, "a panel needs J >= 2 curves");
    if (y_.cols() != grid_.n())
      throw Error(ErrorCode::LengthMismatch,
                  "every curve must have n = " + std::to_string(grid_.n()) +
                    " samples");
    if (labels_.empty()) {
      for (int j = 0; j < y_.rows(); ++j)
        labels_.push_back("curve" + std::to_string(j + 1));
    }
    if (static_cast<int>(labels_.size()) != y_.rows())
      throw Error(ErrorCode::LengthMismatch, "one label per curve required");
  }

  int J() const { return static_cast<int>(y_.rows()); }
  int n() const { return grid_.n(); }
  const SamplingGrid& grid() const { return grid_; }
  const RowMatrix& y() const { return y_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::span<const double> curve(int j) const
  {
    return { y_.row(j).data(), static_cast<std::size_t>(y_.cols()) };
  }

  std::vector<DftBlock> per_curve_dft(int m) const
  {
    std::vector<DftBlock> out;
    out.reserve(static_cast<std::size_t>(J()));
    for (int j = 0; j < J(); ++j)
      out.push_back(dft(curve(j), grid_, m));
    return out;
  }

private:
  SamplingGrid grid_;
  RowMatrix y_;
  std::vector<std::string> labels_;
};

//! Identifiability regime.
//!
//! A0: theta_1 = 0, sum a_j^2 = J, a_1 > 0, |upsilon_j| <= upsilon_max and a
//!     centered shape (c_0(f) = 0).
//! A1: theta_1 = 0, sum a_j^2 = J, a_1 > 0, upsilon_1 = 0 and the shape
//!     keeps its mean.
struct ConstraintRegime
{
  enum class Kind
  {
    A0,
    A1
  };

  Kind kind = Kind::A0;
  double upsilon_max = 1e6;

  static ConstraintRegime a0(double upsilon_max = 1e6) { return { Kind::A0, upsilon_max }; }
  static ConstraintRegime a1() { return { Kind::A1, 1e6 }; }

  bool is_a0() const { return kind == Kind::A0; }
  bool is_a1() const { return kind == Kind::A1; }
};

inline std::string
to_string(ConstraintRegime::Kind k)
{
  return k == ConstraintRegime::Kind::A0 ? "a0" : "a1";
}

struct ParameterSet
{
  Eigen::VectorXd theta;
  Eigen::VectorXd a;
  Eigen::VectorXd upsilon;
  double sigma = 0.0;
  ConstraintRegime regime;

  int J() const { return static_cast<int>(theta.size()); }

  //! Throws ConstraintViolation when an invariant of the regime fails.
  void validate() const
  {
    const int j = J();
    if (j < 2 || a.size() != j || upsilon.size() != j)
      throw Error(ErrorCode::ConstraintViolation,
                  "theta, a and upsilon must all have length J >= 2");
    if (theta[0] != 0.0)
      throw Error(ErrorCode::ConstraintViolation, "theta_1 must be exactly 0");
    for (int k = 0; k < j; ++k)
      if (!(theta[k] >= 0.0 && theta[k] < two_pi))
        throw Error(ErrorCode::ConstraintViolation, "theta must lie in [0, 2pi)");
    if (std::abs(a.squaredNorm() - j) > 1e-10)
      throw Error(ErrorCode::ConstraintViolation, "sum a_j^2 must equal J");
    if (!(a[0] > 0.0))
      throw Error(ErrorCode::ConstraintViolation, "a_1 must be positive");
    if (!(sigma >= 0.0))
      throw Error(ErrorCode::ConstraintViolation, "sigma must be non-negative");
    if (regime.is_a0()) {
      if (upsilon.cwiseAbs().maxCoeff() > regime.upsilon_max)
        throw Error(ErrorCode::ConstraintViolation, "|upsilon_j| exceeds upsilon_max");
    } else if (upsilon[0] != 0.0) {
      throw Error(ErrorCode::ConstraintViolation, "upsilon_1 must be 0 under A1");
    }
  }
};

//! A reference shape used to simulate data: point evaluation plus its exact
//! Fourier coefficients and L2 norms, so that non band-limited truths can be
//! compared against estimated spectra.
struct TrueShape
{
  std::function<double(double)> value;    // f(t), level included
  std::function<cplx(int)> coefficient;   // c_l for l != 0
  double level = 0.0;                     // c_0
  double centered_energy = 0.0;           // sum_{l != 0} |c_l|^2
  double derivative_energy = 0.0;         // sum l^2 |c_l|^2
  int max_frequency = -1;                 // band limit, -1 if unbounded
  std::string description;

  double operator()(double t) const { return value(t); }

  double energy() const { return centered_energy + level * level; }

  //! Energy outside 1 <= |l| <= m.
  double tail_energy(int m) const
  {
    if (max_frequency >= 0 && m >= max_frequency)
      return 0.0;
    double inside = 0.0;
    for (int l = 1; l <= m; ++l)
      inside += std::norm(coefficient(l)) + std::norm(coefficient(-l));
    return std::max(0.0, centered_energy - inside);
  }

  ShapeSpectrum truncated(int m, bool with_level = false) const
  {
    ShapeSpectrum s(m, with_level);
    for (int l = 1; l <= m; ++l)
      s.set_pair(l, coefficient(l));
    if (with_level)
      s.set_pair(0, level);
    return s;
  }

  //! Same shape shifted vertically by `delta`.
  TrueShape shifted(double delta) const
  {
    TrueShape out = *this;
    auto v = value;
    out.value = [v, delta](double t) { return v(t) + delta; };
    out.level = level + delta;
    return out;
  }

  TrueShape centered() const { return shifted(-level); }

  //! The trigonometric polynomial described by `spec`.
  static TrueShape from_spectrum(const ShapeSpectrum& spec)
  {
    if (!spec.is_hermitian(1e-9))
      throw Error(ErrorCode::NonHermitianSpectrum, "shape spectrum not Hermitian");
    auto shared = std::make_shared<const ShapeSpectrum>(spec);
    TrueShape s;
    s.value = [shared](double t) { return evaluate_spectrum(*shared, t); };
    s.coefficient = [shared](int l) { return (*shared)[l]; };
    s.level = spec.level();
    s.centered_energy = spec.centered_energy();
    s.derivative_energy = spec.derivative_energy();
    s.max_frequency = spec.m();
    s.description = "trigonometric polynomial of degree " + std::to_string(spec.m());
    return s;
  }

  //! f(t) = scale * x (1 - x), x = t / 2pi on [0, 2pi), extended
  //! periodically. c_0 = scale/6, c_l = -scale / (2 pi^2 l^2).
  static TrueShape quadratic_bump(double scale)
  {
    constexpr double pi = std::numbers::pi;
    TrueShape s;
    s.value = [scale](double t) {
      double x = wrap_angle(t) / two_pi;
      return scale * x * (1.0 - x);
    };
    s.coefficient = [scale](int l) {
      return cplx(-scale / (2.0 * pi * pi * double(l) * l), 0.0);
    };
    s.level = scale / 6.0;
    s.centered_energy = scale * scale / 180.0;
    s.derivative_energy = scale * scale / (12.0 * pi * pi);
    s.description = "quadratic bump, scale " + std::to_string(scale);
    return s;
  }

  //! f(t) = sum_{1<=|l|<=terms} scale * |l|^{-decay} e^{i l t}: a centered
  //! shape whose coefficients decay like |l|^{-decay}.
  static TrueShape power_decay(double decay, int terms, double scale = 1.0)
  {
    auto coeffs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(terms + 1), 0.0);
    double e = 0.0, de = 0.0;
    for (int l = 1; l <= terms; ++l) {
      double c = scale * std::pow(double(l), -decay);
      (*coeffs)[static_cast<std::size_t>(l)] = c;
      e += 2.0 * c * c;
      de += 2.0 * double(l) * l * c * c;
    }
    TrueShape s;
    s.value = [coeffs](double t) {
      // cos(l t) by rotation recurrence
      cplx z(std::cos(t), std::sin(t));
      cplx w = z;
      double acc = 0.0;
      const std::size_t L = coeffs->size() - 1;
      for (std::size_t l = 1; l <= L; ++l) {
        acc += 2.0 * (*coeffs)[l] * w.real();
        w *= z;
      }
      return acc;
    };
    s.coefficient = [coeffs](int l) {
      std::size_t k = static_cast<std::size_t>(std::abs(l));
      return k < coeffs->size() ? cplx((*coeffs)[k], 0.0) : cplx(0.0, 0.0);
    };
    s.centered_energy = e;
    s.derivative_energy = de;
    s.max_frequency = terms;
    s.description = "power decay |l|^-" + std::to_string(decay);
    return s;
  }
};

//! Samples y_{j,i} = a_j f(t_i - theta_j) + upsilon_j + sigma * eps_{j,i} with
//! eps_{j,i} the (j*n + i)-th draw of a counter-based normal generator.
inline CurvePanel
generate_panel(const ParameterSet& truth,
               const TrueShape& shape,
               const SamplingGrid& grid,
               std::uint64_t seed)
{
  truth.validate();
  if (truth.regime.is_a0() && std::abs(shape.level) > 1e-12)
    throw Error(ErrorCode::ConstraintViolation,
                "A0 truth requires a centered shape (c_0(f) = 0)");
  const int J = truth.J();
  const int n = grid.n();
  CounterNormal rng(seed);
  RowMatrix y(J, n);
  for (int j = 0; j < J; ++j) {
    for (int i = 0; i < n; ++i) {
      double v = truth.a[j] * shape(grid[i] - truth.theta[j]) + truth.upsilon[j];
      if (truth.sigma > 0.0)
        v += truth.sigma *
             rng.normal(static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(n) +
                        static_cast<std::uint64_t>(i));
      y(j, i) = v;
    }
  }
  return CurvePanel(grid, std::move(y));
}

inline CurvePanel
generate_panel(const ParameterSet& truth,
               const ShapeSpectrum& shape,
               const SamplingGrid& grid,
               std::uint64_t seed)
{
  if (2 * shape.m() >= grid.n())
    throw Error(ErrorCode::BandTooWide, "2m < n violated by the generating shape");
  return generate_panel(truth, TrueShape::from_spectrum(shape), grid, seed);
}

struct CenteredShape
{
  ShapeSpectrum spectrum;
  Eigen::VectorXd level_shift; // amount added to each upsilon_j
};

//! Removes c_0 from `raw` and reports the level change upsilon_j += a_j c_0
//! that keeps every curve a_j f(t - theta_j) + upsilon_j unchanged.
inline CenteredShape
center_shape(const ShapeSpectrum& raw, const Eigen::VectorXd& a)
{
  ShapeSpectrum out(raw.m(), false);
  for (int l = 1; l <= raw.m(); ++l) {
    out.set_raw(l, raw[l]);
    out.set_raw(-l, raw[-l]);
  }
  const double c0 = raw.has_level() ? raw[0].real() : 0.0;
  return { std::move(out), a * c0 };
}

struct Projection
{
  ParameterSet params;
  //! True when a was negated to make a_1 > 0; the shape must then be
  //! negated by the caller to keep the curves unchanged.
  bool sign_flipped = false;
};

//! Maps raw (theta, a, upsilon) onto the regime: theta_j <- theta_j - theta_1
//! (mod 2pi), a rescaled to sum a_j^2 = J with a_1 > 0, upsilon clipped to
//! [-upsilon_max, upsilon_max] (A0) or upsilon_1 set to 0 (A1).
inline Projection
project_to_constraints(const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& a,
                       const Eigen::VectorXd& upsilon,
                       const ConstraintRegime& regime,
                       double sigma = 0.0)
{
  const int J = static_cast<int>(theta.size());
  if (J < 2 || a.size() != J || upsilon.size() != J)
    throw Error(ErrorCode::LengthMismatch, "theta, a and upsilon must have length J >= 2");
  const double norm2 = a.squaredNorm();
  if (!(norm2 > 0.0))
    throw Error(ErrorCode::DegenerateAmplitude, "amplitude vector is zero");

  Projection out;
  ParameterSet& p = out.params;
  p.regime = regime;
  p.sigma = sigma;

  p.theta.resize(J);
  const double ref = theta[0];
  p.theta[0] = 0.0;
  for (int j = 1; j < J; ++j)
    p.theta[j] = ref == 0.0 ? wrap_angle(theta[j]) : wrap_angle(theta[j] - ref);

  // Leave a untouched when it is already on the sphere to rounding, which
  // makes the projection idempotent.
  if (std::abs(norm2 - J) <= 8.0 * std::numeric_limits<double>::epsilon() * J)
    p.a = a;
  else
    p.a = a * std::sqrt(J / norm2);
  if (p.a[0] == 0.0)
    throw Error(ErrorCode::ZeroReferenceAmplitude, "a_1 = 0 after rescaling");
  if (p.a[0] < 0.0) {
    p.a = -p.a;
    out.sign_flipped = true;
  }

  p.upsilon = upsilon;
  if (regime.is_a0()) {
    p.upsilon = upsilon.cwiseMax(-regime.upsilon_max).cwiseMin(regime.upsilon_max);
  } else {
    p.upsilon[0] = 0.0;
  }
  return out;
}

//! Rewrites an A0 truth (centered f, levels upsilon) in the A1
//! parameterization: g = f + upsilon_1/a_1 and
//! upsilon'_j = upsilon_j - a_j upsilon_1 / a_1, so that upsilon'_1 = 0.
inline std::pair<ParameterSet, TrueShape>
rewrite_in_a1(const ParameterSet& a0_truth, const TrueShape& centered_shape)
{
  a0_truth.validate();
  const double c0 = a0_truth.upsilon[0] / a0_truth.a[0];
  ParameterSet p = a0_truth;
  p.regime = ConstraintRegime::a1();
  p.upsilon = a0_truth.upsilon - a0_truth.a * c0;
  p.upsilon[0] = 0.0;
  return { p, centered_shape.shifted(c0) };
}

} // namespace shapeinv
