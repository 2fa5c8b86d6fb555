#pragma once

#include "errors.hpp"
#include "panel_model.hpp"
#include "sampling_grid.hpp"
#include "spectrum.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

namespace shapeinv {

//! Data-side quantities of the criterion, computed once per panel: the
//! per-curve DFT coefficients d_{j,l}, 0 <= l <= m, plus the per-curve mean
//! and (biased) variance. Immutable after construction.
class CriterionContext
{
public:
  CriterionContext(CurvePanel panel, int m, ConstraintRegime regime)
    : panel_(std::move(panel))
    , m_(m)
    , regime_(regime)
  {
    const int n = panel_.n();
    if (m < 1)
      throw Error(ErrorCode::BandTooWide, "band limit m must be at least 1");
    if (2 * m >= n)
      throw Error(ErrorCode::BandTooWide,
                  "2m < n violated (m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
    const int J = panel_.J();
    d_.resize(J, m + 1);
    mean_.resize(J);
    var_.resize(J);
    for (int j = 0; j < J; ++j) {
      DftBlock b = dft(panel_.curve(j), panel_.grid(), m);
      for (int l = 0; l <= m; ++l)
        d_(j, l) = b[l];
      auto row = panel_.y().row(j);
      double mu = row.mean();
      mean_[j] = mu;
      var_[j] = (row.array() - mu).square().mean();
    }
  }

  const CurvePanel& panel() const { return panel_; }
  int m() const { return m_; }
  int J() const { return panel_.J(); }
  int n() const { return panel_.n(); }
  const ConstraintRegime& regime() const { return regime_; }

  //! d_{j,l} for |l| <= m (negative l by conjugation).
  cplx d(int j, int l) const { return l >= 0 ? d_(j, l) : std::conj(d_(j, -l)); }

  const Eigen::VectorXd& column_means() const { return mean_; }
  const Eigen::VectorXd& column_variances() const { return var_; }

  //! (1/(nJ)) sum_{j,i} (Y_{i,j} - upsilon_j)^2.
  double centered_sum_of_squares(const Eigen::VectorXd& upsilon) const
  {
    return (var_.array() + (mean_ - upsilon).array().square()).sum() / J();
  }

  //! Data scale used for relative tolerances.
  double scale() const { return var_.mean() + mean_.squaredNorm() / J(); }

private:
  CurvePanel panel_;
  int m_;
  ConstraintRegime regime_;
  Eigen::MatrixXcd d_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
};

namespace detail {

inline void
check_arguments(const CriterionContext& ctx,
                const Eigen::VectorXd& theta,
                const Eigen::VectorXd& a,
                const Eigen::VectorXd& upsilon)
{
  const int J = ctx.J();
  if (theta.size() != J || a.size() != J || (upsilon.size() != 0 && upsilon.size() != J))
    throw Error(ErrorCode::LengthMismatch, "parameter length does not match J");
  if (!(a.squaredNorm() > 0.0))
    throw Error(ErrorCode::DegenerateAmplitude, "sum a_j^2 must be positive");
}

//! u_{j,l} = e^{i l theta_j} d_{j,l} for l = 1..m.
inline Eigen::MatrixXcd
rotated_coefficients(const CriterionContext& ctx, const Eigen::VectorXd& theta)
{
  Eigen::MatrixXcd u(ctx.J(), ctx.m() + 1);
  for (int j = 0; j < ctx.J(); ++j) {
    u(j, 0) = ctx.d(j, 0);
    for (int l = 1; l <= ctx.m(); ++l)
      u(j, l) = std::polar(1.0, l * theta[j]) * ctx.d(j, l);
  }
  return u;
}

//! z_0 = sum_j a_j (mean_j - upsilon_j), the level term used under A1.
inline double
level_sum(const CriterionContext& ctx, const Eigen::VectorXd& a, const Eigen::VectorXd& upsilon)
{
  Eigen::VectorXd r = ctx.column_means();
  if (upsilon.size() != 0)
    r -= upsilon;
  return a.dot(r);
}

} // namespace detail

//! c_l(alpha) = (sum_j a_j^2)^{-1} sum_j a_j e^{i l theta_j} d_{j,l}, 1 <= |l| <= m.
//! Under A1 the l = 0 coefficient (sum_j a_j (mean_j - upsilon_j)) / sum_j a_j^2
//! is included as well.
inline ShapeSpectrum
profiled_coefficients(const CriterionContext& ctx,
                      const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& a,
                      const Eigen::VectorXd& upsilon = Eigen::VectorXd())
{
  detail::check_arguments(ctx, theta, a, upsilon);
  const double p = a.squaredNorm();
  const Eigen::MatrixXcd u = detail::rotated_coefficients(ctx, theta);
  const bool with_level = ctx.regime().is_a1();
  ShapeSpectrum out(ctx.m(), with_level);
  for (int l = 1; l <= ctx.m(); ++l) {
    cplx z(0.0, 0.0);
    for (int j = 0; j < ctx.J(); ++j)
      z += a[j] * u(j, l);
    out.set_pair(l, z / p);
  }
  if (with_level)
    out.set_pair(0, detail::level_sum(ctx, a, upsilon) / p);
  return out;
}

//! M_n = (1/(nJ)) sum (Y - upsilon)^2 - (sum_j a_j^2 / J) sum_l |c_l|^2.
//!
//! On the sphere sum a_j^2 = J this is the usual profiled criterion; the
//! factor keeps M_n equal to (1/(nJ)) times the least-squares residual of the
//! profiled fit for any a, which makes it invariant to rescaling a.
inline double
criterion_value(const CriterionContext& ctx,
                const Eigen::VectorXd& theta,
                const Eigen::VectorXd& a,
                const Eigen::VectorXd& upsilon)
{
  detail::check_arguments(ctx, theta, a, upsilon);
  const int J = ctx.J();
  const double p = a.squaredNorm();
  const Eigen::MatrixXcd u = detail::rotated_coefficients(ctx, theta);
  double s = 0.0;
  for (int l = 1; l <= ctx.m(); ++l) {
    cplx z(0.0, 0.0);
    for (int j = 0; j < J; ++j)
      z += a[j] * u(j, l);
    s += 2.0 * std::norm(z);
  }
  if (ctx.regime().is_a1()) {
    double z0 = detail::level_sum(ctx, a, upsilon);
    s += z0 * z0;
  }
  return ctx.centered_sum_of_squares(upsilon) - s / (J * p);
}

//! Layout of the free coordinates: (theta_2..theta_J, a_2..a_J, upsilon),
//! with upsilon_1..upsilon_J under A0 and upsilon_2..upsilon_J under A1. The
//! amplitude sphere is charted by a_1 = sqrt(J - sum_{j>=2} a_j^2).
struct FreeChart
{
  int J;
  ConstraintRegime regime;

  int size() const { return 2 * (J - 1) + upsilon_count(); }
  int upsilon_count() const { return regime.is_a0() ? J : J - 1; }
  int upsilon_offset() const { return 2 * (J - 1); }

  Eigen::VectorXd to_vector(const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& a,
                            const Eigen::VectorXd& upsilon) const
  {
    Eigen::VectorXd x(size());
    x.segment(0, J - 1) = theta.tail(J - 1);
    x.segment(J - 1, J - 1) = a.tail(J - 1);
    x.tail(upsilon_count()) = upsilon.tail(upsilon_count());
    return x;
  }

  Eigen::VectorXd to_vector(const ParameterSet& p) const
  {
    return to_vector(p.theta, p.a, p.upsilon);
  }

  //! Inverse of to_vector. theta is left unwrapped.
  ParameterSet from_vector(const Eigen::VectorXd& x, double sigma = 0.0) const
  {
    ParameterSet p;
    p.regime = regime;
    p.sigma = sigma;
    p.theta.setZero(J);
    p.theta.tail(J - 1) = x.segment(0, J - 1);
    p.a.resize(J);
    p.a.tail(J - 1) = x.segment(J - 1, J - 1);
    double rest = J - p.a.tail(J - 1).squaredNorm();
    if (!(rest > 0.0))
      throw Error(ErrorCode::ZeroReferenceAmplitude, "amplitude chart requires sum_{j>=2} a_j^2 < J");
    p.a[0] = std::sqrt(rest);
    p.upsilon.setZero(J);
    p.upsilon.tail(upsilon_count()) = x.tail(upsilon_count());
    return p;
  }

  std::vector<std::string> labels() const
  {
    std::vector<std::string> out;
    for (int j = 2; j <= J; ++j)
      out.push_back("theta" + std::to_string(j));
    for (int j = 2; j <= J; ++j)
      out.push_back("a" + std::to_string(j));
    for (int j = regime.is_a0() ? 1 : 2; j <= J; ++j)
      out.push_back("upsilon" + std::to_string(j));
    return out;
  }
};

//! Unconstrained partial derivatives of M_n with respect to every theta_j,
//! a_j and upsilon_j.
struct CriterionPartials
{
  double value = 0.0;
  Eigen::VectorXd d_theta;
  Eigen::VectorXd d_a;
  Eigen::VectorXd d_upsilon;
};

inline CriterionPartials
criterion_partials(const CriterionContext& ctx,
                   const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& a,
                   const Eigen::VectorXd& upsilon)
{
  detail::check_arguments(ctx, theta, a, upsilon);
  const int J = ctx.J();
  const int m = ctx.m();
  const double p = a.squaredNorm();
  const Eigen::MatrixXcd u = detail::rotated_coefficients(ctx, theta);

  Eigen::VectorXcd z = Eigen::VectorXcd::Zero(m + 1);
  for (int l = 1; l <= m; ++l)
    for (int j = 0; j < J; ++j)
      z[l] += a[j] * u(j, l);

  // S = sum_{1<=|l|<=m} |z_l|^2 (+ z_0^2 under A1)
  double s = 0.0;
  Eigen::VectorXd ds_theta = Eigen::VectorXd::Zero(J);
  Eigen::VectorXd ds_a = Eigen::VectorXd::Zero(J);
  for (int l = 1; l <= m; ++l) {
    s += 2.0 * std::norm(z[l]);
    for (int j = 0; j < J; ++j) {
      cplx w = std::conj(z[l]) * u(j, l);
      ds_a[j] += 4.0 * w.real();
      ds_theta[j] += 4.0 * (w * cplx(0.0, double(l) * a[j])).real();
    }
  }

  CriterionPartials out;
  Eigen::VectorXd resid = ctx.column_means() - upsilon;
  out.d_upsilon = -2.0 / J * resid;
  if (ctx.regime().is_a1()) {
    double z0 = a.dot(resid);
    s += z0 * z0;
    ds_a += 2.0 * z0 * resid;
    out.d_upsilon += 2.0 * z0 / (J * p) * a;
  }
  out.value = ctx.centered_sum_of_squares(upsilon) - s / (J * p);
  out.d_theta = -ds_theta / (J * p);
  out.d_a = -ds_a / (J * p) + 2.0 * s / (J * p * p) * a;
  return out;
}

//! Gradient of M_n in the free coordinates of FreeChart.
inline Eigen::VectorXd
criterion_gradient(const CriterionContext& ctx,
                   const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& a,
                   const Eigen::VectorXd& upsilon)
{
  const int J = ctx.J();
  if (!(a[0] != 0.0))
    throw Error(ErrorCode::ZeroReferenceAmplitude, "chart requires a_1 != 0");
  CriterionPartials pd = criterion_partials(ctx, theta, a, upsilon);
  FreeChart chart{ J, ctx.regime() };
  Eigen::VectorXd g(chart.size());
  g.segment(0, J - 1) = pd.d_theta.tail(J - 1);
  // a_1 = sqrt(J - sum_{k>=2} a_k^2)  =>  da_1/da_k = -a_k / a_1
  g.segment(J - 1, J - 1) = pd.d_a.tail(J - 1) - (pd.d_a[0] / a[0]) * a.tail(J - 1);
  g.tail(chart.upsilon_count()) = pd.d_upsilon.tail(chart.upsilon_count());
  return g;
}

//! phi(theta, a) = sum_j a_j a*_j e^{i theta_j} / J.
inline cplx
weight_phase(const Eigen::VectorXd& theta, const Eigen::VectorXd& a, const Eigen::VectorXd& a_star)
{
  cplx acc(0.0, 0.0);
  for (int j = 0; j < theta.size(); ++j)
    acc += a[j] * a_star[j] * std::polar(1.0, theta[j]);
  return acc / static_cast<double>(theta.size());
}

//! Limiting contrast
//! M(beta) = sum_{l != 0} |c_l|^2 (1 - |phi(l theta - l theta*, a)|^2)
//!         + (1/J) sum_j (upsilon*_j - upsilon_j)^2,
//! with the sum truncated to the band of `shape`.
inline double
contrast_oracle(const ParameterSet& beta, const ParameterSet& truth, const ShapeSpectrum& shape)
{
  const int J = truth.J();
  double m1 = 0.0;
  for (int l = 1; l <= shape.m(); ++l) {
    Eigen::VectorXd dt = double(l) * (beta.theta - truth.theta);
    double ph = std::norm(weight_phase(dt, beta.a, truth.a));
    Eigen::VectorXd mdt = -dt;
    double ph_neg = std::norm(weight_phase(mdt, beta.a, truth.a));
    m1 += std::norm(shape[l]) * (1.0 - ph) + std::norm(shape[-l]) * (1.0 - ph_neg);
  }
  double m2 = (truth.upsilon - beta.upsilon).squaredNorm() / J;
  return m1 + m2;
}

} // namespace shapeinv
