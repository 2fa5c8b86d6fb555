#pragma once

#include "criterion.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "panel_model.hpp"
#include "spectrum.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace shapeinv {

//! Efficient information H (up to 1/sigma^2) and its closed-form inverse
//! under the A0 constraints, ordered (theta_2..theta_J, a_2..a_J,
//! upsilon_1..upsilon_J).
//!
//! theta-block   ||df||^2 (D^2 - A2 A2^t / J),   inverse (D^-2 + 1 1^t / a_1^2) / ||df||^2
//! a-block       ||f||^2 (I + A A^t / a_1^2),     inverse (I - A A^t / J) / ||f||^2
//! upsilon-block I_J
//!
//! with A = (a_2..a_J), A2 its elementwise square and D = diag(A).
struct EfficiencyBlocks
{
  int J = 0;
  double sigma = 0.0;
  double shape_energy = 0.0;      // ||f||^2
  double derivative_energy = 0.0; // ||df||^2
  Eigen::MatrixXd H;
  Eigen::MatrixXd H_inv;

  //! Asymptotic covariance of sqrt(n)(beta_hat - beta): sigma^2 H^{-1}.
  Eigen::MatrixXd asymptotic_covariance() const { return sigma * sigma * H_inv; }

  //! Covariance of beta_hat itself: sigma^2 H^{-1} / n.
  Eigen::MatrixXd covariance(int n) const { return asymptotic_covariance() / n; }

  //! || H H^{-1} - I ||_F, the consistency of the closed-form inverse.
  double inverse_residual() const
  {
    return (H * H_inv - Eigen::MatrixXd::Identity(H.rows(), H.cols())).norm();
  }
};

inline EfficiencyBlocks
efficiency_blocks(const Eigen::VectorXd& a, double shape_energy, double derivative_energy, double sigma)
{
  const int J = static_cast<int>(a.size());
  if (J < 2)
    throw Error(ErrorCode::LengthMismatch, "need J >= 2 amplitudes");
  for (int j = 0; j < J; ++j)
    if (a[j] == 0.0)
      throw Error(ErrorCode::ZeroAmplitudeCoordinate,
                  "a_" + std::to_string(j + 1) + " = 0 makes H singular");
  if (!(shape_energy > 0.0) || !(derivative_energy > 0.0))
    throw Error(ErrorCode::EmptySpectrum, "shape has no energy in frequencies l != 0");

  const int k = J - 1;
  const double a1sq = a[0] * a[0];
  const Eigen::VectorXd A = a.tail(k);
  const Eigen::VectorXd A2 = A.array().square();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k, k);

  EfficiencyBlocks out;
  out.J = J;
  out.sigma = sigma;
  out.shape_energy = shape_energy;
  out.derivative_energy = derivative_energy;
  const int dim = 3 * J - 2;
  out.H = Eigen::MatrixXd::Zero(dim, dim);
  out.H_inv = Eigen::MatrixXd::Zero(dim, dim);

  Eigen::MatrixXd d2 = A2.asDiagonal();
  out.H.block(0, 0, k, k) = derivative_energy * (d2 - A2 * A2.transpose() / J);
  out.H.block(k, k, k, k) = shape_energy * (I + A * A.transpose() / a1sq);
  out.H.block(2 * k, 2 * k, J, J).setIdentity();

  Eigen::MatrixXd dinv2 = A2.cwiseInverse().asDiagonal();
  out.H_inv.block(0, 0, k, k) = (dinv2 + ones * ones.transpose() / a1sq) / derivative_energy;
  out.H_inv.block(k, k, k, k) = (I - A * A.transpose() / J) / shape_energy;
  out.H_inv.block(2 * k, 2 * k, J, J).setIdentity();
  return out;
}

//! H from an estimated (or true) centered spectrum: ||f||^2 and ||df||^2 by
//! Parseval.
inline EfficiencyBlocks
efficiency_blocks(const Eigen::VectorXd& a, const ShapeSpectrum& shape, double sigma)
{
  if (shape.centered_energy() <= 0.0)
    throw Error(ErrorCode::EmptySpectrum, "shape spectrum is empty");
  return efficiency_blocks(a, shape.centered_energy(), shape.derivative_energy(), sigma);
}

//! Asymptotic covariance under the A1 constraints, ordered (theta_2..theta_J,
//! a_2..a_J, upsilon_2..upsilon_J). The (a, upsilon) blocks are coupled
//! through the shape mean c_0.
struct A1CovarianceBlocks
{
  int J = 0;
  double sigma = 0.0;
  double c0 = 0.0;
  double shape_energy = 0.0; // ||f||^2 including c_0^2
  double derivative_energy = 0.0;
  Eigen::MatrixXd B;
  Eigen::MatrixXd B_inv;
  //! sigma^2-scaled asymptotic covariance of sqrt(n)(beta_hat - beta).
  Eigen::MatrixXd Gamma;

  Eigen::MatrixXd covariance(int n) const { return Gamma / n; }
};

inline A1CovarianceBlocks
a1_covariance(const Eigen::VectorXd& a, double c0, double shape_energy, double derivative_energy, double sigma)
{
  const int J = static_cast<int>(a.size());
  if (J < 2)
    throw Error(ErrorCode::LengthMismatch, "need J >= 2 amplitudes");
  for (int j = 0; j < J; ++j)
    if (a[j] == 0.0)
      throw Error(ErrorCode::ZeroAmplitudeCoordinate,
                  "a_" + std::to_string(j + 1) + " = 0 makes Gamma singular");
  const double denom = shape_energy - c0 * c0;
  if (!(denom > 1e-12 * shape_energy) || !(derivative_energy > 0.0))
    throw Error(ErrorCode::DegenerateShape, "||f||^2 - c_0^2 vanishes: the shape is constant");

  const int k = J - 1;
  const double a1sq = a[0] * a[0];
  const Eigen::VectorXd A = a.tail(k);
  const Eigen::VectorXd A2 = A.array().square();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k, k);

  A1CovarianceBlocks out;
  out.J = J;
  out.sigma = sigma;
  out.c0 = c0;
  out.shape_energy = shape_energy;
  out.derivative_energy = derivative_energy;
  out.B = I - A * A.transpose() / J;
  out.B_inv = I + A * A.transpose() / a1sq;

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3 * k, 3 * k);
  Eigen::MatrixXd dinv2 = A2.cwiseInverse().asDiagonal();
  g.block(0, 0, k, k) = (dinv2 + ones * ones.transpose() / a1sq) / derivative_energy;
  g.block(k, k, k, k) = out.B / denom;
  g.block(k, 2 * k, k, k) = -c0 / denom * I;
  g.block(2 * k, k, k, k) = -c0 / denom * I;
  g.block(2 * k, 2 * k, k, k) = shape_energy / denom * out.B_inv;
  out.Gamma = sigma * sigma * g;
  return out;
}

//! Gamma from a spectrum that carries its mean (l = 0 coefficient).
inline A1CovarianceBlocks
a1_covariance(const Eigen::VectorXd& a, const ShapeSpectrum& shape, double sigma)
{
  return a1_covariance(a, shape.level(), shape.energy(), shape.derivative_energy(), sigma);
}

//! Standard normal quantile. Acklam's rational approximation refined by one
//! Halley step on erfc, accurate well below 1e-8 on (0, 1).
inline double
normal_quantile(double p)
{
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "quantile level must lie in (0, 1)");
  static constexpr double a[] = { -3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00 };
  static constexpr double b[] = { -5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01 };
  static constexpr double c[] = { -7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00 };
  static constexpr double d[] = { 7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00 };
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

struct Interval
{
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double half_width = 0.0;
  bool circular = false; // theta: bounds wrapped into [0, 2pi)
};

struct IntervalReport
{
  double level = 0.95;
  std::vector<std::string> labels;
  Eigen::MatrixXd covariance; // of beta_hat (already divided by n)
  std::vector<Interval> intervals;
  bool degenerate = false;    // sigma_hat = 0: zero-width intervals
  bool converged = true;
  double inverse_residual = 0.0;
};

struct IntervalOptions
{
  bool require_converged = true;
};

//! Plug-in covariance of the fitted parameters in FreeChart order.
inline Eigen::MatrixXd
plug_in_covariance(const FitResult& fit, double* inverse_residual = nullptr)
{
  const ParameterSet& b = fit.beta_hat;
  if (b.regime.is_a0()) {
    EfficiencyBlocks eb = efficiency_blocks(b.a, fit.shape_hat, fit.sigma_hat);
    if (inverse_residual)
      *inverse_residual = eb.inverse_residual();
    return eb.covariance(fit.n);
  }
  A1CovarianceBlocks g = a1_covariance(b.a, fit.shape_hat, fit.sigma_hat);
  if (inverse_residual)
    *inverse_residual = (g.B * g.B_inv - Eigen::MatrixXd::Identity(b.J() - 1, b.J() - 1)).norm();
  return g.covariance(fit.n);
}

//! beta_k +- z_{(1+level)/2} sqrt((sigma^2 H^{-1} / n)_{kk}).
inline IntervalReport
confidence_intervals(const FitResult& fit, double level, IntervalOptions opts = {})
{
  if (!(level > 0.0 && level < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "confidence level must lie in (0, 1)");
  if (opts.require_converged && !fit.converged)
    throw Error(ErrorCode::NotConverged, "fit did not converge");

  const ParameterSet& b = fit.beta_hat;
  FreeChart chart{ b.J(), b.regime };
  IntervalReport rep;
  rep.level = level;
  rep.labels = chart.labels();
  rep.converged = fit.converged;
  rep.degenerate = fit.sigma_zero || fit.sigma_hat == 0.0;
  rep.covariance = plug_in_covariance(fit, &rep.inverse_residual);

  const double z = normal_quantile(0.5 * (1.0 + level));
  const Eigen::VectorXd est = chart.to_vector(b);
  for (int k = 0; k < chart.size(); ++k) {
    Interval iv;
    iv.name = rep.labels[static_cast<std::size_t>(k)];
    iv.estimate = est[k];
    iv.half_width = z * std::sqrt(std::max(0.0, rep.covariance(k, k)));
    iv.circular = k < b.J() - 1;
    iv.lower = est[k] - iv.half_width;
    iv.upper = est[k] + iv.half_width;
    if (iv.circular) {
      iv.lower = wrap_angle(iv.lower);
      iv.upper = wrap_angle(iv.upper);
    }
    rep.intervals.push_back(iv);
  }
  return rep;
}

//! Elementwise ratio diag(numeric Hessian of M_n) / diag((2/J) H) at the fit.
//! Values near 1 confirm the curvature of the criterion matches the
//! efficient information.
inline Eigen::VectorXd
hessian_ratio(const FitResult& fit)
{
  const ParameterSet& b = fit.beta_hat;
  const int J = b.J();
  Eigen::MatrixXd info;
  if (b.regime.is_a0()) {
    info = efficiency_blocks(b.a, fit.shape_hat, 1.0).H;
  } else {
    info = a1_covariance(b.a, fit.shape_hat, 1.0).Gamma.inverse();
  }
  Eigen::VectorXd expected = (2.0 / J) * info.diagonal();
  return fit.hessian.diagonal().cwiseQuotient(expected);
}

} // namespace shapeinv
