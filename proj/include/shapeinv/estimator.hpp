#pragma once

#include "criterion.hpp"
#include "errors.hpp"
#include "panel_model.hpp"
#include "sampling_grid.hpp"
#include "spectrum.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace shapeinv {

//! Rule for the number of retained frequencies m_n.
struct BandRule
{
  enum class Kind
  {
    Explicit,
    PowerLaw
  };

  Kind kind = Kind::PowerLaw;
  int m = 0;              // Explicit
  double exponent = 0.25; // PowerLaw: m = floor(n^exponent) (or ceil)
  bool round_up = false;

  static BandRule explicit_m(int m) { return { Kind::Explicit, m, 0.25, false }; }
  static BandRule power_law(double exponent, bool round_up = false)
  {
    return { Kind::PowerLaw, 0, exponent, round_up };
  }

  int resolve(int n) const
  {
    if (kind == Kind::Explicit) {
      if (m < 1)
        throw Error(ErrorCode::BandTooWide, "m must be at least 1");
      if (2 * m >= n)
        throw Error(ErrorCode::BandTooWide,
                    "2m < n violated (m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
      return m;
    }
    if (!(exponent > 0.0 && exponent < 1.0))
      throw Error(ErrorCode::ConfigInvalid, "band exponent must lie in (0, 1)");
    double raw = std::pow(static_cast<double>(n), exponent);
    // guard against pow returning k - 1ulp for exact powers
    double r = round_up ? std::ceil(raw - 1e-9) : std::floor(raw + 1e-9);
    int mm = std::max(1, static_cast<int>(r));
    return std::min(mm, (n - 1) / 2);
  }
};

struct FitConfig
{
  BandRule band = BandRule::power_law(0.25);
  int theta_grid_size = 0; // 0 means n
  int n_multistart = 5;
  double tol_objective = 1e-12;
  double tol_param = 1e-9;
  int max_iters = 500;

  void validate() const
  {
    if (theta_grid_size < 0 || n_multistart < 1 || max_iters < 1 ||
        !(tol_objective > 0.0) || !(tol_param > 0.0))
      throw Error(ErrorCode::ConfigInvalid, "invalid fit configuration");
  }
};

struct AmplitudeProfile
{
  Eigen::VectorXd a;
  double objective = 0.0;
  bool tie = false;
};

namespace detail {

//! Q_{jk} = (1/J) Re sum_{1<=|l|<=m} u_{j,l} conj(u_{k,l}), u_{j,l} = e^{il theta_j} d_{j,l}.
inline Eigen::MatrixXd
amplitude_matrix(const CriterionContext& ctx, const Eigen::VectorXd& theta)
{
  const int J = ctx.J();
  const Eigen::MatrixXcd u = rotated_coefficients(ctx, theta);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = j; k < J; ++k) {
      double acc = 0.0;
      for (int l = 1; l <= ctx.m(); ++l)
        acc += 2.0 * (u(j, l) * std::conj(u(k, l))).real();
      q(j, k) = q(k, j) = acc / J;
    }
  return q;
}

} // namespace detail

//! Exact minimizer of M_n over the amplitude sphere for fixed theta (and
//! upsilon = column means): sqrt(J) times the leading eigenvector of Q(theta),
//! signed so that a_1 > 0.
inline AmplitudeProfile
profile_amplitude(const CriterionContext& ctx, const Eigen::VectorXd& theta)
{
  const int J = ctx.J();
  if (theta.size() != J)
    throw Error(ErrorCode::LengthMismatch, "theta must have length J");
  const Eigen::MatrixXd q = detail::amplitude_matrix(ctx, theta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q);
  const Eigen::VectorXd& lambda = eig.eigenvalues(); // ascending
  const double top = lambda[J - 1];
  if (!(top > 1e-14 * std::max(ctx.scale(), std::numeric_limits<double>::min())))
    throw Error(ErrorCode::DegenerateSpectrum,
                "no energy in frequencies 1..m; amplitudes are undefined");

  AmplitudeProfile out;
  out.tie = (top - lambda[J - 2]) <= 1e-10 * std::max(1.0, std::abs(top));
  Eigen::VectorXd v = eig.eigenvectors().col(J - 1);
  // sign: first non-negligible coordinate positive
  for (int j = 0; j < J; ++j) {
    if (std::abs(v[j]) > 1e-12) {
      if (v[j] < 0.0)
        v = -v;
      break;
    }
  }
  out.a = std::sqrt(static_cast<double>(J)) * v.normalized();
  out.objective = ctx.centered_sum_of_squares(ctx.column_means()) - top;
  return out;
}

struct ShiftCandidates
{
  std::vector<Eigen::VectorXd> thetas; // ranked by profiled objective
  std::vector<double> objectives;
  //! scores[j-1][g]: alignment score of curve j (j >= 1) against curve 0 at
  //! shift 2 pi g / G.
  std::vector<std::vector<double>> scores;
};

//! Cross-correlation initialization: for every curve j >= 2 the score
//! Delta -> |sum_{1<=|l|<=m} d_{1,l} conj(d_{j,l}) e^{-il Delta}| is maximal at
//! Delta = theta_j for noiseless data. Local maxima per curve are combined
//! and ranked by the profiled criterion.
inline ShiftCandidates
initialize_shifts(const CriterionContext& ctx, const FitConfig& config)
{
  const int J = ctx.J();
  const int m = ctx.m();
  const int G = config.theta_grid_size > 0 ? config.theta_grid_size : ctx.n();
  const int K = config.n_multistart;

  ShiftCandidates out;
  std::vector<std::vector<int>> per_curve(static_cast<std::size_t>(J - 1));
  for (int j = 1; j < J; ++j) {
    std::vector<cplx> cross(static_cast<std::size_t>(m + 1));
    for (int l = 1; l <= m; ++l)
      cross[static_cast<std::size_t>(l)] = ctx.d(0, l) * std::conj(ctx.d(j, l));
    std::vector<double> score(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) {
      double delta = two_pi * g / G;
      double acc = 0.0;
      for (int l = 1; l <= m; ++l)
        acc += 2.0 * (cross[static_cast<std::size_t>(l)] * std::polar(1.0, -l * delta)).real();
      score[static_cast<std::size_t>(g)] = std::abs(acc);
    }
    std::vector<int> peaks;
    for (int g = 0; g < G; ++g) {
      double s = score[static_cast<std::size_t>(g)];
      double prev = score[static_cast<std::size_t>((g + G - 1) % G)];
      double next = score[static_cast<std::size_t>((g + 1) % G)];
      if (s >= prev && s > next)
        peaks.push_back(g);
    }
    if (peaks.empty())
      peaks.push_back(static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin()));
    std::stable_sort(peaks.begin(), peaks.end(), [&](int x, int y) {
      return score[static_cast<std::size_t>(x)] > score[static_cast<std::size_t>(y)];
    });
    if (static_cast<int>(peaks.size()) > K)
      peaks.resize(static_cast<std::size_t>(K));
    per_curve[static_cast<std::size_t>(j - 1)] = std::move(peaks);
    out.scores.push_back(std::move(score));
  }

  // Combine per-curve peaks: full product when small, otherwise the best
  // combination plus single-curve deviations from it.
  std::vector<std::vector<int>> combos;
  double total = 1.0;
  for (const auto& p : per_curve)
    total *= static_cast<double>(p.size());
  if (total <= 1024.0) {
    std::vector<std::size_t> idx(per_curve.size(), 0);
    while (true) {
      std::vector<int> c;
      for (std::size_t k = 0; k < idx.size(); ++k)
        c.push_back(per_curve[k][idx[k]]);
      combos.push_back(std::move(c));
      std::size_t k = 0;
      while (k < idx.size() && ++idx[k] == per_curve[k].size())
        idx[k++] = 0;
      if (k == idx.size())
        break;
    }
  } else {
    std::vector<int> best;
    for (const auto& p : per_curve)
      best.push_back(p.front());
    combos.push_back(best);
    for (std::size_t k = 0; k < per_curve.size(); ++k)
      for (std::size_t r = 1; r < per_curve[k].size(); ++r) {
        auto c = best;
        c[k] = per_curve[k][r];
        combos.push_back(std::move(c));
      }
  }

  struct Ranked
  {
    Eigen::VectorXd theta;
    double objective;
  };
  std::vector<Ranked> ranked;
  for (const auto& c : combos) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(J);
    for (int j = 1; j < J; ++j)
      theta[j] = two_pi * c[static_cast<std::size_t>(j - 1)] / G;
    ranked.push_back({ theta, profile_amplitude(ctx, theta).objective });
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& x, const Ranked& y) { return x.objective < y.objective; });
  for (const auto& r : ranked) {
    if (static_cast<int>(out.thetas.size()) == K)
      break;
    out.thetas.push_back(r.theta);
    out.objectives.push_back(r.objective);
  }
  return out;
}

struct StartRecord
{
  Eigen::VectorXd theta_initial;
  Eigen::VectorXd theta_final;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct FitResult
{
  ParameterSet beta_hat;
  double sigma_hat = 0.0;
  bool sigma_zero = false; // M_n(beta_hat) <= 0, sigma_hat forced to 0
  ShapeSpectrum shape_hat;
  double objective = 0.0;
  int m = 0;
  int n = 0;
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
  bool amplitude_tie = false;
  std::vector<StartRecord> starts;
  std::vector<std::vector<double>> shift_scores;
  //! Finite-difference Hessian of M_n at beta_hat in FreeChart coordinates.
  Eigen::MatrixXd hessian;
  bool hessian_positive_definite = false;
};

namespace detail {

struct DescentOutcome
{
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
};

//! BFGS with Armijo backtracking on the free shifts theta_2..theta_J of the
//! amplitude-profiled criterion. The amplitude derivative drops out of the
//! chain rule because the profiled a is stationary on the sphere.
inline DescentOutcome
descend_shifts(const CriterionContext& ctx, Eigen::VectorXd x, const FitConfig& config)
{
  const int J = ctx.J();
  const int dim = J - 1;
  const double scale = std::max(ctx.scale(), std::numeric_limits<double>::min());
  const Eigen::VectorXd& ybar = ctx.column_means();

  auto full_theta = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(J);
    t.tail(dim) = v;
    return t;
  };
  auto evaluate = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    Eigen::VectorXd t = full_theta(v);
    AmplitudeProfile prof = profile_amplitude(ctx, t);
    if (grad) {
      CriterionPartials pd = criterion_partials(ctx, t, prof.a, ybar);
      *grad = pd.d_theta.tail(dim);
    }
    return prof.objective;
  };

  DescentOutcome out;
  Eigen::VectorXd g;
  double f = evaluate(x, &g);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  const double gtol = 1e-13 * scale;

  int it = 0;
  for (; it < config.max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= gtol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd p = -hinv * g;
    if (g.dot(p) >= 0.0) {
      hinv.setIdentity();
      p = -g;
    }
    double pmax = p.lpNorm<Eigen::Infinity>();
    if (pmax > 0.5)
      p *= 0.5 / pmax; // at most half a radian per step

    double alpha = 1.0;
    const double slope = g.dot(p);
    Eigen::VectorXd x_new, g_new;
    double f_new = f;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = x + alpha * p;
      f_new = evaluate(x_new, &g_new);
      if (f_new <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No further decrease representable: accept as converged when the
      // gradient is at rounding level.
      out.converged = g.lpNorm<Eigen::Infinity>() <= 1e-7 * scale;
      break;
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-300 && sy > 1e-14 * s.norm() * yv.norm()) {
      if (!scaled) {
        hinv *= sy / yv.squaredNorm();
        scaled = true;
      }
      double rho = 1.0 / sy;
      Eigen::MatrixXd id = Eigen::MatrixXd::Identity(dim, dim);
      hinv = (id - rho * s * yv.transpose()) * hinv * (id - rho * yv * s.transpose()) +
             rho * s * s.transpose();
    }

    const double df = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    if (s.lpNorm<Eigen::Infinity>() < config.tol_param &&
        df <= config.tol_objective * (1.0 + std::abs(f))) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.x = x;
  out.f = f;
  out.iterations = it;
  return out;
}

inline Eigen::MatrixXd
numeric_hessian(const CriterionContext& ctx, const ParameterSet& p)
{
  FreeChart chart{ p.J(), ctx.regime() };
  const Eigen::VectorXd x0 = chart.to_vector(p);
  const int d = chart.size();
  Eigen::MatrixXd h(d, d);
  const double step = 1e-5;
  for (int k = 0; k < d; ++k) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp[k] += step;
    xm[k] -= step;
    ParameterSet pp = chart.from_vector(xp), pm = chart.from_vector(xm);
    Eigen::VectorXd gp = criterion_gradient(ctx, pp.theta, pp.a, pp.upsilon);
    Eigen::VectorXd gm = criterion_gradient(ctx, pm.theta, pm.a, pm.upsilon);
    h.col(k) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

} // namespace detail

//! Levels profiled in closed form for fixed amplitudes: column means (clipped)
//! under A0; under A1 upsilon_1 = 0 and upsilon_j = mean_j - a_j mean_1 / a_1.
inline Eigen::VectorXd
profile_levels(const CriterionContext& ctx, const Eigen::VectorXd& a)
{
  const Eigen::VectorXd& ybar = ctx.column_means();
  if (ctx.regime().is_a0()) {
    const double u = ctx.regime().upsilon_max;
    return ybar.cwiseMax(-u).cwiseMin(u);
  }
  Eigen::VectorXd v = ybar - a * (ybar[0] / a[0]);
  v[0] = 0.0;
  return v;
}

//! Minimizes M_n over the constraint set of `regime`.
inline FitResult
fit(const CurvePanel& panel, const ConstraintRegime& regime, const FitConfig& config = {})
{
  config.validate();
  const int m = config.band.resolve(panel.n());
  const int J = panel.J();
  // theta and a do not depend on the levels under either regime (the level
  // term profiles out exactly), so the shift search runs on the centered
  // criterion.
  CriterionContext search(panel, m, ConstraintRegime::a0(std::numeric_limits<double>::infinity()));
  CriterionContext ctx(panel, m, regime);

  ShiftCandidates cand = initialize_shifts(search, config);

  FitResult res;
  res.m = m;
  res.n = panel.n();
  res.shift_scores = cand.scores;
  res.restarts = static_cast<int>(cand.thetas.size());

  int best = -1;
  for (std::size_t c = 0; c < cand.thetas.size(); ++c) {
    StartRecord rec;
    rec.theta_initial = cand.thetas[c];
    detail::DescentOutcome o =
      detail::descend_shifts(search, cand.thetas[c].tail(J - 1), config);
    rec.theta_final = Eigen::VectorXd::Zero(J);
    rec.theta_final.tail(J - 1) = o.x;
    rec.final_objective = o.f;
    rec.initial_objective = cand.objectives[c];
    rec.iterations = o.iterations;
    rec.converged = o.converged;
    res.iterations += o.iterations;
    res.starts.push_back(rec);

    if (best < 0) {
      best = static_cast<int>(c);
      continue;
    }
    const StartRecord& b = res.starts[static_cast<std::size_t>(best)];
    if (rec.final_objective < b.final_objective - config.tol_objective) {
      best = static_cast<int>(c);
    } else if (std::abs(rec.final_objective - b.final_objective) <= config.tol_objective) {
      // tie: smallest wrapped theta, lexicographically
      Eigen::VectorXd tr = rec.theta_final.unaryExpr([](double v) { return wrap_angle(v); });
      Eigen::VectorXd tb = b.theta_final.unaryExpr([](double v) { return wrap_angle(v); });
      if (std::lexicographical_compare(tr.begin(), tr.end(), tb.begin(), tb.end()))
        best = static_cast<int>(c);
    }
  }
  res.converged = std::any_of(res.starts.begin(), res.starts.end(),
                              [](const StartRecord& r) { return r.converged; });

  const StartRecord& b = res.starts[static_cast<std::size_t>(best)];
  Eigen::VectorXd theta = b.theta_final.unaryExpr([](double v) { return wrap_angle(v); });
  theta[0] = 0.0;
  AmplitudeProfile prof = profile_amplitude(search, theta);
  res.amplitude_tie = prof.tie;

  ParameterSet& beta = res.beta_hat;
  beta.regime = regime;
  beta.theta = theta;
  beta.a = prof.a;
  beta.upsilon = profile_levels(ctx, prof.a);

  res.objective = criterion_value(ctx, beta.theta, beta.a, beta.upsilon);

  // Report start objectives on the final criterion. The level term does not
  // depend on theta (it vanishes under A1 and is a clipping penalty under A0),
  // so one offset serves every start.
  const double level_shift = res.objective - prof.objective;
  for (auto& r : res.starts) {
    r.initial_objective += level_shift;
    r.final_objective += level_shift;
  }
  if (res.objective > 0.0) {
    res.sigma_hat = std::sqrt(res.objective);
  } else {
    res.sigma_hat = 0.0;
    res.sigma_zero = true;
  }
  beta.sigma = res.sigma_hat;
  res.shape_hat = profiled_coefficients(ctx, beta.theta, beta.a, beta.upsilon);

  res.hessian = detail::numeric_hessian(ctx, beta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> heig(res.hessian, Eigen::EigenvaluesOnly);
  res.hessian_positive_definite = heig.eigenvalues()[0] > 0.0;
  return res;
}

//! The estimated common shape as a trigonometric polynomial.
struct ShapeEstimate
{
  ShapeSpectrum spectrum;

  double operator()(double t) const { return evaluate_spectrum(spectrum, t); }
};

inline ShapeEstimate
estimate_shape(const FitResult& fit)
{
  return { fit.shape_hat };
}

} // namespace shapeinv
