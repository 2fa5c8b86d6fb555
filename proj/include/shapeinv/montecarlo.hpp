#pragma once

#include "criterion.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "inference.hpp"
#include "panel_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace shapeinv {

//! Simulation truth in the A0 parameterization: centered shape, levels
//! already including the shape mean.
struct Truth
{
  ParameterSet params;
  TrueShape shape;
};

//! Builds an A0 truth from raw caption-style values: the amplitudes are
//! projected onto the sphere, the shape is centered and its mean absorbed
//! into the levels (upsilon_j += a_j c_0).
inline Truth
make_truth(const Eigen::VectorXd& theta,
           const Eigen::VectorXd& a,
           const Eigen::VectorXd& raw_upsilon,
           double sigma,
           const TrueShape& raw_shape,
           double upsilon_max = 1e6)
{
  Projection proj = project_to_constraints(theta, a, raw_upsilon, ConstraintRegime::a0(upsilon_max), sigma);
  if (proj.sign_flipped)
    throw Error(ErrorCode::ConfigInvalid, "truth must have a_1 > 0");
  Truth t;
  t.params = proj.params;
  t.params.upsilon = raw_upsilon + t.params.a * raw_shape.level;
  t.shape = raw_shape.centered();
  t.params.validate();
  return t;
}

//! f(t) = 20 (t/2pi)(1 - t/2pi), theta = (0, 0.8), a = (0.75, 1.1990),
//! raw levels (7.5/3, 0.5).
inline Truth
bump_pair_truth(double sigma = 1.0)
{
  Eigen::VectorXd theta(2), a(2), v(2);
  theta << 0.0, 0.8;
  a << 0.75, 1.1990;
  v << 7.5 / 3.0, 0.5;
  return make_truth(theta, a, v, sigma, TrueShape::quadratic_bump(20.0));
}

struct StudyConfig
{
  Truth truth;
  std::vector<int> n_list;
  int replicates = 100;
  std::uint64_t base_seed = 0;
  FitConfig fit;
  std::vector<ConstraintRegime::Kind> regimes{ ConstraintRegime::Kind::A0 };
  int threads = 1; // 0 = hardware concurrency

  void validate() const
  {
    if (replicates < 2)
      throw Error(ErrorCode::ConfigInvalid, "at least two replicates required");
    if (n_list.empty() || regimes.empty())
      throw Error(ErrorCode::ConfigInvalid, "n_list and regimes must be non-empty");
    for (int n : n_list) {
      if (n < 3 || n % 2 == 0)
        throw Error(ErrorCode::ConfigInvalid, "every n must be odd and >= 3 (got " + std::to_string(n) + ")");
      try {
        fit.band.resolve(n);
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigInvalid, e.what());
      }
    }
    if (threads < 0)
      throw Error(ErrorCode::ConfigInvalid, "threads must be >= 0");
    fit.validate();
    try {
      truth.params.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, e.what());
    }
  }
};

struct QuantileSummary
{
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

//! Type-7 (linear interpolation) quantile of a sorted sample.
inline double
sorted_quantile(const std::vector<double>& sorted, double p)
{
  if (sorted.empty())
    return std::numeric_limits<double>::quiet_NaN();
  double h = (sorted.size() - 1) * p;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

inline QuantileSummary
summarize(std::vector<double> xs)
{
  std::sort(xs.begin(), xs.end());
  return { sorted_quantile(xs, 0.0), sorted_quantile(xs, 0.25), sorted_quantile(xs, 0.5),
           sorted_quantile(xs, 0.75), sorted_quantile(xs, 1.0) };
}

//! Results of one (n, regime) cell of a study. Vectors follow FreeChart
//! order for the regime.
struct StudyCell
{
  int n = 0;
  int m = 0;
  ConstraintRegime::Kind regime = ConstraintRegime::Kind::A0;
  std::vector<std::string> labels;
  Eigen::VectorXd truth;
  Eigen::MatrixXd estimates;     // one row per used replicate
  std::vector<int> used_replicates;
  Eigen::VectorXd mean_bias;
  Eigen::MatrixXd empirical_cov; // of sqrt(n)(beta_hat - beta*)
  Eigen::MatrixXd theory_cov;    // sigma^2 H^{-1} (A0) or Gamma (A1) at truth
  Eigen::MatrixXd ratio;         // empirical / theory, NaN where theory = 0
  Eigen::MatrixXd empirical_corr;
  Eigen::VectorXd block_rel_dev; // relative Frobenius deviation per block
  double max_cross_block_corr = 0.0;
  double mise = 0.0;
  double mise_estimation = 0.0;
  double mise_truncation = 0.0;
  std::vector<QuantileSummary> quantiles;
  int failures = 0;
  bool valid = true;

  //! Relative deviation of the k-th diagonal entry from theory.
  double diag_rel_dev(int k) const
  {
    return std::abs(empirical_cov(k, k) - theory_cov(k, k)) / theory_cov(k, k);
  }
};

struct StudyReport
{
  std::uint64_t base_seed = 0;
  int replicates = 0;
  std::vector<StudyCell> cells;

  const StudyCell* find(int n, ConstraintRegime::Kind k) const
  {
    for (const auto& c : cells)
      if (c.n == n && c.regime == k)
        return &c;
    return nullptr;
  }
};

namespace detail {

struct ReplicateOutcome
{
  bool ok = false;
  Eigen::VectorXd estimate;
  double mise_estimation = 0.0;
};

inline Eigen::VectorXd
truth_vector(const Truth& truth, ConstraintRegime::Kind k)
{
  FreeChart chart{ truth.params.J(), { k, truth.params.regime.upsilon_max } };
  if (k == ConstraintRegime::Kind::A0)
    return chart.to_vector(truth.params);
  return chart.to_vector(rewrite_in_a1(truth.params, truth.shape).first);
}

inline Eigen::MatrixXd
theory_covariance(const Truth& truth, ConstraintRegime::Kind k)
{
  const ParameterSet& p = truth.params;
  if (k == ConstraintRegime::Kind::A0)
    return efficiency_blocks(p.a, truth.shape.centered_energy, truth.shape.derivative_energy, p.sigma)
      .asymptotic_covariance();
  const double c0 = p.upsilon[0] / p.a[0];
  return a1_covariance(p.a, c0, truth.shape.centered_energy + c0 * c0, truth.shape.derivative_energy, p.sigma)
    .Gamma;
}

inline int
resolve_threads(int requested)
{
  if (requested > 0)
    return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

//! Runs body(r) for r in [0, count) on up to `threads` workers. Each index
//! writes only its own slot, so results do not depend on scheduling.
template<class Body>
void
parallel_for(int count, int threads, Body body)
{
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int r = 0; r < count; ++r)
      body(r);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int r = t; r < count; r += threads)
        body(r);
    });
  for (auto& th : pool)
    th.join();
}

inline Eigen::MatrixXd
sample_covariance(const Eigen::MatrixXd& x)
{
  Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / double(x.rows() - 1);
}

inline Eigen::MatrixXd
correlation(const Eigen::MatrixXd& cov)
{
  Eigen::VectorXd s = cov.diagonal().cwiseSqrt();
  Eigen::MatrixXd r = cov;
  for (int i = 0; i < cov.rows(); ++i)
    for (int j = 0; j < cov.cols(); ++j)
      r(i, j) = (s[i] > 0 && s[j] > 0) ? cov(i, j) / (s[i] * s[j])
                                       : std::numeric_limits<double>::quiet_NaN();
  return r;
}

inline StudyCell
aggregate(int n,
          int m,
          ConstraintRegime::Kind k,
          const Truth& truth,
          const std::vector<ReplicateOutcome>& outs)
{
  const int J = truth.params.J();
  FreeChart chart{ J, { k, truth.params.regime.upsilon_max } };
  StudyCell cell;
  cell.n = n;
  cell.m = m;
  cell.regime = k;
  cell.labels = chart.labels();
  cell.truth = truth_vector(truth, k);
  const int d = chart.size();

  std::vector<int> used;
  for (std::size_t r = 0; r < outs.size(); ++r) {
    if (outs[r].ok)
      used.push_back(static_cast<int>(r));
  }
  cell.used_replicates = used;
  cell.failures = static_cast<int>(outs.size() - used.size());
  cell.valid = cell.failures <= 0.05 * static_cast<double>(outs.size()) && used.size() >= 2;
  cell.mise_truncation = truth.shape.tail_energy(m);

  cell.estimates.resize(static_cast<Eigen::Index>(used.size()), d);
  Eigen::MatrixXd err(static_cast<Eigen::Index>(used.size()), d);
  double mise_est = 0.0;
  for (std::size_t u = 0; u < used.size(); ++u) {
    const ReplicateOutcome& o = outs[static_cast<std::size_t>(used[u])];
    cell.estimates.row(static_cast<Eigen::Index>(u)) = o.estimate.transpose();
    for (int c = 0; c < d; ++c) {
      double e = c < J - 1 ? circular_difference(o.estimate[c], cell.truth[c]) : o.estimate[c] - cell.truth[c];
      err(static_cast<Eigen::Index>(u), c) = e;
    }
    mise_est += o.mise_estimation;
  }
  if (used.empty()) {
    cell.valid = false;
    return cell;
  }
  cell.mise_estimation = mise_est / used.size();
  cell.mise = cell.mise_estimation + cell.mise_truncation;
  cell.mean_bias = err.colwise().mean().transpose();

  Eigen::MatrixXd scaled = err * std::sqrt(static_cast<double>(n));
  cell.empirical_cov = used.size() >= 2 ? sample_covariance(scaled) : Eigen::MatrixXd::Zero(d, d);
  cell.empirical_corr = correlation(cell.empirical_cov);
  cell.theory_cov = theory_covariance(truth, k);
  cell.ratio = cell.empirical_cov.cwiseQuotient(cell.theory_cov);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (cell.theory_cov(i, j) == 0.0)
        cell.ratio(i, j) = std::numeric_limits<double>::quiet_NaN();

  // blocks: theta [0, J-1), a [J-1, 2J-2), upsilon [2J-2, d)
  const int starts[3] = { 0, J - 1, 2 * (J - 1) };
  const int sizes[3] = { J - 1, J - 1, chart.upsilon_count() };
  cell.block_rel_dev.resize(3);
  for (int b = 0; b < 3; ++b) {
    auto e = cell.empirical_cov.block(starts[b], starts[b], sizes[b], sizes[b]);
    auto t = cell.theory_cov.block(starts[b], starts[b], sizes[b], sizes[b]);
    cell.block_rel_dev[b] = (e - t).norm() / t.norm();
  }
  auto block_of = [&](int idx) { return idx < J - 1 ? 0 : (idx < 2 * (J - 1) ? 1 : 2); };
  cell.max_cross_block_corr = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (block_of(i) != block_of(j) && std::isfinite(cell.empirical_corr(i, j)))
        cell.max_cross_block_corr = std::max(cell.max_cross_block_corr, std::abs(cell.empirical_corr(i, j)));

  for (int c = 0; c < d; ++c) {
    std::vector<double> col(cell.estimates.rows());
    for (Eigen::Index r = 0; r < cell.estimates.rows(); ++r)
      col[static_cast<std::size_t>(r)] = cell.estimates(r, c);
    cell.quantiles.push_back(summarize(std::move(col)));
  }
  return cell;
}

//! Sum_{1<=|l|<=m} |c_hat_l - c_l|^2 for the centered part of the estimate.
inline double
spectral_error(const ShapeSpectrum& est, const TrueShape& truth)
{
  double s = 0.0;
  for (int l = 1; l <= est.m(); ++l)
    s += std::norm(est[l] - truth.coefficient(l)) + std::norm(est[-l] - truth.coefficient(-l));
  return s;
}

} // namespace detail

//! Generates, fits and aggregates config.replicates panels per grid size.
//! Replicate r uses seed base_seed + r and the same panel is fitted under
//! every requested regime.
inline StudyReport
run_study(const StudyConfig& config)
{
  config.validate();
  const Truth& truth = config.truth;
  const int R = config.replicates;
  const int threads = detail::resolve_threads(config.threads);

  StudyReport rep;
  rep.base_seed = config.base_seed;
  rep.replicates = R;
  for (int n : config.n_list) {
    const SamplingGrid grid(n);
    const int m = config.fit.band.resolve(n);
    std::vector<std::vector<detail::ReplicateOutcome>> outs(
      config.regimes.size(), std::vector<detail::ReplicateOutcome>(static_cast<std::size_t>(R)));

    detail::parallel_for(R, threads, [&](int r) {
      CurvePanel panel = generate_panel(truth.params, truth.shape, grid, config.base_seed + static_cast<std::uint64_t>(r));
      for (std::size_t k = 0; k < config.regimes.size(); ++k) {
        detail::ReplicateOutcome& o = outs[k][static_cast<std::size_t>(r)];
        ConstraintRegime regime{ config.regimes[k], truth.params.regime.upsilon_max };
        try {
          FitResult f = fit(panel, regime, config.fit);
          o.ok = f.converged;
          o.estimate = FreeChart{ truth.params.J(), regime }.to_vector(f.beta_hat);
          o.mise_estimation = detail::spectral_error(f.shape_hat, truth.shape);
        } catch (const Error&) {
          o.ok = false;
        }
      }
    });
    for (std::size_t k = 0; k < config.regimes.size(); ++k)
      rep.cells.push_back(detail::aggregate(n, m, config.regimes[k], truth, outs[k]));
  }
  return rep;
}

struct MisePoint
{
  int n = 0;
  int m = 0;
  double mise = 0.0;
  double estimation = 0.0; // sum_{|l|<=m} |c_hat - c|^2, replicate mean
  double truncation = 0.0; // sum_{|l|>m} |c_l|^2
};

struct MiseCurve
{
  std::vector<MisePoint> points;
  double slope = 0.0; // least-squares slope of log MISE on log n
};

//! Mean integrated squared error of the shape estimator, computed exactly in
//! the spectral domain, for each n.
inline MiseCurve
mise_curve(const Truth& truth,
           const std::vector<int>& n_list,
           const BandRule& band,
           int replicates,
           std::uint64_t base_seed,
           int threads = 1)
{
  StudyConfig cfg;
  cfg.truth = truth;
  cfg.n_list = n_list;
  cfg.replicates = replicates;
  cfg.base_seed = base_seed;
  cfg.fit.band = band;
  cfg.regimes = { ConstraintRegime::Kind::A0 };
  cfg.threads = threads;
  StudyReport rep = run_study(cfg);

  MiseCurve out;
  for (const auto& c : rep.cells)
    out.points.push_back({ c.n, c.m, c.mise, c.mise_estimation, c.mise_truncation });
  if (out.points.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(out.points.size());
    for (const auto& p : out.points) {
      double x = std::log(static_cast<double>(p.n)), y = std::log(p.mise);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    out.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }
  return out;
}

//! Same-seed A0 versus A1 study: the A1 levels are coupled to the
//! amplitudes through the shape mean c_0, the A0 ones are not.
struct RegimeComparison
{
  StudyCell a0;
  StudyCell a1;
  double c0 = 0.0; // mean of the A1 shape g = f + upsilon_1/a_1
  Eigen::VectorXd corr_a0;    // corr(a_j, upsilon_j), j = 2..J
  Eigen::VectorXd corr_a1;
  Eigen::VectorXd corr_theory_a1; // implied by Gamma
  double bound = 0.0;             // 3 / sqrt(R)
  bool a1_sign_matches = false;   // sign(corr_a1) == sign(-c0) for every j
  bool a0_within_bound = false;
};

inline RegimeComparison
compare_regimes(const Truth& truth, int n, int replicates, const FitConfig& fit_config,
                std::uint64_t base_seed, int threads = 1)
{
  StudyConfig cfg;
  cfg.truth = truth;
  cfg.n_list = { n };
  cfg.replicates = replicates;
  cfg.base_seed = base_seed;
  cfg.fit = fit_config;
  cfg.regimes = { ConstraintRegime::Kind::A0, ConstraintRegime::Kind::A1 };
  cfg.threads = threads;
  StudyReport rep = run_study(cfg);

  const int J = truth.params.J();
  RegimeComparison out;
  out.a0 = rep.cells[0];
  out.a1 = rep.cells[1];
  out.c0 = truth.params.upsilon[0] / truth.params.a[0];
  out.bound = 3.0 / std::sqrt(static_cast<double>(replicates));
  out.corr_a0.resize(J - 1);
  out.corr_a1.resize(J - 1);
  out.corr_theory_a1.resize(J - 1);
  Eigen::MatrixXd theory_corr = detail::correlation(out.a1.theory_cov);
  out.a1_sign_matches = true;
  out.a0_within_bound = true;
  for (int j = 0; j < J - 1; ++j) {
    // A0: a_{j+2} at J-1+j, upsilon_{j+2} at 2(J-1)+1+j; A1: upsilon_{j+2} at 2(J-1)+j
    out.corr_a0[j] = out.a0.empirical_corr(J - 1 + j, 2 * (J - 1) + 1 + j);
    out.corr_a1[j] = out.a1.empirical_corr(J - 1 + j, 2 * (J - 1) + j);
    out.corr_theory_a1[j] = theory_corr(J - 1 + j, 2 * (J - 1) + j);
    double expected_sign = out.c0 > 0 ? -1.0 : (out.c0 < 0 ? 1.0 : 0.0);
    if (expected_sign != 0.0 && !(out.corr_a1[j] * expected_sign > 0.0))
      out.a1_sign_matches = false;
    if (!(std::abs(out.corr_a0[j]) <= out.bound))
      out.a0_within_bound = false;
  }
  return out;
}

} // namespace shapeinv
