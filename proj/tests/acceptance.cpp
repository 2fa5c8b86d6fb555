// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include "oracles.hpp"

#include <shapeinv/io.hpp>
#include <shapeinv/shapeinv.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace shapeinv;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string
fmt(const char* f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double
circular_max_error(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  double e = 0.0;
  for (int j = 0; j < x.size(); ++j)
    e = std::max(e, std::abs(circular_difference(x[j], y[j])));
  return e;
}

io::json
read_json(const fs::path& p)
{
  std::ifstream in(p);
  return io::json::parse(in);
}

std::string
slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int
run_tool(const std::string& args, const fs::path& log)
{
  std::string cmd = std::string("\"") + SHAPEALIGN_EXE + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const fs::path data_dir{ SHAPEINV_DATA_DIR };

// 1 ------------------------------------------------------------------------
Outcome
orthogonality()
{
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int n : { 11, 101, 201 }) {
    SamplingGrid g(n);
    std::uniform_int_distribution<int> ld(-(n - 1) / 2, (n - 1) / 2);
    for (int k = 0; k < 1000; ++k) {
      int l = ld(rng), p = ld(rng);
      cplx s(0.0, 0.0);
      for (int r = 0; r < n; ++r)
        s += std::conj(g.twiddle(l - p, r)); // e^{i(l-p)t_r}
      s /= double(n);
      const double expected = l == p ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(s - expected));
      worst = std::max(worst, std::abs(orthogonality_kernel(double(l - p) / n, n) - expected));
    }
  }
  return { worst <= 1e-12, "max deviation " + fmt("%.2e", worst) };
}

// 2 ------------------------------------------------------------------------
struct NoiselessFixture
{
  Truth truth;
};

NoiselessFixture
noiseless_fixture()
{
  io::json cfg = read_json(data_dir / "noiseless_j3.json");
  StudyConfig sc = io::study_config_from_json(cfg);
  NoiselessFixture f;
  f.truth = sc.truth;
  return f;
}

Outcome
noiseless_recovery()
{
  NoiselessFixture fx = noiseless_fixture();
  const ParameterSet& t = fx.truth.params;
  CurvePanel panel = generate_panel(t, fx.truth.shape, SamplingGrid(101), 0);
  FitConfig cfg;
  cfg.band = BandRule::explicit_m(5);
  FitResult f = fit(panel, ConstraintRegime::a0(), cfg);
  const double et = circular_max_error(f.beta_hat.theta, t.theta);
  const double ea = (f.beta_hat.a - t.a).cwiseAbs().maxCoeff();
  const double ev = (f.beta_hat.upsilon - t.upsilon).cwiseAbs().maxCoeff();
  const bool ok = f.converged && et < 1e-6 && ea < 1e-6 && ev < 1e-10 && f.sigma_hat < 1e-6;
  return { ok, "theta " + fmt("%.1e", et) + ", a " + fmt("%.1e", ea) + ", upsilon " + fmt("%.1e", ev) + ", sigma_hat " +
                 fmt("%.1e", f.sigma_hat) };
}

// 3 ------------------------------------------------------------------------
Outcome
gradient_check()
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(0.0, two_pi);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  int points = 0;
  for (int panel_id = 0; panel_id < 5; ++panel_id) {
    const int J = 2 + panel_id % 3;
    CurvePanel panel = oracle::random_panel(rng, J, 51 + 20 * panel_id);
    ConstraintRegime regime = panel_id % 2 ? ConstraintRegime::a1() : ConstraintRegime::a0();
    CriterionContext ctx(panel, 3 + panel_id, regime);
    FreeChart chart{ J, regime };
    for (int k = 0; k < 10; ++k, ++points) {
      Eigen::VectorXd theta = Eigen::VectorXd::Zero(J), v(J);
      for (int j = 1; j < J; ++j)
        theta[j] = ud(rng);
      for (int j = 0; j < J; ++j)
        v[j] = nd(rng);
      if (regime.is_a1())
        v[0] = 0.0;
      Eigen::VectorXd a = oracle::random_sphere_point(rng, J, 0.3);
      Eigen::VectorXd g = criterion_gradient(ctx, theta, a, v);
      Eigen::VectorXd x = chart.to_vector(theta, a, v);
      Eigen::VectorXd fd(x.size());
      const double h = 1e-6;
      for (int c = 0; c < x.size(); ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        ParameterSet pp = chart.from_vector(xp), pm = chart.from_vector(xm);
        fd[c] = (criterion_value(ctx, pp.theta, pp.a, pp.upsilon) - criterion_value(ctx, pm.theta, pm.a, pm.upsilon)) /
                (2 * h);
      }
      worst = std::max(worst, (g - fd).norm() / fd.norm());
    }
  }
  return { worst <= 1e-6, std::to_string(points) + " points, max relative error " + fmt("%.2e", worst) };
}

// 4 ------------------------------------------------------------------------
Outcome
criterion_identity()
{
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ud(0.0, two_pi);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int J = 2 + k % 4;
    CurvePanel panel = oracle::random_panel(rng, J, 41 + 2 * k);
    ConstraintRegime regime = k % 2 ? ConstraintRegime::a1() : ConstraintRegime::a0();
    CriterionContext ctx(panel, 2 + k % 5, regime);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(J), v(J);
    for (int j = 1; j < J; ++j)
      theta[j] = ud(rng);
    for (int j = 0; j < J; ++j)
      v[j] = nd(rng);
    if (regime.is_a1())
      v[0] = 0.0;
    Eigen::VectorXd a = oracle::random_sphere_point(rng, J, 0.2);
    ShapeSpectrum fhat = profiled_coefficients(ctx, theta, a, v);
    double brute = oracle::residual_criterion(panel, fhat, theta, a, v);
    worst = std::max(worst, std::abs(criterion_value(ctx, theta, a, v) - brute));
  }
  return { worst <= 1e-10, "20 pairs, max |M_n - residual| " + fmt("%.2e", worst) };
}

// 5 ------------------------------------------------------------------------
Outcome
efficiency()
{
  StudyConfig cfg;
  cfg.truth = bump_pair_truth(1.0);
  cfg.n_list = { 201 };
  cfg.replicates = 200;
  cfg.base_seed = 0;
  cfg.threads = 0;
  StudyReport rep = run_study(cfg);
  const StudyCell& c = rep.cells[0];
  bool ok = c.valid;
  std::string d = "m=" + std::to_string(c.m) + ", ratios";
  for (int k = 0; k < c.empirical_cov.rows(); ++k) {
    d += " " + c.labels[static_cast<std::size_t>(k)] + "=" + fmt("%.3f", c.ratio(k, k));
    ok = ok && c.diag_rel_dev(k) <= 0.25;
  }
  d += ", max cross-block |corr| " + fmt("%.3f", c.max_cross_block_corr);
  ok = ok && c.max_cross_block_corr <= 0.21;
  return { ok, d };
}

// 6 ------------------------------------------------------------------------
Outcome
printed_inverse()
{
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ud(0.2, 5.0);
  double worst_h = 0.0, worst_b = 0.0;
  for (int J : { 2, 3, 5 }) {
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd a = oracle::random_sphere_point(rng, J, 0.05);
      const double e = ud(rng), de = ud(rng);
      EfficiencyBlocks eb = efficiency_blocks(a, e, de, 1.0);
      Eigen::MatrixXd numeric = eb.H.inverse();
      double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
      worst_h = std::max(worst_h, (numeric - eb.H_inv).cwiseAbs().maxCoeff() / scale);
      const double c0 = 0.5 * std::sqrt(e);
      A1CovarianceBlocks g = a1_covariance(a, c0, e + c0 * c0, de, 1.0);
      worst_b = std::max(worst_b, (g.B * g.B_inv - Eigen::MatrixXd::Identity(J - 1, J - 1)).cwiseAbs().maxCoeff());
    }
  }
  return { worst_h <= 1e-8 && worst_b <= 1e-8,
           "max |H^-1 - inv(H)| " + fmt("%.2e", worst_h) + ", max |B B^-1 - I| " + fmt("%.2e", worst_b) };
}

// 7 ------------------------------------------------------------------------
Outcome
regimes()
{
  RegimeComparison rc = compare_regimes(bump_pair_truth(1.0), 201, 200, FitConfig{}, 0, 0);
  const double emp = rc.corr_a1[0], theory = rc.corr_theory_a1[0], a0 = rc.corr_a0[0];
  const bool ok = rc.a0.valid && rc.a1.valid && emp < 0.0 && std::abs(emp - theory) <= 0.35 * std::abs(theory) &&
                  std::abs(a0) <= 0.21;
  return { ok, "c0(g)=" + fmt("%.3f", rc.c0) + ", A1 corr(a2,upsilon2) " + fmt("%.3f", emp) + " vs Gamma " +
                 fmt("%.3f", theory) + ", A0 corr " + fmt("%.3f", a0) };
}

// 8 ------------------------------------------------------------------------
Outcome
mise_slope()
{
  Truth t = make_truth(Eigen::Vector2d(0.0, 0.8), Eigen::Vector2d(0.75, 1.199), Eigen::Vector2d(2.5, 0.5), 1.0,
                       TrueShape::power_decay(2.5, 2000, 2.0));
  MiseCurve mc = mise_curve(t, { 101, 201, 401, 801 }, BandRule::power_law(0.2, true), 50, 0, 0);
  std::string d = "slope " + fmt("%.3f", mc.slope) + " (";
  for (const auto& p : mc.points)
    d += "n=" + std::to_string(p.n) + " m=" + std::to_string(p.m) + " MISE=" + fmt("%.3g", p.mise) + "; ";
  d += ")";
  return { mc.slope >= -1.1 && mc.slope <= -0.5, d };
}

// 9 ------------------------------------------------------------------------
Outcome
consistency()
{
  Truth t = bump_pair_truth(1.0);
  auto median_error = [&](int n) {
    StudyConfig cfg;
    cfg.truth = t;
    cfg.n_list = { n };
    cfg.replicates = 50;
    cfg.base_seed = 0;
    cfg.threads = 0;
    StudyReport rep = run_study(cfg);
    const StudyCell& c = rep.cells[0];
    std::vector<double> errs;
    const int J = t.params.J();
    for (Eigen::Index r = 0; r < c.estimates.rows(); ++r) {
      double e = 0.0;
      for (Eigen::Index k = 0; k < c.estimates.cols(); ++k) {
        double d = k < J - 1 ? circular_difference(c.estimates(r, k), c.truth[k]) : c.estimates(r, k) - c.truth[k];
        e = std::max(e, std::abs(d));
      }
      errs.push_back(e);
    }
    return std::make_pair(sorted_quantile((std::sort(errs.begin(), errs.end()), errs), 0.5), c.m);
  };
  auto [e101, m101] = median_error(101);
  auto [e801, m801] = median_error(801);
  return { e801 < e101, "median max-error n=101 (m=" + std::to_string(m101) + ") " + fmt("%.4f", e101) + ", n=801 (m=" +
                          std::to_string(m801) + ") " + fmt("%.4f", e801) };
}

// 10 -----------------------------------------------------------------------
Outcome
cli_end_to_end()
{
  const fs::path dir = fs::temp_directory_path() / ("shapealign_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::string d;
  bool ok = true;

  const std::string base = "fit --input \"" + (data_dir / "noiseless_j3.csv").string() + "\" --m 5 --regime a0";
  int c1 = run_tool(base + " --out \"" + (dir / "r1.json").string() + "\"", dir / "log1.txt");
  int c2 = run_tool(base + " --out \"" + (dir / "r2.json").string() + "\"", dir / "log2.txt");
  ok = ok && c1 == 0 && c2 == 0;
  const bool stable = c1 == 0 && slurp(dir / "r1.json") == slurp(dir / "r2.json");
  ok = ok && stable;
  d += "exit " + std::to_string(c1) + "/" + std::to_string(c2) + (stable ? ", byte-stable" : ", NOT byte-stable");

  if (c1 == 0) {
    io::ResultFile r = io::parse_result(slurp(dir / "r1.json"));
    NoiselessFixture fx = noiseless_fixture();
    const ParameterSet& t = fx.truth.params;
    Eigen::Map<const Eigen::VectorXd> th(r.theta.data(), static_cast<Eigen::Index>(r.theta.size()));
    Eigen::Map<const Eigen::VectorXd> a(r.a.data(), static_cast<Eigen::Index>(r.a.size()));
    Eigen::Map<const Eigen::VectorXd> v(r.upsilon.data(), static_cast<Eigen::Index>(r.upsilon.size()));
    const bool rec = circular_max_error(th, t.theta) < 1e-6 && (a - t.a).cwiseAbs().maxCoeff() < 1e-6 &&
                     (v - t.upsilon).cwiseAbs().maxCoeff() < 1e-10 && r.sigma < 1e-6;
    ok = ok && rec;
    d += rec ? ", truth recovered" : ", truth NOT recovered";
  }

  for (const char* bad : { "malformed_even_rows.csv", "malformed_t_column.csv", "malformed_ragged.csv" }) {
    int c = run_tool("fit --input \"" + (data_dir / bad).string() + "\" --out \"" + (dir / "bad.json").string() + "\"",
                     dir / "log_bad.txt");
    ok = ok && c == 1 && !fs::exists(dir / "bad.json");
    d += ", " + std::string(bad) + " -> " + std::to_string(c);
  }
  int cm = run_tool("fit --input \"" + (data_dir / "two_curve_n201.csv").string() + "\" --m 200 --out \"" +
                      (dir / "m200.json").string() + "\"",
                    dir / "log_m200.txt");
  const bool msg = slurp(dir / "log_m200.txt").find("2m < n violated") != std::string::npos;
  ok = ok && cm == 1 && msg && !fs::exists(dir / "m200.json");
  d += ", --m 200 at n=201 -> " + std::to_string(cm) + (msg ? " (2m < n violated)" : " (message missing)");

  fs::remove_all(dir);
  return { ok, d };
}

} // namespace

int
main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    { "1 discrete orthogonality", orthogonality },
    { "2 noiseless recovery", noiseless_recovery },
    { "3 analytic gradient", gradient_check },
    { "4 criterion identity", criterion_identity },
    { "5 two-curve efficiency", efficiency },
    { "6 closed-form inverses", printed_inverse },
    { "7 A1 versus A0 coupling", regimes },
    { "8 MISE rate", mise_slope },
    { "9 consistency", consistency },
    { "10 CLI end to end", cli_end_to_end },
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = { false, std::string("exception: ") + e.what() };
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion(s) failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
