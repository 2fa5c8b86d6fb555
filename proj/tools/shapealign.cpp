// shapealign: fit shape-invariant models to curve panels and run
// simulation studies.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical
// non-convergence (results are still written).

#include <shapeinv/io.hpp>
#include <shapeinv/shapeinv.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using namespace shapeinv;

constexpr int exit_ok = 0;
constexpr int exit_input = 1;
constexpr int exit_no_convergence = 2;

struct FitOptions
{
  std::string input;
  std::string regime = "a0";
  std::string m = "auto";
  double level = 0.95;
  double upsilon_max = 1e6;
  std::string out;
  std::string shape_out;
  std::uint64_t seed = 0;
  std::optional<double> period_days;
};

struct SimulateOptions
{
  std::string config;
  std::string out;
};

struct GenerateOptions
{
  std::string config;
  int n = 201;
  std::uint64_t seed = 0;
  std::string out;
};

BandRule
parse_band(const std::string& m)
{
  if (m == "auto")
    return BandRule::power_law(0.25);
  int v = 0;
  try {
    std::size_t pos = 0;
    v = std::stoi(m, &pos);
    if (pos != m.size())
      throw std::invalid_argument(m);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, "--m must be an integer or 'auto' (got '" + m + "')");
  }
  return BandRule::explicit_m(v);
}

void
print_table(std::ostream& os, const io::ResultFile& r)
{
  char line[256];
  const bool days = r.period_days.has_value();
  std::snprintf(line, sizeof line, "%-16s %14s%s %14s %14s\n", "curve", "theta (rad)", days ? "   theta (days)" : "", "a",
                "upsilon");
  os << line;
  for (std::size_t j = 0; j < r.theta.size(); ++j) {
    std::string d;
    if (days) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %14.4f", r.theta_days[j]);
      d = buf;
    }
    std::snprintf(line, sizeof line, "%-16s %14.6f%s %14.6f %14.6f\n", r.curves[j].c_str(), r.theta[j], d.c_str(),
                  r.a[j], r.upsilon[j]);
    os << line;
  }
  std::snprintf(line, sizeof line, "sigma_hat = %.6g, m = %d, objective = %.6g, converged = %s\n", r.sigma, r.m,
                r.diagnostics.objective, r.diagnostics.converged ? "yes" : "no");
  os << line;
}

int
run_fit(const FitOptions& o)
{
  CurvePanel panel = io::read_panel(o.input);
  ConstraintRegime regime{ io::regime_from_string(o.regime), o.upsilon_max };
  if (!(o.upsilon_max > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "--upsilon-max must be positive");
  if (!(o.level > 0.0 && o.level < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "--level must lie in (0, 1)");
  FitConfig cfg;
  cfg.band = parse_band(o.m);
  cfg.band.resolve(panel.n()); // reports 2m < n violations before fitting

  FitResult f = fit(panel, regime, cfg);
  IntervalReport ci = confidence_intervals(f, o.level, { /*require_converged=*/false });
  io::ResultFile r = io::make_result(panel, f, ci, o.seed, o.period_days);

  std::string shape_csv;
  if (!o.shape_out.empty()) {
    ShapeEstimate est = estimate_shape(f);
    std::ostringstream ss;
    ss << "t,f_hat\n";
    for (int k = 0; k < 512; ++k) {
      double t = two_pi * k / 512.0;
      ss << io::format_double(t) << ',' << io::format_double(est(t)) << '\n';
    }
    shape_csv = ss.str();
  }

  io::write_file_atomic(o.out, io::emit(r));
  if (!o.shape_out.empty())
    io::write_file_atomic(o.shape_out, shape_csv);
  print_table(std::cout, r);

  if (!f.converged) {
    std::cerr << "shapealign: NoConvergence: max_iters reached from every start; best point written\n";
    return exit_no_convergence;
  }
  return exit_ok;
}

io::json
read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return io::json::parse(in);
  } catch (const io::json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
}

//! SHAPEALIGN_THREADS overrides the config's thread count when set.
std::optional<int>
env_threads()
{
  const char* v = std::getenv("SHAPEALIGN_THREADS");
  if (!v || !*v)
    return std::nullopt;
  try {
    int t = std::stoi(v);
    return t < 0 ? 0 : t;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, "SHAPEALIGN_THREADS must be an integer");
  }
}

int
run_simulate(const SimulateOptions& o)
{
  StudyConfig cfg = io::study_config_from_json(read_json(o.config));
  if (auto t = env_threads())
    cfg.threads = *t;
  StudyReport rep = run_study(cfg);
  io::write_file_atomic(o.out, io::to_json(rep).dump(2) + "\n");
  for (const auto& c : rep.cells) {
    std::printf("n=%d regime=%s m=%d used=%zu failures=%d valid=%s\n", c.n, to_string(c.regime).c_str(), c.m,
                c.used_replicates.size(), c.failures, c.valid ? "yes" : "no");
  }
  return exit_ok;
}

int
run_generate(const GenerateOptions& o)
{
  StudyConfig cfg = io::study_config_from_json(read_json(o.config));
  CurvePanel panel = generate_panel(cfg.truth.params, cfg.truth.shape, SamplingGrid(o.n), o.seed);
  std::ostringstream ss;
  io::write_panel(ss, panel);
  io::write_file_atomic(o.out, ss.str());
  return exit_ok;
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Shape-invariant model estimation for panels of periodic curves" };
  app.require_subcommand(1);

  FitOptions fo;
  auto* fitc = app.add_subcommand("fit", "Estimate shifts, amplitudes and levels of a CSV panel");
  fitc->add_option("--input", fo.input, "Panel CSV")->required();
  fitc->add_option("--regime", fo.regime, "Identifiability constraints: a0 or a1")->capture_default_str();
  fitc->add_option("--m", fo.m, "Number of frequencies, or 'auto' for floor(n^(1/4))")->capture_default_str();
  fitc->add_option("--level", fo.level, "Confidence level")->capture_default_str();
  fitc->add_option("--upsilon-max", fo.upsilon_max, "Bound on |upsilon_j| (a0)")->capture_default_str();
  fitc->add_option("--out", fo.out, "Result JSON")->required();
  fitc->add_option("--shape-out", fo.shape_out, "CSV of the estimated shape at 512 points");
  fitc->add_option("--seed", fo.seed, "Seed recorded in the output")->capture_default_str();
  fitc->add_option("--period-days", fo.period_days, "Also report theta in days: theta * period / (2 pi)");

  SimulateOptions so;
  auto* simc = app.add_subcommand("simulate", "Run a Monte Carlo study from a JSON config");
  simc->add_option("--config", so.config, "Study config JSON")->required();
  simc->add_option("--out", so.out, "Report JSON")->required();

  GenerateOptions go;
  auto* genc = app.add_subcommand("generate", "Write one simulated panel from a study config's truth");
  genc->add_option("--config", go.config, "Study config JSON")->required();
  genc->add_option("--n", go.n, "Grid size (odd)")->capture_default_str();
  genc->add_option("--seed", go.seed, "Noise seed")->capture_default_str();
  genc->add_option("--out", go.out, "Panel CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_input;
  }

  try {
    if (*fitc)
      return run_fit(fo);
    if (*simc)
      return run_simulate(so);
    if (*genc)
      return run_generate(go);
  } catch (const Error& e) {
    std::cerr << "shapealign: " << e.what() << "\n";
    return exit_input;
  } catch (const std::exception& e) {
    std::cerr << "shapealign: " << e.what() << "\n";
    return exit_input;
  }
  return exit_input;
}
