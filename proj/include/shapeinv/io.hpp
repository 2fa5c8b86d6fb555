#pragma once

// File formats: curve panels (CSV), fit results and study configs/reports
// (JSON). This is the only part of the library that touches the filesystem.

#include "errors.hpp"
#include "estimator.hpp"
#include "inference.hpp"
#include "montecarlo.hpp"
#include "panel_model.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace shapeinv::io {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string_view
trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view>
split(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline std::string
where(int line, int column)
{
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

} // namespace detail

//! Parses a panel CSV: a header row, an optional leading "t" column (radians,
//! must match 2*pi*i/n within 1e-9) and one column per curve.
inline CurvePanel
parse_panel(std::istream& in)
{
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty())
      break;
  }
  if (detail::trim(line).empty())
    throw Error(ErrorCode::ParseError, "empty panel file");
  if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
    line.erase(0, 3);
  for (auto cell : detail::split(line))
    header.emplace_back(cell);
  const int header_line = lineno;
  const bool has_t = !header.empty() && header.front() == "t";
  const int ncols = static_cast<int>(header.size());
  const int J = ncols - (has_t ? 1 : 0);
  if (J < 2)
    throw Error(ErrorCode::ParseError,
                "need at least two curve columns (" + detail::where(header_line, 1) + ")");

  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty())
      continue;
    auto cells = detail::split(line);
    if (static_cast<int>(cells.size()) != ncols)
      throw Error(ErrorCode::RaggedColumns,
                  "expected " + std::to_string(ncols) + " cells, found " + std::to_string(cells.size()) +
                    " (line " + std::to_string(lineno) + ")");
    std::vector<double> row;
    for (int c = 0; c < ncols; ++c) {
      std::string_view cell = cells[static_cast<std::size_t>(c)];
      if (cell.empty())
        throw Error(ErrorCode::ParseError, "missing value (" + detail::where(lineno, c + 1) + ")");
      double v = 0.0;
      const char* first = cell.data();
      if (*first == '+')
        ++first;
      auto res = std::from_chars(first, cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw Error(ErrorCode::ParseError,
                    "not a number: '" + std::string(cell) + "' (" + detail::where(lineno, c + 1) + ")");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
    row_lines.push_back(lineno);
  }

  const int n = static_cast<int>(rows.size());
  if (n < 3)
    throw Error(ErrorCode::GridMismatch, "need at least 3 rows (got " + std::to_string(n) + ")");
  if (n % 2 == 0)
    throw Error(ErrorCode::GridMismatch, "n must be odd (got " + std::to_string(n) + " rows)");
  SamplingGrid grid(n);
  if (has_t) {
    for (int i = 0; i < n; ++i) {
      double t = rows[static_cast<std::size_t>(i)][0];
      if (std::abs(t - grid[i]) > 1e-9)
        throw Error(ErrorCode::GridMismatch,
                    "t is not the equidistant grid 2*pi*i/n (" + detail::where(row_lines[static_cast<std::size_t>(i)], 1) +
                      ")");
    }
  }
  RowMatrix y(J, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j)
      y(j, i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + (has_t ? 1 : 0))];
  std::vector<std::string> labels(header.begin() + (has_t ? 1 : 0), header.end());
  return CurvePanel(grid, std::move(y), std::move(labels));
}

inline CurvePanel
read_panel(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return parse_panel(in);
}

inline std::string
format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void
write_panel(std::ostream& out, const CurvePanel& panel, bool with_t = true)
{
  if (with_t)
    out << "t,";
  for (int j = 0; j < panel.J(); ++j)
    out << panel.labels()[static_cast<std::size_t>(j)] << (j + 1 < panel.J() ? "," : "\n");
  for (int i = 0; i < panel.n(); ++i) {
    if (with_t)
      out << format_double(panel.grid()[i]) << ',';
    for (int j = 0; j < panel.J(); ++j)
      out << format_double(panel.y()(j, i)) << (j + 1 < panel.J() ? "," : "\n");
  }
}

//! Writes to a sibling temporary file and renames it over `path`, so readers
//! never observe a partial file.
inline void
write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out)
      throw Error(ErrorCode::IoError, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot rename onto '" + path.string() + "'");
  }
}

// ---------------------------------------------------------------------------
// Result file

struct ShapeCoefficient
{
  int l = 0;
  double re = 0.0;
  double im = 0.0;
};

struct CovarianceSection
{
  std::vector<std::string> labels;
  std::vector<std::string> blocks; // "theta", "a" or "upsilon" per label
  std::vector<double> matrix;      // row-major
};

struct IntervalSection
{
  double level = 0.95;
  bool degenerate = false;
  std::vector<Interval> intervals;
};

struct Diagnostics
{
  double objective = 0.0;
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
  std::string regime = "a0";
  double upsilon_max = 1e6;
  bool sigma_zero = false;
  bool amplitude_tie = false;
  bool hessian_positive_definite = false;
  std::vector<double> hessian_ratio;
  double inverse_residual = 0.0;
  std::uint64_t seed = 0;
};

struct ResultFile
{
  std::vector<std::string> curves;
  int n = 0;
  std::vector<double> theta;
  std::vector<double> a;
  std::vector<double> upsilon;
  double sigma = 0.0;
  int m = 0;
  std::vector<ShapeCoefficient> shape_coeffs;
  CovarianceSection covariance;
  IntervalSection ci;
  Diagnostics diagnostics;
  std::optional<double> period_days;
  std::vector<double> theta_days;
};

namespace detail {

inline json
number(double v)
{
  return std::isfinite(v) ? json(v) : json(nullptr);
}

inline double
as_double(const json& j)
{
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline json
numbers(const std::vector<double>& v)
{
  json arr = json::array();
  for (double x : v)
    arr.push_back(number(x));
  return arr;
}

inline std::vector<double>
as_doubles(const json& j)
{
  std::vector<double> out;
  for (const auto& x : j)
    out.push_back(as_double(x));
  return out;
}

inline std::vector<double>
to_std(const Eigen::VectorXd& v)
{
  return { v.data(), v.data() + v.size() };
}

inline json
matrix_rows(const Eigen::MatrixXd& m)
{
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      r.push_back(number(m(i, j)));
    rows.push_back(std::move(r));
  }
  return rows;
}

} // namespace detail

inline json
to_json(const ResultFile& r)
{
  json j;
  j["curves"] = r.curves;
  j["n"] = r.n;
  j["theta"] = detail::numbers(r.theta);
  j["a"] = detail::numbers(r.a);
  j["upsilon"] = detail::numbers(r.upsilon);
  j["sigma"] = detail::number(r.sigma);
  j["m"] = r.m;
  json sc = json::array();
  for (const auto& c : r.shape_coeffs)
    sc.push_back(json{ { "l", c.l }, { "re", detail::number(c.re) }, { "im", detail::number(c.im) } });
  j["shape_coeffs"] = std::move(sc);
  j["covariance"] = json{ { "labels", r.covariance.labels },
                          { "blocks", r.covariance.blocks },
                          { "row_major", detail::numbers(r.covariance.matrix) } };
  json ivs = json::array();
  for (const auto& iv : r.ci.intervals)
    ivs.push_back(json{ { "name", iv.name },
                        { "estimate", detail::number(iv.estimate) },
                        { "lower", detail::number(iv.lower) },
                        { "upper", detail::number(iv.upper) },
                        { "half_width", detail::number(iv.half_width) },
                        { "circular", iv.circular } });
  j["ci"] = json{ { "level", r.ci.level }, { "degenerate", r.ci.degenerate }, { "intervals", std::move(ivs) } };
  const Diagnostics& d = r.diagnostics;
  j["diagnostics"] = json{ { "objective", detail::number(d.objective) },
                           { "iterations", d.iterations },
                           { "restarts", d.restarts },
                           { "converged", d.converged },
                           { "regime", d.regime },
                           { "upsilon_max", detail::number(d.upsilon_max) },
                           { "sigma_zero", d.sigma_zero },
                           { "amplitude_tie", d.amplitude_tie },
                           { "hessian_positive_definite", d.hessian_positive_definite },
                           { "hessian_ratio", detail::numbers(d.hessian_ratio) },
                           { "inverse_residual", detail::number(d.inverse_residual) },
                           { "seed", d.seed } };
  if (r.period_days) {
    j["period_days"] = *r.period_days;
    j["theta_days"] = detail::numbers(r.theta_days);
  }
  return j;
}

inline ResultFile
result_from_json(const json& j)
{
  try {
    ResultFile r;
    r.curves = j.at("curves").get<std::vector<std::string>>();
    r.n = j.at("n").get<int>();
    r.theta = detail::as_doubles(j.at("theta"));
    r.a = detail::as_doubles(j.at("a"));
    r.upsilon = detail::as_doubles(j.at("upsilon"));
    r.sigma = detail::as_double(j.at("sigma"));
    r.m = j.at("m").get<int>();
    for (const auto& c : j.at("shape_coeffs"))
      r.shape_coeffs.push_back({ c.at("l").get<int>(), detail::as_double(c.at("re")), detail::as_double(c.at("im")) });
    const json& cov = j.at("covariance");
    r.covariance.labels = cov.at("labels").get<std::vector<std::string>>();
    r.covariance.blocks = cov.at("blocks").get<std::vector<std::string>>();
    r.covariance.matrix = detail::as_doubles(cov.at("row_major"));
    const json& ci = j.at("ci");
    r.ci.level = ci.at("level").get<double>();
    r.ci.degenerate = ci.at("degenerate").get<bool>();
    for (const auto& iv : ci.at("intervals")) {
      Interval x;
      x.name = iv.at("name").get<std::string>();
      x.estimate = detail::as_double(iv.at("estimate"));
      x.lower = detail::as_double(iv.at("lower"));
      x.upper = detail::as_double(iv.at("upper"));
      x.half_width = detail::as_double(iv.at("half_width"));
      x.circular = iv.at("circular").get<bool>();
      r.ci.intervals.push_back(x);
    }
    const json& d = j.at("diagnostics");
    r.diagnostics.objective = detail::as_double(d.at("objective"));
    r.diagnostics.iterations = d.at("iterations").get<int>();
    r.diagnostics.restarts = d.at("restarts").get<int>();
    r.diagnostics.converged = d.at("converged").get<bool>();
    r.diagnostics.regime = d.at("regime").get<std::string>();
    r.diagnostics.upsilon_max = detail::as_double(d.at("upsilon_max"));
    r.diagnostics.sigma_zero = d.at("sigma_zero").get<bool>();
    r.diagnostics.amplitude_tie = d.at("amplitude_tie").get<bool>();
    r.diagnostics.hessian_positive_definite = d.at("hessian_positive_definite").get<bool>();
    r.diagnostics.hessian_ratio = detail::as_doubles(d.at("hessian_ratio"));
    r.diagnostics.inverse_residual = detail::as_double(d.at("inverse_residual"));
    r.diagnostics.seed = d.at("seed").get<std::uint64_t>();
    if (j.contains("period_days")) {
      r.period_days = j.at("period_days").get<double>();
      r.theta_days = detail::as_doubles(j.at("theta_days"));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("result file: ") + e.what());
  }
}

inline std::string
emit(const ResultFile& r)
{
  return to_json(r).dump(2) + "\n";
}

inline ResultFile
parse_result(const std::string& text)
{
  try {
    return result_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

//! Assembles the result document of a fit.
inline ResultFile
make_result(const CurvePanel& panel,
            const FitResult& fit,
            const IntervalReport& ci,
            std::uint64_t seed,
            std::optional<double> period_days = std::nullopt)
{
  const ParameterSet& b = fit.beta_hat;
  ResultFile r;
  r.curves = panel.labels();
  r.n = fit.n;
  r.theta = detail::to_std(b.theta);
  r.a = detail::to_std(b.a);
  r.upsilon = detail::to_std(b.upsilon);
  r.sigma = fit.sigma_hat;
  r.m = fit.m;
  const ShapeSpectrum& s = fit.shape_hat;
  for (int l = -s.m(); l <= s.m(); ++l) {
    if (l == 0 && !s.has_level())
      continue;
    r.shape_coeffs.push_back({ l, s[l].real(), s[l].imag() });
  }
  r.covariance.labels = ci.labels;
  const int J = b.J();
  for (std::size_t k = 0; k < ci.labels.size(); ++k)
    r.covariance.blocks.push_back(k < std::size_t(J - 1) ? "theta" : (k < std::size_t(2 * (J - 1)) ? "a" : "upsilon"));
  for (Eigen::Index i = 0; i < ci.covariance.rows(); ++i)
    for (Eigen::Index k = 0; k < ci.covariance.cols(); ++k)
      r.covariance.matrix.push_back(ci.covariance(i, k));
  r.ci.level = ci.level;
  r.ci.degenerate = ci.degenerate;
  r.ci.intervals = ci.intervals;

  Diagnostics& d = r.diagnostics;
  d.objective = fit.objective;
  d.iterations = fit.iterations;
  d.restarts = fit.restarts;
  d.converged = fit.converged;
  d.regime = to_string(b.regime.kind);
  d.upsilon_max = b.regime.upsilon_max;
  d.sigma_zero = fit.sigma_zero;
  d.amplitude_tie = fit.amplitude_tie;
  d.hessian_positive_definite = fit.hessian_positive_definite;
  try {
    d.hessian_ratio = detail::to_std(hessian_ratio(fit));
  } catch (const Error&) {
    d.hessian_ratio.clear();
  }
  d.inverse_residual = ci.inverse_residual;
  d.seed = seed;
  if (period_days) {
    r.period_days = period_days;
    for (double t : r.theta)
      r.theta_days.push_back(t * *period_days / two_pi);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Study configuration and report

inline TrueShape
shape_from_json(const json& j)
{
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "quadratic_bump")
    return TrueShape::quadratic_bump(j.value("scale", 20.0));
  if (kind == "power_decay")
    return TrueShape::power_decay(j.at("decay").get<double>(), j.value("terms", 2000), j.value("scale", 1.0));
  if (kind == "spectrum") {
    int m = 0;
    for (const auto& c : j.at("coeffs"))
      m = std::max(m, std::abs(c.at("l").get<int>()));
    ShapeSpectrum s(m, true);
    for (const auto& c : j.at("coeffs"))
      s.set_pair(c.at("l").get<int>(), cplx(c.at("re").get<double>(), c.value("im", 0.0)));
    return TrueShape::from_spectrum(s);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown shape kind '" + kind + "'");
}

inline Eigen::VectorXd
vector_from_json(const json& j)
{
  std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline ConstraintRegime::Kind
regime_from_string(const std::string& s)
{
  if (s == "a0" || s == "A0")
    return ConstraintRegime::Kind::A0;
  if (s == "a1" || s == "A1")
    return ConstraintRegime::Kind::A1;
  throw Error(ErrorCode::ConfigInvalid, "regime must be a0 or a1 (got '" + s + "')");
}

inline FitConfig
fit_config_from_json(const json& j)
{
  FitConfig f;
  if (j.contains("m") && !(j["m"].is_string() && j["m"].get<std::string>() == "auto")) {
    f.band = BandRule::explicit_m(j["m"].get<int>());
  } else {
    bool up = j.value("m_round", std::string("floor")) == "ceil";
    f.band = BandRule::power_law(j.value("m_exponent", 0.25), up);
  }
  f.theta_grid_size = j.value("theta_grid_size", 0);
  f.n_multistart = j.value("n_multistart", 5);
  f.tol_objective = j.value("tol_objective", 1e-12);
  f.tol_param = j.value("tol_param", 1e-9);
  f.max_iters = j.value("max_iters", 500);
  return f;
}

inline StudyConfig
study_config_from_json(const json& j)
{
  try {
    StudyConfig c;
    const json& t = j.at("truth");
    c.truth = make_truth(vector_from_json(t.at("theta")), vector_from_json(t.at("a")),
                         vector_from_json(t.at("upsilon")), t.value("sigma", 1.0), shape_from_json(t.at("shape")),
                         t.value("upsilon_max", 1e6));
    c.n_list = j.at("n_list").get<std::vector<int>>();
    c.replicates = j.at("replicates").get<int>();
    c.base_seed = j.value("base_seed", std::uint64_t{ 0 });
    c.fit = fit_config_from_json(j.value("fit", json::object()));
    c.regimes.clear();
    for (const auto& r : j.value("regimes", json::array({ "a0" })))
      c.regimes.push_back(regime_from_string(r.get<std::string>()));
    c.threads = j.value("threads", 1);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid)
      throw;
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
}

inline json
to_json(const StudyCell& c)
{
  json j;
  j["n"] = c.n;
  j["m"] = c.m;
  j["regime"] = to_string(c.regime);
  j["labels"] = c.labels;
  j["truth"] = detail::numbers(detail::to_std(c.truth));
  j["replicates_used"] = static_cast<int>(c.used_replicates.size());
  j["failures"] = c.failures;
  j["valid"] = c.valid;
  if (c.used_replicates.empty())
    return j;
  j["mean_bias"] = detail::numbers(detail::to_std(c.mean_bias));
  j["empirical_cov"] = detail::matrix_rows(c.empirical_cov);
  j["theory_cov"] = detail::matrix_rows(c.theory_cov);
  j["ratio"] = detail::matrix_rows(c.ratio);
  j["empirical_corr"] = detail::matrix_rows(c.empirical_corr);
  j["block_rel_dev"] = json{ { "theta", detail::number(c.block_rel_dev[0]) },
                             { "a", detail::number(c.block_rel_dev[1]) },
                             { "upsilon", detail::number(c.block_rel_dev[2]) } };
  j["max_cross_block_corr"] = detail::number(c.max_cross_block_corr);
  j["mise"] = json{ { "total", detail::number(c.mise) },
                    { "estimation", detail::number(c.mise_estimation) },
                    { "truncation", detail::number(c.mise_truncation) } };
  json q = json::array();
  for (std::size_t k = 0; k < c.quantiles.size(); ++k) {
    const auto& s = c.quantiles[k];
    q.push_back(json{ { "name", c.labels[k] },
                      { "min", detail::number(s.min) },
                      { "q1", detail::number(s.q1) },
                      { "median", detail::number(s.median) },
                      { "q3", detail::number(s.q3) },
                      { "max", detail::number(s.max) } });
  }
  j["quantiles"] = std::move(q);
  j["estimates"] = detail::matrix_rows(c.estimates);
  return j;
}

inline json
to_json(const StudyReport& r)
{
  json j;
  j["base_seed"] = r.base_seed;
  j["replicates"] = r.replicates;
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back(to_json(c));
  j["cells"] = std::move(cells);
  return j;
}

} // namespace shapeinv::io
