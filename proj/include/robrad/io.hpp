#pragma once

// File formats: estimate and covariance CSVs (shortest round-trip doubles,
// so a written file reads back bit-identically) and JSON views of results.

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "robrad/covariance.hpp"
#include "robrad/cstest.hpp"
#include "robrad/dataset.hpp"
#include "robrad/error.hpp"
#include "robrad/radius.hpp"
#include "robrad/simlab.hpp"

namespace robrad::io {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// JSON number, or null for non-finite values.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline Json read_json(const std::string& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------- CSV

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += csv_field(cells[i]);
  }
  return line + "\n";
}

inline double parse_cell(const std::string& cell, const std::string& path) {
  if (auto v = parse_number(cell)) return *v;
  throw ConfigError("'" + path + "': '" + cell + "' is not a number");
}

}  // namespace detail

struct LabeledVector {
  std::vector<std::string> labels;
  Eigen::VectorXd values;
};

struct LabeledMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
};

/// Estimates CSV: a header row of labels and one row of values.
inline std::string estimates_csv(const std::vector<std::string>& labels, const Eigen::VectorXd& theta) {
  std::vector<std::string> values;
  for (Eigen::Index i = 0; i < theta.size(); ++i) values.push_back(format_double(theta[i]));
  return detail::csv_row(labels) + detail::csv_row(values);
}

/// Covariance CSV: a header row of labels and the square matrix below it.
inline std::string matrix_csv(const std::vector<std::string>& labels, const Eigen::MatrixXd& m) {
  std::string out = detail::csv_row(labels);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
    out += detail::csv_row(row);
  }
  return out;
}

inline LabeledVector read_estimates_csv(const std::string& path) {
  auto records = csv::parse_records(read_text(path));
  if (records.size() != 2) throw ConfigError("'" + path + "': expected a header row and one row of estimates");
  if (records[0].size() != records[1].size()) throw ConfigError("'" + path + "': header and values differ in length");
  if (records[0].size() < 2) throw ConfigError("'" + path + "': need a main estimate and at least one check");
  LabeledVector out;
  out.labels = records[0];
  out.values.resize(static_cast<Eigen::Index>(records[1].size()));
  for (std::size_t j = 0; j < records[1].size(); ++j)
    out.values[static_cast<Eigen::Index>(j)] = detail::parse_cell(records[1][j], path);
  return out;
}

inline LabeledMatrix read_matrix_csv(const std::string& path) {
  auto records = csv::parse_records(read_text(path));
  if (records.empty()) throw ConfigError("'" + path + "': empty covariance file");
  const std::size_t k = records[0].size();
  if (records.size() != k + 1) throw ConfigError("'" + path + "': covariance must be square with a header row of labels");
  LabeledMatrix out;
  out.labels = records[0];
  out.values.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (records[i + 1].size() != k) throw ConfigError("'" + path + "': row " + std::to_string(i + 1) + " has the wrong length");
    for (std::size_t j = 0; j < k; ++j)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = detail::parse_cell(records[i + 1][j], path);
  }
  return out;
}

inline std::string trace_csv(const std::vector<TraceEntry>& trace) {
  std::string out = "b,statistic,r_hat,critical_value,reject\n";
  for (const auto& t : trace)
    out += format_double(t.b) + "," + format_double(t.statistic) + "," + std::to_string(t.r_hat) + "," +
           format_double(t.critical_value) + "," + (t.reject ? "1" : "0") + "\n";
  return out;
}

inline std::string histogram_csv(const sim::Histogram& h) {
  std::string out = "bin_lower,bin_upper,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    out += format_double(h.edges[k]) + "," + format_double(h.edges[k + 1]) + "," + std::to_string(h.counts[k]) + "\n";
  return out;
}

inline std::string curve_csv(const std::vector<sim::CurvePoint>& pts) {
  std::string out = "m,rho,structure,dgp,mean_b_rr,prob_zero_radius\n";
  for (const auto& p : pts)
    out += std::to_string(p.m) + "," + format_double(p.rho) + "," + p.structure + "," + sim::to_string(p.dgp) + "," +
           format_double(p.mean_b_rr) + "," + format_double(p.prob_zero_radius) + "\n";
  return out;
}

inline std::string table1_csv(const std::vector<double>& rhos, const std::vector<double>& b) {
  std::string out = "rho,b_rr\n";
  for (std::size_t i = 0; i < rhos.size(); ++i) out += format_double(rhos[i]) + "," + format_double(b[i]) + "\n";
  return out;
}

// ---------------------------------------------------------------- JSON views

inline Variant parse_variant(const std::string& s) {
  if (s == "cc" || s == "CC") return Variant::CC;
  if (s == "rcc" || s == "RCC") return Variant::RCC;
  throw ConfigError("variant must be cc or rcc, got '" + s + "'");
}

inline DfConvention parse_df(const std::string& s) {
  if (s == "rank") return DfConvention::Rank;
  if (s == "rows") return DfConvention::RowCount;
  throw ConfigError("df_convention must be rank or rows, got '" + s + "'");
}

inline Json to_json(const TestOutcome& t) {
  Json j;
  j["statistic"] = number(t.statistic);
  j["critical_value"] = number(t.critical_value);
  j["reject"] = t.reject;
  j["r_hat"] = t.r_hat;
  j["r_hat_rows"] = t.r_hat_rows;
  j["r_hat_rank"] = t.r_hat_rank;
  j["variant"] = to_string(t.variant);
  j["df_convention"] = to_string(t.df_convention);
  j["active_rows"] = t.active_rows;
  j["minimizer"] = vector_json(t.minimizer);
  j["rcc_tau"] = t.rcc_tau ? number(*t.rcc_tau) : Json(nullptr);
  j["rcc_level"] = t.rcc_level ? number(*t.rcc_level) : Json(nullptr);
  return j;
}

inline Json to_json(const RadiusReport& r, bool include_trace) {
  Json j;
  j["b_rr"] = number(r.b_rr);
  j["finite"] = r.finite;
  j["alpha"] = r.alpha;
  j["variant"] = to_string(r.variant);
  j["df_convention"] = to_string(r.df_convention);
  j["max_distance"] = number(r.max_distance);
  j["search_upper"] = number(r.search_upper);
  j["tol"] = number(r.tol);
  j["fully_robust"] = r.fully_robust;
  j["sign_robust"] = r.sign_robust;
  j["non_monotone"] = r.non_monotone;
  j["per_check_distance"] = r.per_check_distance;
  if (include_trace) {
    Json tr = Json::array();
    for (const auto& t : r.search_trace)
      tr.push_back({{"b", number(t.b)}, {"statistic", number(t.statistic)}, {"r_hat", t.r_hat},
                    {"critical_value", number(t.critical_value)}, {"reject", t.reject}});
    j["search_trace"] = tr;
  }
  return j;
}

inline Json to_json(const CovarianceEstimate& c, const std::vector<std::string>& labels) {
  Json j;
  j["labels"] = labels;
  j["matrix"] = matrix_json(c.matrix);
  j["n_trimmed"] = c.n_trimmed;
  j["n_redrawn"] = c.n_redrawn;
  j["trim_threshold"] = number(c.trim_threshold);
  return j;
}

inline Json to_json(const sim::SimSummary& s) {
  Json j;
  j["prob_zero_radius"] = s.prob_zero_radius;
  j["mean_b_rr"] = number(s.mean_b_rr);
  j["infinite"] = s.infinite;
  j["histogram"] = {{"edges", s.histogram.edges}, {"counts", s.histogram.counts}};
  if (!s.per_rep_b_rr.empty()) {
    Json a = Json::array();
    for (double b : s.per_rep_b_rr) a.push_back(number(b));
    j["per_rep_b_rr"] = a;
  }
  return j;
}

inline Json to_json(const std::vector<sim::CurvePoint>& pts) {
  Json a = Json::array();
  for (const auto& p : pts) {
    Json j;
    j["m"] = p.m;
    j["rho"] = p.rho;
    if (!p.structure.empty()) j["structure"] = p.structure;
    j["dgp"] = sim::to_string(p.dgp);
    j["mean_b_rr"] = number(p.mean_b_rr);
    j["prob_zero_radius"] = p.prob_zero_radius;
    a.push_back(j);
  }
  return a;
}

// ---------------------------------------------------------------- JSON input

namespace detail {

/// Rejects keys outside `allowed` so typos in configs surface as errors.
inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
T get_or(const Json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": '" + key + "' has the wrong type");
  }
}

inline Eigen::VectorXd vector_from(const Json& a, const std::string& where) {
  if (!a.is_array()) throw ConfigError(where + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ConfigError(where + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline sim::Dgp parse_dgp(const std::string& s) {
  if (s == "exact-normal" || s == "normal") return sim::Dgp::ExactNormal;
  if (s == "student-t") return sim::Dgp::StudentT;
  if (s == "mixed-normal") return sim::Dgp::MixedNormal;
  throw ConfigError("dgp must be exact-normal, student-t or mixed-normal, got '" + s + "'");
}

inline TestOptions test_options(const Json& j, const std::string& where) {
  TestOptions t;
  t.variant = parse_variant(get_or<std::string>(j, "variant", "rcc", where));
  t.df = parse_df(get_or<std::string>(j, "df_convention", "rank", where));
  return t;
}

}  // namespace detail

/// A simulation request: one scenario, the two-estimator table, a
/// mean-radius curve over (m, ρ), or a named-structure sweep over DGPs.
struct SimulationRequest {
  enum class Kind { Scenario, Table1, Curve, Sweep } kind = Kind::Scenario;
  sim::Scenario scenario;
  std::vector<double> rho_grid;
  double alpha = 0.05;
  TestOptions test{Variant::RCC, DfConvention::Rank};
  sim::CurveConfig curve;
  sim::SweepConfig sweep;
};

inline sim::Correlation parse_correlation(const Json& c, int m) {
  if (c.is_number()) return sim::Correlation::equi(c.get<double>());
  if (c.is_string()) {
    sim::Correlation::named_rho(c.get<std::string>(), std::max(m, 1));  // validates the name
    return sim::Correlation::named(c.get<std::string>());
  }
  if (c.is_array()) {
    const auto k = static_cast<Eigen::Index>(c.size());
    Eigen::MatrixXd mat(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      Eigen::VectorXd row = detail::vector_from(c[static_cast<std::size_t>(i)], "correlation row");
      if (row.size() != k) throw ConfigError("correlation matrix must be square");
      mat.row(i) = row.transpose();
    }
    return sim::Correlation::explicit_matrix(mat);
  }
  throw ConfigError("correlation must be a number, a structure name or a matrix");
}

inline SimulationRequest parse_simulation(const Json& j) {
  const std::string where = "scenario";
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  SimulationRequest req;
  const std::string kind = detail::get_or<std::string>(j, "kind", "scenario", where);
  if (kind == "table1") {
    detail::check_keys(j, {"kind", "rho_grid", "alpha", "variant", "df_convention"}, where);
    req.kind = SimulationRequest::Kind::Table1;
    req.rho_grid = sim::default_table1_rhos();
    if (j.contains("rho_grid")) {
      Eigen::VectorXd g = detail::vector_from(j["rho_grid"], "rho_grid");
      req.rho_grid.assign(g.data(), g.data() + g.size());
    }
    req.alpha = detail::get_or<double>(j, "alpha", 0.05, where);
    if (!(req.alpha > 0.0 && req.alpha <= 0.5)) throw ConfigError("alpha must lie in (0, 0.5]");
    req.test = detail::test_options(j, where);
    for (double r : req.rho_grid)
      if (!(r > -1.0 && r < 1.0)) throw ConfigError("rho_grid values must lie in (-1, 1)");
    return req;
  }
  if (kind == "curve") {
    detail::check_keys(j, {"kind", "m_values", "rho_grid", "max_distance", "reps", "alpha", "seed", "variant",
                           "df_convention"}, where);
    req.kind = SimulationRequest::Kind::Curve;
    auto& c = req.curve;
    c.m_values = detail::get_or<std::vector<int>>(j, "m_values", c.m_values, where);
    c.rho_grid = detail::get_or<std::vector<double>>(j, "rho_grid", c.rho_grid, where);
    c.max_distance = detail::get_or<double>(j, "max_distance", c.max_distance, where);
    c.reps = detail::get_or<int>(j, "reps", c.reps, where);
    c.alpha = detail::get_or<double>(j, "alpha", c.alpha, where);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed, where);
    c.test = detail::test_options(j, where);
    if (c.reps < 1) throw ConfigError("scenario: reps must be at least 1");
    return req;
  }
  if (kind == "sweep") {
    detail::check_keys(j, {"kind", "m_values", "structures", "dgps", "max_distance", "n", "reps", "alpha", "seed",
                           "variant", "df_convention"}, where);
    req.kind = SimulationRequest::Kind::Sweep;
    auto& s = req.sweep;
    s.m_values = detail::get_or<std::vector<int>>(j, "m_values", s.m_values, where);
    s.structures = detail::get_or<std::vector<std::string>>(j, "structures", s.structures, where);
    if (j.contains("dgps")) {
      s.dgps.clear();
      for (const auto& d : detail::get_or<std::vector<std::string>>(j, "dgps", {}, where))
        s.dgps.push_back(detail::parse_dgp(d));
    }
    s.max_distance = detail::get_or<double>(j, "max_distance", s.max_distance, where);
    s.n = detail::get_or<int>(j, "n", s.n, where);
    s.reps = detail::get_or<int>(j, "reps", s.reps, where);
    s.alpha = detail::get_or<double>(j, "alpha", s.alpha, where);
    s.seed = detail::get_or<std::uint64_t>(j, "seed", s.seed, where);
    s.test = detail::test_options(j, where);
    if (s.reps < 1) throw ConfigError("scenario: reps must be at least 1");
    return req;
  }
  if (kind != "scenario") throw ConfigError("scenario kind must be scenario, table1, curve or sweep");

  detail::check_keys(j, {"kind", "m", "theta_true", "sigma", "correlation", "dgp", "n", "reps", "alpha", "seed",
                         "variant", "df_convention", "t_df", "histogram_bins", "keep_draws"}, where);
  sim::Scenario& s = req.scenario;
  s.theta_true = detail::vector_from(j.value("theta_true", Json::array({0.0, 1.5})), "theta_true");
  s.m = detail::get_or<int>(j, "m", static_cast<int>(s.theta_true.size()) - 1, where);
  s.sigma = j.contains("sigma") ? detail::vector_from(j["sigma"], "sigma") : Eigen::VectorXd::Ones(s.m + 1);
  if (j.contains("correlation")) s.corr = parse_correlation(j["correlation"], s.m);
  s.dgp = detail::parse_dgp(detail::get_or<std::string>(j, "dgp", "exact-normal", where));
  s.n = detail::get_or<int>(j, "n", s.n, where);
  s.reps = detail::get_or<int>(j, "reps", s.reps, where);
  s.alpha = detail::get_or<double>(j, "alpha", s.alpha, where);
  s.seed = detail::get_or<std::uint64_t>(j, "seed", s.seed, where);
  s.test = detail::test_options(j, where);
  s.t_df = detail::get_or<double>(j, "t_df", s.t_df, where);
  s.histogram_bins = detail::get_or<int>(j, "histogram_bins", s.histogram_bins, where);
  s.keep_draws = detail::get_or<bool>(j, "keep_draws", false, where);
  s.validate();
  return req;
}

}  // namespace robrad::io
