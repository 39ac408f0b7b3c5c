#pragma once

// Study configuration (JSON) and the end-to-end pipeline: masks, fits,
// bootstrap covariance, radius, and the JSON report.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "robrad/covariance.hpp"
#include "robrad/dataset.hpp"
#include "robrad/io.hpp"
#include "robrad/radius.hpp"
#include "robrad/regress.hpp"
#include "robrad/sensitivity.hpp"
#include "robrad/specification.hpp"

namespace robrad {

inline constexpr const char* kToolName = "robrad";
inline constexpr const char* kToolVersion = "0.1.0";

struct StudyConfig {
  std::string data_path;  // resolved against the config file's directory
  std::optional<std::string> cluster_column;
  double alpha = 0.05;
  TestOptions test{};
  BootstrapConfig bootstrap{};
  std::vector<Specification> specifications;  // main first after parsing
  std::optional<std::string> output_path;
  std::optional<double> tau_bar;  // optional: report the bias bound at this τ̄
  io::Json source;                // config as read, echoed into the report

  std::vector<bool> must_equal() const {
    std::vector<bool> flags;
    for (std::size_t j = 1; j < specifications.size(); ++j) flags.push_back(specifications[j].must_equal_main);
    return flags;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& s : specifications) out.push_back(s.label);
    return out;
  }
};

namespace detail {

inline Specification parse_specification(const io::Json& j, std::size_t index) {
  const std::string where = "specifications[" + std::to_string(index) + "]";
  io::detail::check_keys(j, {"label", "outcome", "treatment", "controls", "weights", "filter", "main",
                             "must_equal_main"}, where);
  Specification s;
  s.label = io::detail::get_or<std::string>(j, "label", "spec" + std::to_string(index), where);
  s.outcome = io::detail::get_or<std::string>(j, "outcome", "", where);
  s.treatment = io::detail::get_or<std::string>(j, "treatment", "", where);
  s.controls = io::detail::get_or<std::vector<std::string>>(j, "controls", {}, where);
  if (j.contains("weights") && !j["weights"].is_null()) s.weights = io::detail::get_or<std::string>(j, "weights", "", where);
  s.row_filter = RowFilter::parse(io::detail::get_or<std::string>(j, "filter", "", where));
  s.is_main = io::detail::get_or<bool>(j, "main", false, where);
  s.must_equal_main = io::detail::get_or<bool>(j, "must_equal_main", false, where);
  return s;
}

}  // namespace detail

/// Parses a study configuration. `base_dir` anchors a relative data path.
inline StudyConfig parse_study_config(const io::Json& j, const std::filesystem::path& base_dir = {}) {
  const std::string where = "config";
  io::detail::check_keys(j, {"data", "cluster_column", "alpha", "variant", "df_convention", "bootstrap",
                             "specifications", "output", "tau_bar"}, where);
  StudyConfig c;
  c.source = j;
  const std::string data = io::detail::get_or<std::string>(j, "data", "", where);
  if (!data.empty()) {
    std::filesystem::path p(data);
    c.data_path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
  }
  if (j.contains("cluster_column") && !j["cluster_column"].is_null())
    c.cluster_column = io::detail::get_or<std::string>(j, "cluster_column", "", where);
  c.alpha = io::detail::get_or<double>(j, "alpha", 0.05, where);
  if (!(c.alpha > 0.0 && c.alpha <= 0.5)) throw ConfigError("alpha must lie in (0, 0.5]");
  c.test = io::detail::test_options(j, where);
  if (j.contains("tau_bar") && !j["tau_bar"].is_null()) c.tau_bar = io::detail::get_or<double>(j, "tau_bar", 0.0, where);

  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    io::detail::check_keys(b, {"replications", "seed", "trim_threshold", "mode"}, "bootstrap");
    c.bootstrap.replications = io::detail::get_or<int>(b, "replications", c.bootstrap.replications, "bootstrap");
    c.bootstrap.seed = io::detail::get_or<std::uint64_t>(b, "seed", c.bootstrap.seed, "bootstrap");
    if (b.contains("trim_threshold") && !(b["trim_threshold"].is_string() && b["trim_threshold"] == "auto")) {
      if (!b["trim_threshold"].is_number()) throw ConfigError("bootstrap: trim_threshold must be \"auto\" or a number");
      c.bootstrap.trim_threshold = b["trim_threshold"].get<double>();
    }
    const std::string mode = io::detail::get_or<std::string>(b, "mode", c.cluster_column ? "cluster" : "rows", "bootstrap");
    if (mode == "cluster") c.bootstrap.mode = ResampleMode::Cluster;
    else if (mode == "rows") c.bootstrap.mode = ResampleMode::IidRows;
    else throw ConfigError("bootstrap: mode must be rows or cluster");
  } else if (c.cluster_column) {
    c.bootstrap.mode = ResampleMode::Cluster;
  }
  c.bootstrap.cluster_column = c.cluster_column;

  if (!j.contains("specifications") || !j["specifications"].is_array())
    throw ConfigError("config: 'specifications' must be an array");
  std::vector<Specification> specs;
  for (std::size_t i = 0; i < j["specifications"].size(); ++i)
    specs.push_back(detail::parse_specification(j["specifications"][i], i));
  c.specifications = order_study(std::move(specs));
  std::set<std::string> seen;
  for (const auto& s : c.specifications)
    if (!seen.insert(s.label).second) throw ConfigError("duplicate specification label '" + s.label + "'");
  if (j.contains("output") && !j["output"].is_null()) c.output_path = io::detail::get_or<std::string>(j, "output", "", where);
  c.bootstrap.validate();
  return c;
}

inline StudyConfig load_study_config(const std::string& path) {
  return parse_study_config(io::read_json(path), std::filesystem::path(path).parent_path());
}

/// Everything the pipeline computes, kept for the report and for callers.
struct StudyResult {
  EstimateBundle bundle;
  std::vector<SubsampleShare> shares;
  CovarianceEstimate covariance;
  RadiusReport radius;
  std::optional<SensitivityInputs> sensitivity;
  double tau_hat = 0.0;
};

inline StudyResult run_study(const StudyConfig& config, const Dataset& data) {
  StudyResult r;
  StudyFit sf = fit_study(data, config.specifications);
  r.bundle = stack_estimates(sf.fits, sf.masks, config.labels());
  for (const auto& m : sf.masks) r.shares.push_back(subsample_share(m, data.row_count()));
  r.covariance = bootstrap_cov(data, config.specifications, config.bootstrap);
  r.bundle.cov = r.covariance.matrix;

  RadiusOptions opts;
  opts.alpha = config.alpha;
  opts.test = config.test;
  opts.must_equal = config.must_equal();
  r.radius = robustness_radius(r.bundle, opts);
  if (r.radius.finite) {
    r.sensitivity = sensitivity_inputs(sf.fits.front(), r.radius.b_rr);
    r.tau_hat = tau_from_radius(*r.sensitivity);
  }
  return r;
}

inline Dataset load_study_data(const StudyConfig& config) {
  if (config.data_path.empty()) throw ConfigError("config: 'data' is required");
  return read_csv(config.data_path, config.cluster_column);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Header shared by every report. `generated_at` is the only field that
/// changes between identical runs.
inline io::Json report_header(const char* command) {
  io::Json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command;
  j["generated_at"] = utc_timestamp();
  return j;
}

inline io::Json sensitivity_json(const SensitivityInputs& in, double tau_hat, std::optional<double> tau_bar) {
  io::Json j;
  j["b_rr"] = io::number(in.b_rr);
  j["var_ratio"] = io::number(in.var_ratio);
  j["r2_dx"] = io::number(in.r2_dx);
  j["tau_hat"] = io::number(tau_hat);
  if (tau_bar) {
    j["tau_bar"] = *tau_bar;
    j["bias_bound"] = io::number(bias_from_tau(*tau_bar, in));
  }
  return j;
}

inline io::Json study_report(const StudyConfig& config, const StudyResult& r, bool include_trace) {
  io::Json j = report_header("radius");
  j["config"] = config.source;
  j["seed"] = config.bootstrap.seed;
  io::Json est = io::Json::array();
  for (std::size_t k = 0; k < r.bundle.labels.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    io::Json e;
    e["label"] = r.bundle.labels[k];
    e["theta"] = io::number(r.bundle.theta[i]);
    e["se"] = io::number(std::sqrt(std::max(0.0, r.bundle.cov(i, i))));
    e["se_conventional"] = io::number(r.bundle.se_conventional[k]);
    e["n"] = r.bundle.n_per_spec[k];
    e["share"] = r.shares[k].share;
    e["warning"] = r.shares[k].below_floor ? io::Json("subsample share below 5% of the data") : io::Json(nullptr);
    est.push_back(e);
  }
  j["estimates"] = est;
  j["covariance"] = io::to_json(r.covariance, r.bundle.labels);
  j["radius"] = io::to_json(r.radius, include_trace);
  j["lu_white"] = io::to_json(r.radius.lw_test);
  j["sensitivity"] = r.sensitivity ? sensitivity_json(*r.sensitivity, r.tau_hat, config.tau_bar) : io::Json(nullptr);
  return j;
}

}  // namespace robrad
