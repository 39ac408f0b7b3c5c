// robrad: command-line front end.
//
//   robrad radius --config study.json [--out report.json] [--trace]
//   robrad radius --precomputed --estimates est.csv --cov cov.csv
//   robrad test --estimates est.csv --cov cov.csv --b 0.5
//   robrad simulate --config scenario.json [--out sim.json]
//   robrad sensitivity --report report.json [--tau-bar 0.1]
//   robrad bootstrap-cov --config study.json [--out cov.json]
//
// Exit codes: 0 success, 2 configuration errors, 3 estimation errors.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "robrad/study.hpp"

namespace fs = std::filesystem;
using robrad::io::Json;

namespace {

struct Options {
  std::string config, data, out, estimates, cov, report, must_equal, draws;
  std::optional<double> alpha, b, b_rr, var_ratio, r2_dx, tau_bar;
  std::optional<std::string> variant, df_convention;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool precomputed = false, trace = false;
};

std::string sibling(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  return (p.parent_path() / p.stem()).string() + suffix;
}

void emit(const Json& j, const Options& o) {
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) std::cout << text;
  else robrad::io::write_text(o.out, text);
}

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void apply_overrides(robrad::StudyConfig& c, const Options& o) {
  if (!o.data.empty()) c.data_path = o.data;
  if (o.alpha) {
    if (!(*o.alpha > 0.0 && *o.alpha <= 0.5)) throw robrad::ConfigError("alpha must lie in (0, 0.5]");
    c.alpha = *o.alpha;
  }
  if (o.variant) c.test.variant = robrad::io::parse_variant(*o.variant);
  if (o.df_convention) c.test.df = robrad::io::parse_df(*o.df_convention);
  if (o.seed) c.bootstrap.seed = *o.seed;
  c.bootstrap.threads = o.threads;
}

robrad::TestOptions test_options(const Options& o) {
  robrad::TestOptions t;
  if (o.variant) t.variant = robrad::io::parse_variant(*o.variant);
  if (o.df_convention) t.df = robrad::io::parse_df(*o.df_convention);
  return t;
}

double alpha_or_default(const Options& o) {
  const double a = o.alpha.value_or(0.05);
  if (!(a > 0.0 && a <= 0.5)) throw robrad::ConfigError("alpha must lie in (0, 0.5]");
  return a;
}

/// Estimates and covariance CSVs with matching labels.
struct Precomputed {
  robrad::io::LabeledVector est;
  Eigen::MatrixXd cov;
  std::vector<bool> must_equal;
};

Precomputed load_precomputed(const Options& o) {
  if (o.estimates.empty() || o.cov.empty()) throw robrad::ConfigError("--estimates and --cov are required");
  Precomputed p;
  p.est = robrad::io::read_estimates_csv(o.estimates);
  auto cov = robrad::io::read_matrix_csv(o.cov);
  if (cov.labels != p.est.labels) throw robrad::ConfigError("estimate and covariance labels differ");
  p.cov = cov.values;
  p.must_equal.assign(p.est.labels.size() - 1, false);
  for (const auto& name : split_labels(o.must_equal)) {
    auto it = std::find(p.est.labels.begin() + 1, p.est.labels.end(), name);
    if (it == p.est.labels.end()) throw robrad::ConfigError("--must-equal: '" + name + "' is not a check label");
    p.must_equal[static_cast<std::size_t>(it - p.est.labels.begin() - 1)] = true;
  }
  return p;
}

void write_trace(const robrad::RadiusReport& r, const Options& o) {
  if (o.trace && !o.out.empty()) robrad::io::write_text(sibling(o.out, ".trace.csv"), robrad::io::trace_csv(r.search_trace));
}

int cmd_radius(const Options& o) {
  if (o.precomputed) {
    Precomputed p = load_precomputed(o);
    robrad::RadiusOptions opts;
    opts.alpha = alpha_or_default(o);
    opts.test = test_options(o);
    opts.must_equal = p.must_equal;
    robrad::RadiusReport r = robrad::robustness_radius(p.est.values, robrad::InequalityTester(p.cov), opts);
    Json j = robrad::report_header("radius");
    j["labels"] = p.est.labels;
    j["theta"] = robrad::io::vector_json(p.est.values);
    j["radius"] = robrad::io::to_json(r, o.trace);
    j["lu_white"] = robrad::io::to_json(r.lw_test);
    emit(j, o);
    write_trace(r, o);
    return 0;
  }
  if (o.config.empty()) throw robrad::ConfigError("--config is required (or use --precomputed)");
  robrad::StudyConfig c = robrad::load_study_config(o.config);
  apply_overrides(c, o);
  const robrad::Dataset data = robrad::load_study_data(c);
  robrad::StudyResult r = robrad::run_study(c, data);
  Options out = o;
  if (out.out.empty() && c.output_path) out.out = *c.output_path;
  emit(robrad::study_report(c, r, o.trace), out);
  if (!out.out.empty()) {
    robrad::io::write_text(sibling(out.out, ".estimates.csv"), robrad::io::estimates_csv(r.bundle.labels, r.bundle.theta));
    robrad::io::write_text(sibling(out.out, ".cov.csv"), robrad::io::matrix_csv(r.bundle.labels, r.bundle.cov));
  }
  write_trace(r.radius, out);
  return 0;
}

int cmd_test(const Options& o) {
  if (!o.b) throw robrad::ConfigError("--b is required");
  if (!(*o.b >= 0.0)) throw robrad::ConfigError("--b must be nonnegative");
  Precomputed p = load_precomputed(o);
  const int m = static_cast<int>(p.est.values.size()) - 1;
  const auto sys = robrad::build_system(m, *o.b, p.must_equal);
  robrad::TestOutcome t = robrad::InequalityTester(p.cov).test(p.est.values, sys, alpha_or_default(o), test_options(o));
  Json j = robrad::report_header("test");
  j["labels"] = p.est.labels;
  j["b"] = *o.b;
  j["alpha"] = alpha_or_default(o);
  j["test"] = robrad::io::to_json(t);
  emit(j, o);
  return 0;
}

int cmd_simulate(const Options& o) {
  if (o.config.empty()) throw robrad::ConfigError("--config (scenario file) is required");
  robrad::io::SimulationRequest req = robrad::io::parse_simulation(robrad::io::read_json(o.config));
  using Kind = robrad::io::SimulationRequest::Kind;
  Json j = robrad::report_header("simulate");
  j["scenario"] = robrad::io::read_json(o.config);
  // Labeled tool defaults for inputs the method leaves open.
  j["defaults"] = {{"named_correlation", "equicorrelation -1/(2m), 0, 0.5 for negative, neutral, positive"},
                   {"student_t_df", 5},
                   {"mixed_normal", "0.5 N(0,0.25) + 0.5 N(0,1.75)"}};
  std::string csv;
  switch (req.kind) {
    case Kind::Table1: {
      auto b = robrad::sim::table1(req.rho_grid, req.alpha, req.test);
      Json rows = Json::array();
      for (std::size_t i = 0; i < b.size(); ++i) rows.push_back({{"rho", req.rho_grid[i]}, {"b_rr", b[i]}});
      j["table1"] = rows;
      csv = robrad::io::table1_csv(req.rho_grid, b);
      break;
    }
    case Kind::Scenario: {
      if (o.seed) req.scenario.seed = *o.seed;
      req.scenario.threads = o.threads;
      j["seed"] = req.scenario.seed;
      auto s = robrad::sim::run_scenario(req.scenario);
      j["summary"] = robrad::io::to_json(s);
      csv = robrad::io::histogram_csv(s.histogram);
      break;
    }
    case Kind::Curve: {
      if (o.seed) req.curve.seed = *o.seed;
      req.curve.threads = o.threads;
      j["seed"] = req.curve.seed;
      auto pts = robrad::sim::mean_radius_curve(req.curve);
      j["curve"] = robrad::io::to_json(pts);
      csv = robrad::io::curve_csv(pts);
      break;
    }
    case Kind::Sweep: {
      if (o.seed) req.sweep.seed = *o.seed;
      req.sweep.threads = o.threads;
      j["seed"] = req.sweep.seed;
      auto pts = robrad::sim::structure_sweep(req.sweep);
      j["curve"] = robrad::io::to_json(pts);
      csv = robrad::io::curve_csv(pts);
      break;
    }
  }
  emit(j, o);
  if (!o.out.empty()) robrad::io::write_text(sibling(o.out, ".csv"), csv);
  return 0;
}

int cmd_sensitivity(const Options& o) {
  robrad::SensitivityInputs in;
  std::optional<double> tau_bar = o.tau_bar;
  if (!o.report.empty()) {
    Json rep = robrad::io::read_json(o.report);
    if (!rep.contains("sensitivity") || rep["sensitivity"].is_null())
      throw robrad::ConfigError("report has no sensitivity block (no finite radius)");
    const Json& s = rep["sensitivity"];
    in = {s.at("b_rr").get<double>(), s.at("var_ratio").get<double>(), s.at("r2_dx").get<double>()};
  } else {
    if (!o.var_ratio || !o.r2_dx) throw robrad::ConfigError("give --report, or --var-ratio and --r2-dx");
    in.var_ratio = *o.var_ratio;
    in.r2_dx = *o.r2_dx;
    in.b_rr = o.b_rr.value_or(0.0);
    if (!o.b_rr && !tau_bar) throw robrad::ConfigError("give --b-rr and/or --tau-bar");
  }
  Json j = robrad::report_header("sensitivity");
  if (!o.report.empty() || o.b_rr) {
    j["sensitivity"] = robrad::sensitivity_json(in, robrad::tau_from_radius(in), tau_bar);
  } else {
    in.validate(false);
    j["sensitivity"] = {{"var_ratio", in.var_ratio}, {"r2_dx", in.r2_dx}, {"tau_bar", *tau_bar},
                        {"bias_bound", robrad::io::number(robrad::bias_from_tau(*tau_bar, in))}};
  }
  emit(j, o);
  return 0;
}

int cmd_bootstrap_cov(const Options& o) {
  if (o.config.empty()) throw robrad::ConfigError("--config is required");
  robrad::StudyConfig c = robrad::load_study_config(o.config);
  apply_overrides(c, o);
  const robrad::Dataset data = robrad::load_study_data(c);
  robrad::CovarianceEstimate cov = robrad::bootstrap_cov(data, c.specifications, c.bootstrap);
  Json j = robrad::report_header("bootstrap-cov");
  j["seed"] = c.bootstrap.seed;
  j["replications"] = c.bootstrap.replications;
  j["covariance"] = robrad::io::to_json(cov, c.labels());
  emit(j, o);
  if (!o.out.empty()) robrad::io::write_text(sibling(o.out, ".cov.csv"), robrad::io::matrix_csv(c.labels(), cov.matrix));
  if (!o.draws.empty()) robrad::io::write_text(o.draws, robrad::io::matrix_csv(c.labels(), cov.replicate_draws));
  return 0;
}

void add_test_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--alpha", o.alpha, "Test level in (0, 0.5]");
  cmd->add_option("--variant", o.variant, "cc or rcc (default rcc)");
  cmd->add_option("--df-convention", o.df_convention, "rank or rows (default rank)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness radius for regression specification checks"};
  app.require_subcommand(1);
  Options o;

  auto* radius = app.add_subcommand("radius", "Estimate the robustness radius of a study");
  radius->add_option("--config", o.config, "Study configuration JSON");
  radius->add_option("--data", o.data, "Data CSV (overrides the config)");
  radius->add_option("--seed", o.seed, "Bootstrap seed (overrides the config)");
  radius->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  radius->add_option("--out", o.out, "Report JSON path (default stdout)");
  radius->add_flag("--trace", o.trace, "Include the search trace (and write <out>.trace.csv)");
  radius->add_flag("--precomputed", o.precomputed, "Use --estimates/--cov instead of data");
  radius->add_option("--estimates", o.estimates, "Estimates CSV (header of labels, one row)");
  radius->add_option("--cov", o.cov, "Covariance CSV (header of labels, square matrix)");
  radius->add_option("--must-equal", o.must_equal, "Comma-separated check labels pinned to the main estimand");
  add_test_flags(radius, o);

  auto* test = app.add_subcommand("test", "Run the inequality test at one b");
  test->add_option("--estimates", o.estimates, "Estimates CSV")->required();
  test->add_option("--cov", o.cov, "Covariance CSV")->required();
  test->add_option("--b", o.b, "Bound b >= 0")->required();
  test->add_option("--must-equal", o.must_equal, "Comma-separated check labels pinned to the main estimand");
  test->add_option("--out", o.out, "Output JSON path (default stdout)");
  add_test_flags(test, o);

  auto* simulate = app.add_subcommand("simulate", "Run a simulation scenario");
  simulate->add_option("--config", o.config, "Scenario JSON")->required();
  simulate->add_option("--seed", o.seed, "Seed (overrides the scenario)");
  simulate->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  simulate->add_option("--out", o.out, "Summary JSON path; plot data goes to <out stem>.csv");

  auto* sens = app.add_subcommand("sensitivity", "Map a radius to the selection-on-unobservables scale");
  sens->add_option("--report", o.report, "Report JSON from `radius`");
  sens->add_option("--b-rr", o.b_rr, "Robustness radius");
  sens->add_option("--var-ratio", o.var_ratio, "var(treatment residual) / var(outcome residual)");
  sens->add_option("--r2-dx", o.r2_dx, "R^2 of treatment on controls");
  sens->add_option("--tau-bar", o.tau_bar, "Also report the bias bound at this level");
  sens->add_option("--out", o.out, "Output JSON path (default stdout)");

  auto* boot = app.add_subcommand("bootstrap-cov", "Bootstrap covariance of the stacked estimates");
  boot->add_option("--config", o.config, "Study configuration JSON")->required();
  boot->add_option("--data", o.data, "Data CSV (overrides the config)");
  boot->add_option("--seed", o.seed, "Bootstrap seed (overrides the config)");
  boot->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  boot->add_option("--out", o.out, "Output JSON path; also writes <out stem>.cov.csv");
  boot->add_option("--draws", o.draws, "Write the pre-trim replicate draws to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*radius) return cmd_radius(o);
    if (*test) return cmd_test(o);
    if (*simulate) return cmd_simulate(o);
    if (*sens) return cmd_sensitivity(o);
    if (*boot) return cmd_bootstrap_cov(o);
  } catch (const robrad::ConfigError& e) {
    std::cerr << "robrad: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const robrad::EstimationError& e) {
    std::cerr << "robrad: estimation error: " << e.what() << "\n";
    return 3;
  } catch (const Json::exception& e) {
    std::cerr << "robrad: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "robrad: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
