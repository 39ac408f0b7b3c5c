#pragma once

// Robustness radius: the smallest b at which "every check lies within b of
// the main estimand" is not rejected.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "robrad/cstest.hpp"
#include "robrad/error.hpp"
#include "robrad/regress.hpp"

namespace robrad {

struct RadiusOptions {
  double alpha = 0.05;
  TestOptions test{};
  std::vector<bool> must_equal;  // one flag per check; empty = none
  std::optional<double> tol;     // default 1e-6 * (1 + max distance)
  int audit_points = 64;
};

struct TraceEntry {
  double b = 0.0;
  double statistic = 0.0;
  int r_hat = 0;
  double critical_value = 0.0;
  bool reject = false;
};

struct RadiusReport {
  double b_rr = 0.0;        // +inf when no finite radius exists
  bool finite = true;
  double alpha = 0.05;
  Variant variant = Variant::RCC;
  DfConvention df_convention = DfConvention::Rank;
  double max_distance = 0.0;
  double search_upper = 0.0;
  double tol = 0.0;
  bool fully_robust = false;
  bool sign_robust = false;
  bool non_monotone = false;  // audit grid saw a reject after an accept
  std::vector<double> per_check_distance;
  std::vector<TraceEntry> search_trace;
  TestOutcome lw_test;
};

/// Test at b = 0 with every right-hand side zero: all checks share the main
/// estimand.
inline TestOutcome lu_white_full_robustness(const Eigen::VectorXd& theta, const InequalityTester& tester,
                                            double alpha, const TestOptions& opts = {}) {
  const int m = static_cast<int>(theta.size()) - 1;
  return tester.test(theta, build_system(m, 0.0), alpha, opts);
}

inline TestOutcome lu_white_full_robustness(const EstimateBundle& bundle, double alpha, Variant variant,
                                            DfConvention df = DfConvention::Rank) {
  return lu_white_full_robustness(bundle.theta, InequalityTester(bundle.cov), alpha, {variant, df});
}

/// Search: test b = 0; if rejected, test the largest distance among
/// non-pinned checks (a rejection there means no finite radius), audit the
/// decision on an evenly spaced grid over [0, that distance], and bisect
/// between the last rejected grid point before the first accepted one and
/// that accepted point. The returned b_rr is always a tested, non-rejected
/// value; a non-monotone grid pattern is flagged.
inline RadiusReport robustness_radius(const Eigen::VectorXd& theta, const InequalityTester& tester,
                                      const RadiusOptions& opts = {}) {
  if (!(opts.alpha > 0.0 && opts.alpha <= 0.5)) throw ConfigError("alpha must lie in (0, 0.5]");
  if (theta.size() < 2) throw ConfigError("need a main estimate and at least one check");
  if (opts.audit_points < 2) throw ConfigError("audit grid needs at least two points");
  const int m = static_cast<int>(theta.size()) - 1;
  if (!opts.must_equal.empty() && opts.must_equal.size() != static_cast<std::size_t>(m))
    throw ConfigError("must_equal needs one flag per check");

  RadiusReport rep;
  rep.alpha = opts.alpha;
  rep.variant = opts.test.variant;
  rep.df_convention = opts.test.df;
  for (int j = 1; j <= m; ++j) {
    const double d = std::abs(theta[0] - theta[j]);
    rep.per_check_distance.push_back(d);
    rep.max_distance = std::max(rep.max_distance, d);
    if (opts.must_equal.empty() || !opts.must_equal[static_cast<std::size_t>(j - 1)])
      rep.search_upper = std::max(rep.search_upper, d);
  }
  rep.tol = opts.tol ? *opts.tol : 1e-6 * (1.0 + rep.max_distance);
  if (!(rep.tol > 0.0)) throw ConfigError("radius tolerance must be positive");

  auto evaluate = [&](double b) {
    TestOutcome t = tester.test(theta, build_system(m, b, opts.must_equal), opts.alpha, opts.test);
    rep.search_trace.push_back({b, t.statistic, t.r_hat, t.critical_value, t.reject});
    return t;
  };
  auto finish = [&](double b) {
    rep.b_rr = b;
    rep.fully_robust = b <= rep.tol;
    rep.sign_robust = b < std::abs(theta[0]);
    return rep;
  };

  rep.lw_test = lu_white_full_robustness(theta, tester, opts.alpha, opts.test);
  rep.search_trace.push_back({0.0, rep.lw_test.statistic, rep.lw_test.r_hat, rep.lw_test.critical_value,
                              rep.lw_test.reject});
  if (!rep.lw_test.reject) return finish(0.0);

  const double upper = rep.search_upper;
  if (upper <= 0.0 || evaluate(upper).reject) {
    rep.finite = false;
    rep.fully_robust = false;
    rep.sign_robust = false;
    rep.b_rr = std::numeric_limits<double>::infinity();
    return rep;
  }

  const int points = opts.audit_points;
  std::vector<double> grid(static_cast<std::size_t>(points));
  std::vector<bool> rejected(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) grid[static_cast<std::size_t>(k)] = upper * k / (points - 1);
  rejected.front() = true;
  rejected.back() = false;
  for (int k = 1; k < points - 1; ++k) rejected[static_cast<std::size_t>(k)] = evaluate(grid[static_cast<std::size_t>(k)]).reject;

  std::size_t first_accept = 0;
  while (rejected[first_accept]) ++first_accept;
  for (std::size_t k = first_accept; k < rejected.size(); ++k)
    if (rejected[k]) rep.non_monotone = true;

  double lo = grid[first_accept - 1], hi = grid[first_accept];
  while (hi - lo > rep.tol) {
    const double mid = 0.5 * (lo + hi);
    if (evaluate(mid).reject) lo = mid;
    else hi = mid;
  }
  return finish(hi);
}

inline RadiusReport robustness_radius(const EstimateBundle& bundle, const RadiusOptions& opts = {}) {
  if (bundle.cov.rows() != bundle.theta.size()) throw ConfigError("bundle covariance has not been estimated");
  return robustness_radius(bundle.theta, InequalityTester(bundle.cov), opts);
}

}  // namespace robrad
