// Acceptance suite: one PASS/FAIL line per criterion. With an argument N
// only criterion N runs; the exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "robrad/covariance.hpp"
#include "robrad/radius.hpp"
#include "robrad/regress.hpp"
#include "robrad/sensitivity.hpp"
#include "robrad/simlab.hpp"
#include "support.hpp"

using namespace robrad;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Eigen::MatrixXd cov2(double rho, double s0 = 1.0, double s1 = 1.0) {
  Eigen::MatrixXd c(2, 2);
  c << s0 * s0, rho * s0 * s1, rho * s0 * s1, s1 * s1;
  return c;
}

// 1. Two-estimator table, deterministic.
void table1(Verdict& v) {
  const auto t0 = Clock::now();
  const std::vector<double> rhos{0.0, 0.5, 0.8, 0.9, 0.99}, expect{0.000, 0.000, 0.360, 0.754, 1.267};
  RadiusOptions opts;
  opts.test = {Variant::RCC, DfConvention::Rank};
  std::vector<double> got;
  for (double rho : rhos) got.push_back(robustness_radius(Eigen::Vector2d(0.0, 1.5), InequalityTester(cov2(rho)), opts).b_rr);
  const double secs = seconds_since(t0);
  v.detail << "b_rr =";
  for (std::size_t i = 0; i < got.size(); ++i) {
    v.detail << ' ' << got[i];
    v.check(std::abs(got[i] - expect[i]) <= 0.002, "rho " + std::to_string(rhos[i]) + " within 0.002");
  }
  v.detail << "; " << secs << " s";
  v.check(secs < 1.0, "runtime < 1 s");
}

void zero_radius_share(Verdict& v, const sim::Scenario& s, double lo, double hi) {
  const auto t0 = Clock::now();
  auto out = sim::run_scenario(s);
  const double secs = seconds_since(t0);
  v.detail << "P(b_rr = 0) = " << out.prob_zero_radius << " over " << s.reps << " reps (target [" << lo << ", " << hi
           << "]); " << secs << " s";
  v.check(out.prob_zero_radius >= lo && out.prob_zero_radius <= hi, "probability in range");
  v.check(secs < 60.0, "runtime < 60 s");
}

// 2. and 3. Share of zero radii under two Monte Carlo designs.
void equal_variances(Verdict& v) { zero_radius_share(v, sim::equal_variance_scenario(10000), 0.79, 0.84); }
void unequal_variances(Verdict& v) { zero_radius_share(v, sim::unequal_variance_scenario(10000), 0.84, 0.885); }

// 4. Size of the CC test at b = 0 when all parameters coincide.
void size_control(Verdict& v) {
  const int reps = 10000;
  struct Design {
    std::string name;
    Eigen::MatrixXd cov;
  };
  Eigen::MatrixXd equi = Eigen::MatrixXd::Constant(4, 4, 0.5);
  equi.diagonal().setOnes();
  const std::vector<Design> designs{{"m=1 identity", Eigen::MatrixXd::Identity(2, 2)},
                                    {"m=1 rho=0.9", cov2(0.9, 1.0, 2.0)},
                                    {"m=3 equicorrelated", equi}};
  for (const auto& d : designs) {
    const Eigen::MatrixXd L = d.cov.llt().matrixL();
    InequalityTester tester(d.cov);
    const int m = static_cast<int>(d.cov.rows()) - 1;
    const auto sys = build_system(m, 0.0);
    for (double alpha : {0.01, 0.05, 0.10}) {
      std::mt19937_64 rng(4000 + static_cast<std::uint64_t>(alpha * 1000) + static_cast<std::uint64_t>(m));
      std::normal_distribution<double> z;
      int rejections = 0;
      for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd e(m + 1);
        for (int i = 0; i <= m; ++i) e[i] = z(rng);
        const Eigen::VectorXd theta = Eigen::VectorXd::Constant(m + 1, 0.3) + L * e;
        if (tester.test(theta, sys, alpha, {Variant::CC, DfConvention::Rank}).reject) ++rejections;
      }
      const double freq = static_cast<double>(rejections) / reps;
      const double bound = alpha + 3.0 * std::sqrt(alpha * (1.0 - alpha) / reps);
      v.detail << ' ' << d.name << " a=" << alpha << ": " << freq << " (<= " << bound << ");";
      v.check(freq <= bound, d.name + " alpha " + std::to_string(alpha));
    }
  }
}

// 5. Projection statistic against a dense grid minimizer.
void qp_oracle(Verdict& v) {
  std::mt19937_64 rng(5005);
  std::uniform_real_distribution<double> ub(0.0, 1.5);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const int m = 1 + k % 3;
    Eigen::VectorXd theta = oracle::random_theta(rng, m + 1);
    Eigen::MatrixXd cov = oracle::random_cov(rng, m + 1);
    const double b = ub(rng);
    const double got = project_qp(theta, cov, build_system(m, b)).statistic;
    const double grid = oracle::qp_dense_grid(theta, cov, std::vector<double>(static_cast<std::size_t>(m), b));
    worst = std::max(worst, std::abs(got - grid));
  }
  v.detail << "50 instances, max |T - T_grid| = " << worst;
  v.check(worst <= 1e-4, "agreement within 1e-4");
}

// 6. Radius bounds and the zero cases.
void radius_invariants(Verdict& v) {
  std::mt19937_64 rng(6006);
  int bound_violations = 0, positive = 0;
  for (int k = 0; k < 200; ++k) {
    const int m = 1 + k % 5;
    Eigen::VectorXd theta = oracle::random_theta(rng, m + 1, 0.6 + 0.2 * (k % 7));
    Eigen::MatrixXd cov = oracle::random_cov(rng, m + 1) * 0.1;
    auto rep = robustness_radius(theta, InequalityTester(cov));
    double maxd = 0.0;
    for (int j = 1; j <= m; ++j) maxd = std::max(maxd, std::abs(theta[0] - theta[j]));
    if (!(rep.b_rr >= 0.0 && rep.b_rr <= maxd)) ++bound_violations;
    if (rep.b_rr > rep.tol) ++positive;
  }
  int feasible_nonzero = 0;
  for (int k = 0; k < 50; ++k) {
    const int m = 1 + k % 4;
    Eigen::VectorXd theta = oracle::random_theta(rng, m + 1, 0.05);
    Eigen::MatrixXd cov = oracle::random_cov(rng, m + 1, 0.5) * 10.0;
    if (robustness_radius(theta, InequalityTester(cov)).b_rr != 0.0) ++feasible_nonzero;
  }
  int duplicated_nonzero = 0;
  for (int m = 1; m <= 5; ++m) {
    Eigen::MatrixXd cov = oracle::random_cov(rng, m + 1);
    cov.row(m) = cov.row(0);
    cov.col(m) = cov.col(0);
    cov(m, m) = cov(0, 0);
    Eigen::VectorXd theta = oracle::random_theta(rng, m + 1);
    theta.setConstant(theta[0]);
    if (robustness_radius(theta, InequalityTester(cov)).b_rr != 0.0) ++duplicated_nonzero;
  }
  v.detail << "200 random: " << bound_violations << " bound violations (" << positive << " with b_rr > 0); "
           << "feasible: " << feasible_nonzero << " nonzero of 50; duplicated: " << duplicated_nonzero << " nonzero of 5";
  v.check(bound_violations == 0, "0 <= b_rr <= max distance");
  v.check(feasible_nonzero == 0, "feasible estimates give zero");
  v.check(duplicated_nonzero == 0, "duplicated specifications give zero");
}

// 7. Partialled-out coefficient against the joint normal-equations solve.
void fwl(Verdict& v) {
  std::mt19937_64 rng(7007);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    auto s = oracle::random_study(rng, 150 + 20 * static_cast<std::size_t>(k), 1 + k % 4, k % 2 == 0, true, k % 3 != 0);
    auto mask = build_mask(s.data, s.spec);
    const double got = fit_fwl(s.data, s.spec, mask).theta_hat;
    const double expect = oracle::oracle_theta(s.data, s.spec, mask);
    worst = std::max(worst, std::abs(got - expect) / std::abs(expect));
  }
  v.detail << "20 datasets, max relative error " << worst;
  v.check(worst <= 1e-8, "relative error <= 1e-8");
}

// 8. Bootstrap variance and duplicated-specification correlation.
void bootstrap(Verdict& v) {
  Dataset data = oracle::homoskedastic(2000, 8008);
  Specification spec;
  spec.label = "main";
  spec.outcome = "y";
  spec.treatment = "d";
  spec.controls = {"x"};
  spec.is_main = true;
  BootstrapConfig cfg;
  cfg.replications = 1000;
  cfg.seed = 8;
  const double boot = bootstrap_cov(data, {spec}, cfg).matrix(0, 0);
  const double sandwich = oracle::sandwich_variance(data);
  const double rel = std::abs(boot - sandwich) / sandwich;
  Specification dup = spec;
  dup.label = "copy";
  dup.is_main = false;
  const Eigen::MatrixXd c = bootstrap_cov(data, {spec, dup}, cfg).matrix;
  const double corr = c(0, 1) / std::sqrt(c(0, 0) * c(1, 1));
  v.detail << "bootstrap var " << boot << " vs sandwich " << sandwich << " (rel " << rel << "); duplicate corr " << corr;
  v.check(rel <= 0.15, "within 15%");
  v.check(corr >= 0.999, "correlation >= 0.999");
}

// 9. Sensitivity round trip.
void sensitivity(Verdict& v) {
  std::mt19937_64 rng(9009);
  std::uniform_real_distribution<double> b(0.001, 5.0), vr(0.05, 20.0), r2(0.01, 0.95);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    SensitivityInputs in{b(rng), vr(rng), r2(rng)};
    worst = std::max(worst, std::abs(bias_from_tau(tau_from_radius(in), in) - in.b_rr) / in.b_rr);
  }
  const double tau0 = tau_from_radius({0.0, 1.3, 0.4});
  v.detail << "100 inputs, max relative error " << worst << "; tau(0) = " << tau0;
  v.check(worst <= 1e-9, "round trip within 1e-9");
  v.check(tau0 == 0.0, "tau(0) = 0");
}

// 10. Mean radius curves over correlation and number of checks.
void curves(Verdict& v) {
  sim::CurveConfig cfg;
  cfg.reps = 1000;
  auto pts = sim::mean_radius_curve(cfg);
  const auto& rhos = cfg.rho_grid;
  const std::size_t nr = rhos.size();
  v.detail << "mean b_rr by m over rho {";
  for (double r : rhos) v.detail << ' ' << r;
  v.detail << " }:";
  bool monotone = true, high = true;
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    v.detail << " m=" << cfg.m_values[mi] << " [";
    for (std::size_t ri = 0; ri < nr; ++ri) {
      const double b = pts[mi * nr + ri].mean_b_rr;
      v.detail << (ri ? " " : "") << b;
      if (ri > 0 && b < pts[mi * nr + ri - 1].mean_b_rr) monotone = false;
    }
    v.detail << "]";
    if (pts[mi * nr + nr - 1].mean_b_rr < 1.2) high = false;
  }
  v.detail << "; spread (max-min)/mean across m:";
  bool flat = true;
  std::vector<double> ranges;
  for (std::size_t ri = 0; ri < nr; ++ri) {
    double lo = 1e300, hi = -1e300, sum = 0.0;
    for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
      const double b = pts[mi * nr + ri].mean_b_rr;
      lo = std::min(lo, b);
      hi = std::max(hi, b);
      sum += b;
    }
    const double spread = (hi - lo) / (sum / static_cast<double>(cfg.m_values.size()));
    v.detail << ' ' << spread;
    if (!(spread < 0.15)) flat = false;
    ranges.push_back((hi - lo) / cfg.max_distance);
  }
  // informational only: the same ranges scaled by the fixed true distance
  v.detail << "; range / max distance:";
  for (double r : ranges) v.detail << ' ' << r;
  v.check(monotone, "nondecreasing in rho");
  v.check(high, "mean b_rr >= 1.2 at rho = 0.99");
  v.check(flat, "variation across m < 15% at every rho");
}

struct Criterion {
  const char* name;
  std::function<void(Verdict&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"two-estimator table", table1},
      {"Monte Carlo, uncorrelated equal variances", equal_variances},
      {"Monte Carlo, unequal variances", unequal_variances},
      {"CC size control at b = 0", size_control},
      {"projection vs dense grid", qp_oracle},
      {"radius bound invariants", radius_invariants},
      {"partialled-out coefficient vs joint solve", fwl},
      {"bootstrap sanity", bootstrap},
      {"sensitivity round trip", sensitivity},
      {"mean radius curves", curves},
  };
  return all;
}

bool run_one(std::size_t index) {
  Verdict v;
  try {
    criteria()[index].run(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " exception: " << e.what();
  }
  std::printf("[%s] %zu: %s: %s\n", v.pass ? "PASS" : "FAIL", index + 1, criteria()[index].name, v.detail.str().c_str());
  std::fflush(stdout);
  return v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    const int n = std::atoi(argv[1]);
    if (n < 1 || n > static_cast<int>(criteria().size())) {
      std::fprintf(stderr, "criterion must be 1..%zu\n", criteria().size());
      return 2;
    }
    return run_one(static_cast<std::size_t>(n - 1)) ? 0 : 1;
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria().size(); ++i) all = run_one(i) && all;
  return all ? 0 : 1;
}
