#pragma once

// Monte Carlo laboratory: radius distributions under known-covariance
// estimator designs, the deterministic two-estimator table, and mean-radius
// curves across correlation levels and numbers of checks.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "robrad/cstest.hpp"
#include "robrad/error.hpp"
#include "robrad/parallel.hpp"
#include "robrad/radius.hpp"
#include "robrad/rng.hpp"

namespace robrad::sim {

enum class Dgp { ExactNormal, StudentT, MixedNormal };

inline const char* to_string(Dgp d) {
  switch (d) {
    case Dgp::ExactNormal: return "exact-normal";
    case Dgp::StudentT: return "student-t";
    case Dgp::MixedNormal: return "mixed-normal";
  }
  return "?";
}

/// Correlation structure of the m+1 estimators.
struct Correlation {
  enum class Kind { Equicorrelated, Matrix, Named } kind = Kind::Equicorrelated;
  double rho = 0.0;
  Eigen::MatrixXd matrix;
  std::string name;  // negative | neutral | positive

  static Correlation equi(double rho) { return {Kind::Equicorrelated, rho, {}, {}}; }
  static Correlation named(std::string n) { return {Kind::Named, 0.0, {}, std::move(n)}; }
  static Correlation explicit_matrix(Eigen::MatrixXd m) { return {Kind::Matrix, 0.0, std::move(m), {}}; }

  /// Equicorrelation used for a named structure with m checks. These are
  /// tool defaults: -1/(2m), 0 and 0.5.
  static double named_rho(const std::string& n, int m) {
    if (n == "negative") return -1.0 / (2.0 * m);
    if (n == "neutral") return 0.0;
    if (n == "positive") return 0.5;
    throw ConfigError("unknown correlation structure '" + n + "' (expected negative, neutral or positive)");
  }

  Eigen::MatrixXd resolve(int dim) const {
    if (kind == Kind::Matrix) {
      if (matrix.rows() != dim || matrix.cols() != dim) throw ConfigError("correlation matrix has the wrong size");
      return matrix;
    }
    const double r = kind == Kind::Named ? named_rho(name, dim - 1) : rho;
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(dim, dim, r);
    c.diagonal().setOnes();
    return c;
  }
};

struct Scenario {
  int m = 1;
  Eigen::VectorXd theta_true = Eigen::Vector2d(0.0, 1.5);
  Eigen::VectorXd sigma = Eigen::Vector2d(1.0, 1.0);
  Correlation corr = Correlation::equi(0.0);
  Dgp dgp = Dgp::ExactNormal;
  int n = 100;  // sample size for the sample-mean DGPs
  int reps = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  TestOptions test{};
  double t_df = 5.0;         // student-t degrees of freedom
  int histogram_bins = 20;
  bool keep_draws = false;
  unsigned threads = 0;

  /// Covariance of one observation's shock vector: diag(σ) R diag(σ).
  Eigen::MatrixXd shock_covariance() const {
    const Eigen::MatrixXd r = corr.resolve(m + 1);
    return sigma.asDiagonal() * r * sigma.asDiagonal();
  }

  /// Known covariance of θ̂ handed to the test.
  Eigen::MatrixXd estimator_covariance() const {
    Eigen::MatrixXd s = shock_covariance();
    return dgp == Dgp::ExactNormal ? s : Eigen::MatrixXd(s / static_cast<double>(n));
  }

  void validate() const {
    if (m < 1) throw ConfigError("scenario: m must be at least 1");
    if (theta_true.size() != m + 1 || sigma.size() != m + 1)
      throw ConfigError("scenario: theta_true and sigma need m+1 entries");
    if ((sigma.array() <= 0.0).any()) throw ConfigError("scenario: sigma must be positive");
    if (reps < 1) throw ConfigError("scenario: reps must be at least 1");
    if (!(alpha > 0.0 && alpha <= 0.5)) throw ConfigError("scenario: alpha must lie in (0, 0.5]");
    if (dgp != Dgp::ExactNormal && n < 1) throw ConfigError("scenario: n must be at least 1");
    if (dgp == Dgp::StudentT && !(t_df > 2.0)) throw ConfigError("scenario: student-t needs more than 2 degrees of freedom");
    if (histogram_bins < 1) throw ConfigError("scenario: histogram_bins must be at least 1");
    const Eigen::MatrixXd r = corr.resolve(m + 1);
    if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError("scenario: correlation matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12) throw ConfigError("scenario: correlation matrix is not positive semidefinite");
  }
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<int> counts;
};

struct SimSummary {
  double prob_zero_radius = 0.0;
  double mean_b_rr = 0.0;
  int infinite = 0;  // replications without a finite radius (excluded from the mean)
  Histogram histogram;
  std::vector<double> per_rep_b_rr;
};

inline Histogram make_histogram(const std::vector<double>& values, int bins) {
  Histogram h;
  double hi = 0.0;
  for (double v : values)
    if (std::isfinite(v)) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  for (int k = 0; k <= bins; ++k) h.edges.push_back(hi * k / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int k = std::isfinite(v) ? static_cast<int>(std::floor(v / hi * bins)) : bins - 1;
    h.counts[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))]++;
  }
  return h;
}

namespace detail {

/// Standardized (mean 0, variance 1) shock under the scenario's DGP.
inline double draw_shock(Dgp dgp, double t_df, rng::Engine& eng) {
  std::normal_distribution<double> z;
  switch (dgp) {
    case Dgp::ExactNormal: return z(eng);
    case Dgp::StudentT: {
      std::student_t_distribution<double> t(t_df);
      return t(eng) / std::sqrt(t_df / (t_df - 2.0));
    }
    case Dgp::MixedNormal: {
      // 0.5 N(0, 0.25) + 0.5 N(0, 1.75): unit variance.
      std::bernoulli_distribution coin(0.5);
      return z(eng) * (coin(eng) ? 0.5 : std::sqrt(1.75));
    }
  }
  return 0.0;
}

}  // namespace detail

/// Draws θ̂ for replication `rep`: θ + L z (exact normal) or θ plus the mean
/// of n shock vectors L η_i (sample-mean DGPs), L = chol(shock covariance).
inline Eigen::VectorXd draw_estimates(const Scenario& s, const Eigen::MatrixXd& factor, std::size_t rep) {
  auto eng = rng::make_engine(s.seed, rep);
  const Eigen::Index dim = s.m + 1;
  Eigen::VectorXd eta(dim);
  if (s.dgp == Dgp::ExactNormal) {
    for (Eigen::Index k = 0; k < dim; ++k) eta[k] = detail::draw_shock(s.dgp, s.t_df, eng);
    return s.theta_true + factor * eta;
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < s.n; ++i) {
    for (Eigen::Index k = 0; k < dim; ++k) eta[k] = detail::draw_shock(s.dgp, s.t_df, eng);
    acc += eta;
  }
  return s.theta_true + factor * (acc / static_cast<double>(s.n));
}

/// Lower factor of a PSD matrix: Cholesky when possible, otherwise the
/// symmetric square root from an eigendecomposition.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

/// Runs every replication (in parallel, reduced by replication index) and
/// summarizes the radius distribution. Deterministic given the seed.
inline SimSummary run_scenario(const Scenario& s) {
  s.validate();
  const Eigen::MatrixXd factor = psd_factor(s.shock_covariance());
  const InequalityTester tester(s.estimator_covariance());
  RadiusOptions opts;
  opts.alpha = s.alpha;
  opts.test = s.test;
  std::vector<double> b(static_cast<std::size_t>(s.reps));
  std::vector<char> zero(b.size(), 0);
  parallel_for(b.size(), s.threads, [&](std::size_t r) {
    RadiusReport rep = robustness_radius(draw_estimates(s, factor, r), tester, opts);
    b[r] = rep.b_rr;
    zero[r] = rep.fully_robust ? 1 : 0;
  });
  SimSummary out;
  double sum = 0.0;
  int zeros = 0, finite = 0;
  for (std::size_t r = 0; r < b.size(); ++r) {
    zeros += zero[r];
    if (std::isfinite(b[r])) {
      sum += b[r];
      ++finite;
    } else {
      ++out.infinite;
    }
  }
  out.prob_zero_radius = static_cast<double>(zeros) / static_cast<double>(s.reps);
  out.mean_b_rr = finite ? sum / finite : std::numeric_limits<double>::quiet_NaN();
  out.histogram = make_histogram(b, s.histogram_bins);
  if (s.keep_draws) out.per_rep_b_rr = std::move(b);
  return out;
}

/// m true parameter vectors of length m+1: vector k (k = 1..m) has θ0 = 0
/// and its last k entries equal to delta.
inline std::vector<Eigen::VectorXd> parameter_structures(int m, double delta) {
  if (m < 1) throw ConfigError("parameter_structures: m must be at least 1");
  if (!(delta >= 0.0)) throw ConfigError("parameter_structures: delta must be nonnegative");
  std::vector<Eigen::VectorXd> out;
  for (int k = 1; k <= m; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m + 1);
    v.tail(k).setConstant(delta);
    out.push_back(v);
  }
  return out;
}

/// The two-estimator illustration: θ̂ = (0, 1.5), unit standard deviations,
/// correlation ρ; returns b_rr per ρ (no simulation).
inline std::vector<double> table1(const std::vector<double>& rho_grid, double alpha = 0.05,
                                  TestOptions test = {Variant::RCC, DfConvention::Rank}) {
  std::vector<double> out;
  const Eigen::Vector2d theta(0.0, 1.5);
  RadiusOptions opts;
  opts.alpha = alpha;
  opts.test = test;
  for (double rho : rho_grid) {
    Eigen::Matrix2d cov;
    cov << 1.0, rho, rho, 1.0;
    out.push_back(robustness_radius(theta, InequalityTester(cov), opts).b_rr);
  }
  return out;
}

inline const std::vector<double>& default_table1_rhos() {
  static const std::vector<double> rhos{0.0, 0.5, 0.8, 0.9, 0.99};
  return rhos;
}

inline const std::vector<double>& default_curve_rhos() {
  static const std::vector<double> rhos{0.0, 0.25, 0.5, 0.75, 0.9, 0.99};
  return rhos;
}

/// Preset: θ = (0, 1.5), σ = (1, 1), ρ = 0, exact normal.
inline Scenario equal_variance_scenario(int reps = 10000, std::uint64_t seed = 2) {
  Scenario s;
  s.reps = reps;
  s.seed = seed;
  return s;
}

/// Preset: as equal_variance_scenario with σ1 = sqrt(2).
inline Scenario unequal_variance_scenario(int reps = 10000, std::uint64_t seed = 3) {
  Scenario s = equal_variance_scenario(reps, seed);
  s.sigma = Eigen::Vector2d(1.0, std::sqrt(2.0));
  return s;
}

/// Mean radius averaged over the m parameter structures of each m.
struct CurvePoint {
  int m = 1;
  double rho = 0.0;
  std::string structure;  // correlation label for named sweeps
  Dgp dgp = Dgp::ExactNormal;
  double mean_b_rr = 0.0;
  double prob_zero_radius = 0.0;
};

struct CurveConfig {
  std::vector<int> m_values{1, 2, 3, 4, 5};
  std::vector<double> rho_grid = default_curve_rhos();
  double max_distance = 1.5;
  int reps = 1000;  // per parameter structure
  double alpha = 0.05;
  std::uint64_t seed = 11;
  TestOptions test{};
  unsigned threads = 0;
};

namespace detail {

inline CurvePoint average_over_structures(Scenario base, int m, double delta, std::uint64_t seed) {
  CurvePoint p;
  p.m = m;
  double mean = 0.0, zero = 0.0;
  const auto structures = parameter_structures(m, delta);
  for (std::size_t k = 0; k < structures.size(); ++k) {
    base.m = m;
    base.theta_true = structures[k];
    base.seed = rng::stream_seed(seed, k);
    SimSummary sum = run_scenario(base);
    mean += sum.mean_b_rr;
    zero += sum.prob_zero_radius;
  }
  p.mean_b_rr = mean / static_cast<double>(structures.size());
  p.prob_zero_radius = zero / static_cast<double>(structures.size());
  return p;
}

}  // namespace detail

/// Exact-normal estimators with unit standard deviations and common
/// correlation ρ; max distance between true parameters fixed.
inline std::vector<CurvePoint> mean_radius_curve(const CurveConfig& cfg) {
  std::vector<CurvePoint> out;
  for (int m : cfg.m_values) {
    for (std::size_t ri = 0; ri < cfg.rho_grid.size(); ++ri) {
      Scenario s;
      s.sigma = Eigen::VectorXd::Ones(m + 1);
      s.corr = Correlation::equi(cfg.rho_grid[ri]);
      s.reps = cfg.reps;
      s.alpha = cfg.alpha;
      s.test = cfg.test;
      s.threads = cfg.threads;
      // Common random numbers across ρ: the seed depends on m only.
      const auto seed = rng::stream_seed(cfg.seed, static_cast<std::uint64_t>(m));
      CurvePoint p = detail::average_over_structures(s, m, cfg.max_distance, seed);
      p.rho = cfg.rho_grid[ri];
      out.push_back(p);
    }
  }
  return out;
}

struct SweepConfig {
  std::vector<int> m_values{1, 2, 3};
  std::vector<std::string> structures{"negative", "neutral", "positive"};
  std::vector<Dgp> dgps{Dgp::ExactNormal, Dgp::StudentT, Dgp::MixedNormal};
  double max_distance = 2.5;
  int n = 100;
  int reps = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 17;
  TestOptions test{};
  unsigned threads = 0;
};

/// Named correlation structures across DGPs with sample-mean estimators.
inline std::vector<CurvePoint> structure_sweep(const SweepConfig& cfg) {
  std::vector<CurvePoint> out;
  for (Dgp dgp : cfg.dgps) {
    for (int m : cfg.m_values) {
      for (std::size_t si = 0; si < cfg.structures.size(); ++si) {
        Scenario s;
        s.sigma = Eigen::VectorXd::Ones(m + 1);
        s.corr = Correlation::named(cfg.structures[si]);
        s.dgp = dgp;
        s.n = cfg.n;
        s.reps = cfg.reps;
        s.alpha = cfg.alpha;
        s.test = cfg.test;
        s.threads = cfg.threads;
        const auto seed = rng::stream_seed(cfg.seed, static_cast<std::uint64_t>(dgp) * 100000 + m * 100 + si);
        CurvePoint p = detail::average_over_structures(s, m, cfg.max_distance, seed);
        p.structure = cfg.structures[si];
        p.dgp = dgp;
        out.push_back(p);
      }
    }
  }
  return out;
}

}  // namespace robrad::sim
