#pragma once

// Conditional chi-square (CC) and refined CC (RCC) tests of A θ <= rhs.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "robrad/distributions.hpp"
#include "robrad/error.hpp"
#include "robrad/qp.hpp"

namespace robrad {

enum class Variant { CC, RCC };
enum class DfConvention { RowCount, Rank };

inline const char* to_string(Variant v) { return v == Variant::CC ? "cc" : "rcc"; }
inline const char* to_string(DfConvention d) { return d == DfConvention::Rank ? "rank" : "rows"; }

/// {μ : A μ <= rhs}. For check j (1-based) rows 2j-2 and 2j-1 (0-based)
/// encode θ0 - θj <= b and θj - θ0 <= b.
struct InequalitySystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd rhs;
  std::vector<int> equality_rows;  // rows pinned to rhs 0

  int checks() const { return static_cast<int>(A.rows() / 2); }
};

inline InequalitySystem build_system(int m, double b, const std::vector<bool>& must_equal = {}) {
  if (m < 1) throw ConfigError("build_system: need at least one check");
  if (!(b >= 0.0)) throw ConfigError("build_system: b must be nonnegative");
  if (!must_equal.empty() && must_equal.size() != static_cast<std::size_t>(m))
    throw ConfigError("build_system: must_equal needs one flag per check");
  InequalitySystem sys;
  sys.A = Eigen::MatrixXd::Zero(2 * m, m + 1);
  sys.rhs.resize(2 * m);
  for (int j = 1; j <= m; ++j) {
    const int up = 2 * j - 2, down = 2 * j - 1;
    sys.A(up, 0) = 1.0;
    sys.A(up, j) = -1.0;
    sys.A(down, 0) = -1.0;
    sys.A(down, j) = 1.0;
    const bool pinned = !must_equal.empty() && must_equal[static_cast<std::size_t>(j - 1)];
    sys.rhs[up] = sys.rhs[down] = pinned ? 0.0 : b;
    if (pinned) {
      sys.equality_rows.push_back(up);
      sys.equality_rows.push_back(down);
    }
  }
  return sys;
}

struct ActiveSet {
  std::vector<int> rows;
  int count = 0;
  int rank = 0;
};

/// Rows with rhs_s - a_s μ <= 1e-7 * scale are active; `rank` is the rank
/// of the active rows of A (relative tolerance 1e-10).
inline ActiveSet count_active(const Eigen::VectorXd& mu, const InequalitySystem& sys, double scale) {
  ActiveSet out;
  const double eps = 1e-7 * scale;
  const Eigen::VectorXd slack = sys.rhs - sys.A * mu;
  for (Eigen::Index s = 0; s < slack.size(); ++s)
    if (slack[s] <= eps) out.rows.push_back(static_cast<int>(s));
  out.count = static_cast<int>(out.rows.size());
  if (out.count > 0) {
    Eigen::MatrixXd sub(out.count, sys.A.cols());
    for (int k = 0; k < out.count; ++k) sub.row(k) = sys.A.row(out.rows[static_cast<std::size_t>(k)]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    qr.setThreshold(1e-10);
    out.rank = static_cast<int>(qr.rank());
  }
  return out;
}

/// Default activity scale: 1 + ||rhs||_inf.
inline double activity_scale(const InequalitySystem& sys) {
  return 1.0 + (sys.rhs.size() ? sys.rhs.cwiseAbs().maxCoeff() : 0.0);
}

struct Projection {
  Eigen::VectorXd mu;
  double statistic = 0.0;
  bool used_fallback = false;
};

struct TestOptions {
  Variant variant = Variant::RCC;
  DfConvention df = DfConvention::Rank;
};

struct TestOutcome {
  double statistic = 0.0;
  Eigen::VectorXd minimizer;
  std::vector<int> active_rows;
  int r_hat = 0;
  int r_hat_rows = 0;
  int r_hat_rank = 0;
  double critical_value = 0.0;
  bool reject = false;
  Variant variant = Variant::RCC;
  DfConvention df_convention = DfConvention::Rank;
  /// RCC only (r_hat = 1): distance to the nearest other inequality and the
  /// resulting level 2αΦ(τ) of the chi-square(1) critical value.
  std::optional<double> rcc_tau;
  std::optional<double> rcc_level;
};

/// Runs CC/RCC tests against a fixed covariance V of θ̂. The covariance is
/// checked and factorized once; tests at many b values reuse it. Feasible θ̂
/// never touches the factorization, so a singular V is only an error when a
/// projection is actually required.
class InequalityTester {
 public:
  explicit InequalityTester(Eigen::MatrixXd cov) : cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() < 2) throw ConfigError("covariance must be a square matrix of size m+1 >= 2");
    const double scale = cov_.cwiseAbs().maxCoeff();
    if (!std::isfinite(scale)) throw ConfigError("covariance has non-finite entries");
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1e-300))
      throw ConfigError("covariance is not symmetric");
    cov_ = (cov_ + cov_.transpose()) * 0.5;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(lo > 0.0)) {
      std::ostringstream os;
      os << "covariance is not positive definite (smallest eigenvalue " << lo << ")";
      factor_error_ = os.str();
    } else if (condition_ > 1e12) {
      std::ostringstream os;
      os << "covariance is ill-conditioned (condition number " << condition_
         << " > 1e12); consider adding a ridge to the diagonal";
      factor_error_ = os.str();
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(cov_);
      if (llt.info() != Eigen::Success) factor_error_ = "covariance Cholesky factorization failed";
      else chol_ = llt.matrixL();
    }
  }

  const Eigen::MatrixXd& cov() const { return cov_; }
  double condition_number() const { return condition_; }
  bool factorizable() const { return factor_error_.empty(); }

  /// μ̂ = argmin over A μ <= rhs of (θ̂-μ)' V^{-1} (θ̂-μ), and the minimum.
  Projection project(const Eigen::VectorXd& theta, const InequalitySystem& sys) const {
    check_dims(theta, sys);
    Projection out;
    if (((sys.A * theta - sys.rhs).array() <= 0.0).all()) {
      out.mu = theta;
      return out;
    }
    if (!factor_error_.empty()) throw EstimationError(factor_error_);
    qp::Result res;
    bool ok = false;
    try {
      res = qp::dual_active_set(theta, chol_, sys.A, sys.rhs);
      ok = kkt_ok(theta, sys, res);
    } catch (const EstimationError&) {
      ok = false;
    }
    if (!ok) {
      res = qp::dual_projected_gradient(theta, cov_, sys.A, sys.rhs);
      if (!kkt_ok(theta, sys, res, 1e-6)) throw EstimationError("QP: projection did not converge");
    }
    out.mu = res.x;
    out.used_fallback = res.used_fallback;
    const Eigen::VectorXd w = chol_.triangularView<Eigen::Lower>().solve(theta - out.mu);
    out.statistic = w.squaredNorm();
    return out;
  }

  TestOutcome test(const Eigen::VectorXd& theta, const InequalitySystem& sys, double alpha,
                   const TestOptions& opts = {}) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    Projection proj = project(theta, sys);
    TestOutcome out;
    out.variant = opts.variant;
    out.df_convention = opts.df;
    out.statistic = proj.statistic;
    out.minimizer = proj.mu;
    ActiveSet act = count_active(proj.mu, sys, activity_scale(sys));
    out.active_rows = act.rows;
    out.r_hat_rows = act.count;
    out.r_hat_rank = act.rank;
    out.r_hat = opts.df == DfConvention::Rank ? act.rank : act.count;
    out.critical_value = chi2_quantile(out.r_hat, 1.0 - alpha);
    if (opts.variant == Variant::RCC && out.r_hat == 1) {
      const double tau = rcc_distance(proj.mu, sys, act.rows.front());
      const double level = 2.0 * alpha * normal_cdf(tau);
      out.rcc_tau = tau;
      out.rcc_level = level;
      out.critical_value = chi2_quantile(1, 1.0 - level);
    }
    out.reject = out.r_hat > 0 && out.statistic > out.critical_value;
    return out;
  }

 private:
  void check_dims(const Eigen::VectorXd& theta, const InequalitySystem& sys) const {
    if (theta.size() != cov_.rows() || sys.A.cols() != theta.size() || sys.rhs.size() != sys.A.rows())
      throw ConfigError("dimension mismatch between estimates, covariance and inequality system");
  }

  bool kkt_ok(const Eigen::VectorXd& theta, const InequalitySystem& sys, const qp::Result& res,
              double tol = 1e-9) const {
    const double scale = 1.0 + theta.cwiseAbs().maxCoeff() + sys.rhs.cwiseAbs().maxCoeff();
    const Eigen::VectorXd slack = sys.rhs - sys.A * res.x;
    if (slack.minCoeff() < -tol * scale) return false;
    if (res.multipliers.size() && res.multipliers.minCoeff() < -tol * scale) return false;
    const Eigen::VectorXd stationarity = (res.x - theta) + cov_ * (sys.A.transpose() * res.multipliers);
    if (stationarity.cwiseAbs().maxCoeff() > tol * scale) return false;
    const double comp = (res.multipliers.array() * slack.array().abs()).abs().maxCoeff();
    return comp <= tol * scale * std::max(1.0, res.multipliers.cwiseAbs().maxCoeff());
  }

  // Smallest normalized distance, along the active facet, from μ̂ to any
  // other inequality: for rows l not parallel to the active row p,
  //   τ_l = σ_p (rhs_l - a_l μ̂) / (σ_p σ_l - a_p V a_l'),   σ_x = sqrt(a_x V a_x').
  // For the opposite face of the same check this is half the studentized
  // slack. Rows parallel to p in the same direction are skipped; with no
  // candidate rows τ = 0.
  double rcc_distance(const Eigen::VectorXd& mu, const InequalitySystem& sys, int pivot) const {
    const Eigen::RowVectorXd ap = sys.A.row(pivot);
    const Eigen::VectorXd Vap = cov_ * ap.transpose();
    const double sp = std::sqrt(ap.dot(Vap));
    double tau = std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index l = 0; l < sys.A.rows(); ++l) {
      if (l == pivot) continue;
      const Eigen::RowVectorXd al = sys.A.row(l);
      const double sl = std::sqrt(al.dot(cov_ * al.transpose()));
      const double denom = sp * sl - al.dot(Vap);
      if (!(denom > 1e-10 * sp * sl)) continue;
      const double slack = std::max(0.0, sys.rhs[l] - al.dot(mu));
      tau = std::min(tau, sp * slack / denom);
      any = true;
    }
    return any ? tau : 0.0;
  }

  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  std::string factor_error_;
  double condition_ = 0.0;
};

/// One-shot projection (see InequalityTester::project).
inline Projection project_qp(const Eigen::VectorXd& theta, const Eigen::MatrixXd& cov, const InequalitySystem& sys) {
  return InequalityTester(cov).project(theta, sys);
}

inline TestOutcome cc_test(const Eigen::VectorXd& theta, const Eigen::MatrixXd& cov, const InequalitySystem& sys,
                           double alpha, DfConvention df = DfConvention::Rank) {
  return InequalityTester(cov).test(theta, sys, alpha, {Variant::CC, df});
}

inline TestOutcome rcc_test(const Eigen::VectorXd& theta, const Eigen::MatrixXd& cov, const InequalitySystem& sys,
                            double alpha, DfConvention df = DfConvention::Rank) {
  return InequalityTester(cov).test(theta, sys, alpha, {Variant::RCC, df});
}

}  // namespace robrad
