#pragma once

// Projection of a point onto a polyhedron {x : A x <= rhs} in the metric
// induced by a covariance V:
//
//   minimize (x - c)' V^{-1} (x - c)   subject to   A x <= rhs.
//
// Primary solver: Goldfarb-Idnani dual active set, started from the
// unconstrained minimizer c with J = chol(V) (so J' V^{-1} J = I).
// Fallback: projected gradient on the dual, a nonnegative-orthant QP.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "robrad/error.hpp"

namespace robrad::qp {

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint row, zero when inactive
  std::vector<int> active;      // solver's final active set (row indices)
  int iterations = 0;
  bool used_fallback = false;
};

namespace detail {

inline double hypot2(double a, double b) { return std::hypot(a, b); }

/// Goldfarb-Idnani state for inequality constraints n_i' x + c_i >= 0.
class DualActiveSet {
 public:
  DualActiveSet(const Eigen::MatrixXd& J, const Eigen::VectorXd& x0, const Eigen::MatrixXd& N, const Eigen::VectorXd& c0)
      : n_(J.rows()), p_(N.cols()), J_(J), R_(Eigen::MatrixXd::Zero(n_, n_)), N_(N), c0_(c0), x_(x0),
        d_(n_), z_(n_), r_(n_), u_(Eigen::VectorXd::Zero(n_ + 1)), A_(static_cast<std::size_t>(n_ + 1), -1) {}

  Result solve(int max_iterations) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd s(p_);
    std::vector<bool> in_active(static_cast<std::size_t>(p_), false);
    int iter = 0;
    for (;;) {
      // Step 1: most violated constraint.
      if (++iter > max_iterations) throw EstimationError("QP: dual active-set iteration limit reached");
      s = N_.transpose() * x_ + c0_;
      int ip = -1;
      double worst = 0.0;
      const double xscale = x_.cwiseAbs().maxCoeff();
      for (Eigen::Index i = 0; i < p_; ++i) {
        if (in_active[static_cast<std::size_t>(i)]) continue;
        const double tol = 1e-13 * (1.0 + std::abs(c0_[i]) + N_.col(i).cwiseAbs().sum() * xscale);
        if (s[i] < -tol && s[i] < worst) {
          worst = s[i];
          ip = static_cast<int>(i);
        }
      }
      if (ip < 0) break;

      const Eigen::VectorXd np = N_.col(ip);
      u_[iq_] = 0.0;
      A_[static_cast<std::size_t>(iq_)] = ip;
      double s_ip = s[ip];
      // Step 2: move toward satisfying constraint ip.
      for (;;) {
        if (++iter > max_iterations) throw EstimationError("QP: dual active-set iteration limit reached");
        d_ = J_.transpose() * np;
        z_ = J_.rightCols(n_ - iq_) * d_.tail(n_ - iq_);
        for (Eigen::Index i = iq_ - 1; i >= 0; --i) {
          double sum = d_[i];
          for (Eigen::Index j = i + 1; j < iq_; ++j) sum -= R_(i, j) * r_[j];
          r_[i] = sum / R_(i, i);
        }
        double t1 = inf;
        Eigen::Index l = -1;
        for (Eigen::Index k = 0; k < iq_; ++k) {
          if (r_[k] > 0.0 && u_[k] / r_[k] < t1) {
            t1 = u_[k] / r_[k];
            l = k;
          }
        }
        const double zn = z_.dot(np);
        const double t2 = (z_.squaredNorm() > 1e-30 * std::max(1.0, np.squaredNorm()) && zn > 0.0) ? -s_ip / zn : inf;
        const double t = std::min(t1, t2);
        if (!(t < inf)) throw EstimationError("QP: constraints are infeasible");
        if (t2 == inf) {
          for (Eigen::Index k = 0; k < iq_; ++k) u_[k] -= t * r_[k];
          u_[iq_] += t;
          in_active[static_cast<std::size_t>(A_[static_cast<std::size_t>(l)])] = false;
          remove(l);
          continue;
        }
        x_ += t * z_;
        for (Eigen::Index k = 0; k < iq_; ++k) u_[k] -= t * r_[k];
        u_[iq_] += t;
        if (t == t2) {
          if (!add()) throw EstimationError("QP: degenerate (linearly dependent) active constraint");
          in_active[static_cast<std::size_t>(ip)] = true;
          break;
        }
        in_active[static_cast<std::size_t>(A_[static_cast<std::size_t>(l)])] = false;
        remove(l);
        s_ip = np.dot(x_) + c0_[ip];
      }
    }
    Result out;
    out.x = x_;
    out.multipliers = Eigen::VectorXd::Zero(p_);
    for (Eigen::Index k = 0; k < iq_; ++k) {
      out.active.push_back(A_[static_cast<std::size_t>(k)]);
      out.multipliers[A_[static_cast<std::size_t>(k)]] = u_[k];
    }
    out.iterations = iter;
    return out;
  }

 private:
  // Appends the constraint whose J'n is in d_; Givens rotations zero
  // d_[iq+1..n) while updating J.
  bool add() {
    for (Eigen::Index j = n_ - 1; j >= iq_ + 1; --j) {
      double cc = d_[j - 1], ss = d_[j];
      const double h = hypot2(cc, ss);
      if (h == 0.0) continue;
      d_[j] = 0.0;
      cc /= h;
      ss /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d_[j - 1] = -h;
      } else {
        d_[j - 1] = h;
      }
      const double xny = ss / (1.0 + cc);
      for (Eigen::Index k = 0; k < n_; ++k) {
        const double a = J_(k, j - 1), b = J_(k, j);
        J_(k, j - 1) = a * cc + b * ss;
        J_(k, j) = xny * (a + J_(k, j - 1)) - b;
      }
    }
    ++iq_;
    for (Eigen::Index i = 0; i < iq_; ++i) R_(i, iq_ - 1) = d_[i];
    if (std::abs(d_[iq_ - 1]) <= std::numeric_limits<double>::epsilon() * r_norm_) return false;
    r_norm_ = std::max(r_norm_, std::abs(d_[iq_ - 1]));
    return true;
  }

  // Drops the active constraint at position qq, moving the pending
  // candidate (position iq_) down with it.
  void remove(Eigen::Index qq) {
    for (Eigen::Index i = qq; i < iq_ - 1; ++i) {
      A_[static_cast<std::size_t>(i)] = A_[static_cast<std::size_t>(i + 1)];
      u_[i] = u_[i + 1];
      R_.col(i) = R_.col(i + 1);
    }
    A_[static_cast<std::size_t>(iq_ - 1)] = A_[static_cast<std::size_t>(iq_)];
    u_[iq_ - 1] = u_[iq_];
    A_[static_cast<std::size_t>(iq_)] = -1;
    u_[iq_] = 0.0;
    R_.col(iq_ - 1).setZero();
    --iq_;
    for (Eigen::Index j = qq; j < iq_; ++j) {
      double cc = R_(j, j), ss = R_(j + 1, j);
      const double h = hypot2(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      R_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (Eigen::Index k = j + 1; k < iq_; ++k) {
        const double a = R_(j, k), b = R_(j + 1, k);
        R_(j, k) = a * cc + b * ss;
        R_(j + 1, k) = xny * (a + R_(j, k)) - b;
      }
      for (Eigen::Index k = 0; k < n_; ++k) {
        const double a = J_(k, j), b = J_(k, j + 1);
        J_(k, j) = a * cc + b * ss;
        J_(k, j + 1) = xny * (J_(k, j) + a) - b;
      }
    }
  }

  Eigen::Index n_, p_;
  Eigen::MatrixXd J_, R_;
  const Eigen::MatrixXd& N_;
  const Eigen::VectorXd& c0_;
  Eigen::VectorXd x_, d_, z_, r_, u_;
  std::vector<int> A_;
  Eigen::Index iq_ = 0;
  double r_norm_ = 1.0;
};

}  // namespace detail

/// Goldfarb-Idnani projection. `chol_lower` is the lower Cholesky factor of
/// V. Throws EstimationError on infeasibility, degeneracy or iteration limit.
inline Result dual_active_set(const Eigen::VectorXd& center, const Eigen::MatrixXd& chol_lower,
                              const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs, int max_iterations = 10000) {
  const Eigen::MatrixXd N = -A.transpose();
  const Eigen::VectorXd c0 = rhs;
  detail::DualActiveSet solver(chol_lower, center, N, c0);
  return solver.solve(max_iterations);
}

namespace detail {

/// The gradient iterate identifies the binding rows long before it pins
/// down the multipliers. Re-solve the dual exactly on candidate supports
/// (rows with positive multipliers, then rows nearly binding at the
/// iterate) and keep the first that is dual and primal feasible.
inline void polish(const Eigen::MatrixXd& H, const Eigen::VectorXd& lin, Eigen::VectorXd& lambda) {
  const Eigen::Index rows = lambda.size();
  const double scale = 1.0 + lin.cwiseAbs().maxCoeff();
  const Eigen::VectorXd slack = lin + H * lambda;  // rhs - A x at the iterate
  std::vector<std::vector<Eigen::Index>> candidates(2);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (lambda[i] > 0.0) candidates[0].push_back(i);
    if (slack[i] <= 1e-6 * scale) candidates[1].push_back(i);
  }
  for (const auto& S : candidates) {
    if (S.empty()) continue;
    const auto k = static_cast<Eigen::Index>(S.size());
    Eigen::MatrixXd Hs(k, k);
    Eigen::VectorXd ls(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      ls[a] = lin[S[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < k; ++b) Hs(a, b) = H(S[static_cast<std::size_t>(a)], S[static_cast<std::size_t>(b)]);
    }
    const Eigen::VectorXd sol = Hs.completeOrthogonalDecomposition().solve(-ls);
    if (sol.minCoeff() < 0.0) continue;
    Eigen::VectorXd trial = Eigen::VectorXd::Zero(rows);
    for (Eigen::Index a = 0; a < k; ++a) trial[S[static_cast<std::size_t>(a)]] = sol[a];
    // rhs - A x(λ) = lin + H λ: nonnegative everywhere, zero on the support
    const Eigen::VectorXd s_trial = H * trial + lin;
    if (s_trial.minCoeff() < -1e-12 * scale) continue;
    bool binding = true;
    for (auto i : S) binding = binding && std::abs(s_trial[i]) <= 1e-10 * scale;
    if (!binding) continue;
    lambda = trial;
    return;
  }
}

}  // namespace detail

/// Projected gradient with exact line search on the dual
///   minimize 0.5 λ'Hλ + λ'(rhs - A c),  λ >= 0,   H = A V A',
/// recovering x = c - V A'λ.
inline Result dual_projected_gradient(const Eigen::VectorXd& center, const Eigen::MatrixXd& cov,
                                      const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs,
                                      int max_iterations = 100000, double tolerance = 1e-10) {
  const Eigen::MatrixXd VAt = cov * A.transpose();
  const Eigen::MatrixXd H = A * VAt;
  const Eigen::VectorXd lin = rhs - A * center;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  const double lipschitz = std::max(es.eigenvalues().maxCoeff(), 1e-300);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(A.rows());
  auto objective = [&](const Eigen::VectorXd& l) { return 0.5 * l.dot(H * l) + l.dot(lin); };
  double obj = 0.0;
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::VectorXd g = H * lambda + lin;
    const Eigen::VectorXd target = (lambda - g / lipschitz).cwiseMax(0.0);
    const Eigen::VectorXd dir = target - lambda;
    const double curvature = dir.dot(H * dir);
    if (dir.norm() == 0.0) break;
    double step = curvature > 0.0 ? std::clamp(-g.dot(dir) / curvature, 0.0, 1.0) : 1.0;
    lambda = (lambda + step * dir).cwiseMax(0.0);
    const double next = objective(lambda);
    const bool converged = std::abs(obj - next) <= tolerance * (1.0 + std::abs(next));
    obj = next;
    if (converged) break;
  }
  if (it >= max_iterations) throw EstimationError("QP: projected-gradient fallback did not converge");
  detail::polish(H, lin, lambda);
  Result out;
  out.x = center - VAt * lambda;
  out.multipliers = lambda;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] > 0.0) out.active.push_back(static_cast<int>(i));
  out.iterations = it;
  out.used_fallback = true;
  return out;
}

}  // namespace robrad::qp
