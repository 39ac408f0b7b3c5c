#pragma once

// Independent oracles and random instance generators shared by the unit
// and acceptance tests. Nothing here calls into the code paths it checks.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "robrad/cstest.hpp"
#include "robrad/dataset.hpp"
#include "robrad/filter.hpp"
#include "robrad/specification.hpp"

namespace oracle {

// ---------------------------------------------------------------- chi-square

/// Regularized lower incomplete gamma P(a, x): series below a + 1, Lentz
/// continued fraction for Q above.
inline double lower_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(log_prefix);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-17) break;
  }
  return 1.0 - std::exp(log_prefix) * h;
}

inline double chi2_cdf(int df, double x) { return lower_gamma_p(0.5 * df, 0.5 * x); }

/// Quantile by bisection on the CDF.
inline double chi2_quantile(int df, double p) {
  double lo = 0.0, hi = 1.0;
  while (chi2_cdf(df, hi) < p) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(df, mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Standard normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- least squares

/// Coefficients of the weighted regression y ~ X from the normal equations
/// X'WX β = X'Wy, solved in long double by Gaussian elimination with
/// partial pivoting.
inline std::vector<double> weighted_normal_equations(const std::vector<std::vector<double>>& X,
                                                     const std::vector<double>& y, const std::vector<double>& w) {
  const std::size_t n = y.size(), k = X.empty() ? 0 : X[0].size();
  std::vector<std::vector<long double>> M(k, std::vector<long double>(k + 1, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) M[a][b] += static_cast<long double>(w[i]) * X[i][a] * X[i][b];
      M[a][k] += static_cast<long double>(w[i]) * X[i][a] * y[i];
    }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::fabs(M[r][c]) > std::fabs(M[piv][c])) piv = r;
    std::swap(M[c], M[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const long double f = M[r][c] / M[c][c];
      for (std::size_t cc = c; cc <= k; ++cc) M[r][cc] -= f * M[c][cc];
    }
  }
  std::vector<double> beta(k);
  for (std::size_t c = 0; c < k; ++c) beta[c] = static_cast<double>(M[c][k] / M[c][c]);
  return beta;
}

// ---------------------------------------------------------------- regression data

struct RandomStudy {
  robrad::Dataset data;
  robrad::Specification spec;
};

/// y = 1.5 d + controls + noise with numeric controls x1..xk, a four-level
/// categorical g, optional weights, missing cells and a filter.
inline RandomStudy random_study(std::mt19937_64& rng, std::size_t n, int k, bool weighted, bool missing, bool filtered) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.2, 3.0);
  std::bernoulli_distribution miss(missing ? 0.08 : 0.0);
  std::vector<std::vector<double>> x(static_cast<std::size_t>(k), std::vector<double>(n));
  std::vector<double> y(n), d(n), w(n);
  std::vector<std::string> g(n);
  const char* levels[] = {"a", "b", "c", "d"};
  for (std::size_t i = 0; i < n; ++i) {
    double signal = 0.0;
    for (int c = 0; c < k; ++c) {
      x[static_cast<std::size_t>(c)][i] = z(rng);
      signal += (0.3 + 0.2 * c) * x[static_cast<std::size_t>(c)][i];
    }
    const int lv = static_cast<int>(rng() % 4);
    g[i] = levels[lv];
    d[i] = 0.5 * signal + 0.4 * lv + z(rng);
    y[i] = 1.5 * d[i] + signal - 0.3 * lv + z(rng) * (1.0 + 0.5 * std::abs(x[0][i]));
    w[i] = u(rng);
    if (miss(rng)) y[i] = std::numeric_limits<double>::quiet_NaN();
    if (miss(rng)) x[0][i] = std::numeric_limits<double>::quiet_NaN();
    if (miss(rng)) g[i] = "NA";
    if (miss(rng)) w[i] = std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<robrad::Column> cols{robrad::numeric_column("y", y), robrad::numeric_column("d", d), robrad::categorical_column("g", g),
                           robrad::numeric_column("w", w)};
  RandomStudy s;
  s.spec.label = "rand";
  s.spec.outcome = "y";
  s.spec.treatment = "d";
  for (int c = 0; c < k; ++c) {
    cols.push_back(robrad::numeric_column("x" + std::to_string(c + 1), x[static_cast<std::size_t>(c)]));
    s.spec.controls.push_back("x" + std::to_string(c + 1));
  }
  s.spec.controls.push_back("g");
  if (weighted) s.spec.weights = "w";
  if (filtered) s.spec.row_filter = robrad::RowFilter::parse("x1 > -1.2 or g == b");
  s.data = robrad::Dataset(std::move(cols));
  return s;
}

/// Treatment coefficient from the full weighted regression on the mask,
/// solved by the normal equations. Dummies drop the *last* present level,
/// which changes nothing for the treatment coefficient.
inline double oracle_theta(const robrad::Dataset& data, const robrad::Specification& spec,
                           const robrad::SubsampleMask& mask) {
  std::vector<std::vector<double>> X;
  std::vector<double> y, w;
  std::vector<std::vector<int>> present_levels;
  for (const auto& c : spec.controls) {
    const robrad::Column& col = data.column(c);
    std::vector<int> present;
    if (col.kind == robrad::ColumnKind::Categorical) {
      std::vector<bool> seen(col.levels.size(), false);
      for (auto i : mask.index_set) seen[static_cast<std::size_t>(col.codes[i])] = true;
      for (std::size_t l = 0; l < seen.size(); ++l)
        if (seen[l]) present.push_back(static_cast<int>(l));
      present.pop_back();
    }
    present_levels.push_back(present);
  }
  for (auto i : mask.index_set) {
    std::vector<double> row{1.0, data.column(spec.treatment).numeric[i]};
    for (std::size_t c = 0; c < spec.controls.size(); ++c) {
      const robrad::Column& col = data.column(spec.controls[c]);
      if (col.kind == robrad::ColumnKind::Numeric) row.push_back(col.numeric[i]);
      else
        for (int l : present_levels[c]) row.push_back(col.codes[i] == l ? 1.0 : 0.0);
    }
    X.push_back(row);
    y.push_back(data.column(spec.outcome).numeric[i]);
    w.push_back(spec.weights ? data.column(*spec.weights).numeric[i] : 1.0);
  }
  return weighted_normal_equations(X, y, w)[1];
}

/// y = 1 + 0.5 d + 0.3 x + e with iid homoskedastic errors; `row` numbers
/// rows from 1 for filters.
inline robrad::Dataset homoskedastic(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> y(n), d(n), x(n), row(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = z(rng);
    d[i] = 0.5 * x[i] + z(rng);
    y[i] = 1.0 + 0.5 * d[i] + 0.3 * x[i] + z(rng);
    row[i] = static_cast<double>(i + 1);
  }
  return robrad::Dataset({robrad::numeric_column("y", y), robrad::numeric_column("d", d), robrad::numeric_column("x", x), robrad::numeric_column("row", row)});
}

/// Heteroskedasticity-robust (HC0) variance of the d coefficient from the
/// full design [1, d, x], computed directly.
inline double sandwich_variance(const robrad::Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.row_count());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    X.row(i) << 1.0, data.column("d").numeric[r], data.column("x").numeric[r];
    y[i] = data.column("y").numeric[r];
  }
  const Eigen::MatrixXd XtXi = (X.transpose() * X).inverse();
  const Eigen::VectorXd e = y - X * (XtXi * X.transpose() * y);
  const Eigen::MatrixXd meat = X.transpose() * e.array().square().matrix().asDiagonal() * X;
  return (XtXi * meat * XtXi)(1, 1);
}

// ---------------------------------------------------------------- QP

inline double quad_form(const Eigen::VectorXd& r, const Eigen::MatrixXd& cov) {
  return r.dot(cov.ldlt().solve(r));
}

/// Exact minimum of (θ-μ)'V⁻¹(θ-μ) over Aμ <= rhs by enumerating every
/// candidate active set (equality-constrained minimizers), keeping the
/// feasible ones. Exponential in rows; fine for 2m <= 10.
inline double qp_enumerate(const Eigen::VectorXd& theta, const Eigen::MatrixXd& cov, const Eigen::MatrixXd& A,
                           const Eigen::VectorXd& rhs) {
  const auto rows = A.rows();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << rows); ++mask) {
    std::vector<Eigen::Index> S;
    for (Eigen::Index r = 0; r < rows; ++r)
      if (mask & (1u << r)) S.push_back(r);
    Eigen::VectorXd mu = theta;
    if (!S.empty()) {
      Eigen::MatrixXd As(static_cast<Eigen::Index>(S.size()), A.cols());
      Eigen::VectorXd bs(static_cast<Eigen::Index>(S.size()));
      for (std::size_t k = 0; k < S.size(); ++k) {
        As.row(static_cast<Eigen::Index>(k)) = A.row(S[k]);
        bs[static_cast<Eigen::Index>(k)] = rhs[S[k]];
      }
      const Eigen::MatrixXd G = As * cov * As.transpose();
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
      cod.setThreshold(1e-12);
      mu = theta - cov * As.transpose() * cod.solve(As * theta - bs);
      if ((As * mu - bs).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + bs.cwiseAbs().maxCoeff())) continue;
    }
    if (((A * mu - rhs).array() > 1e-9 * (1.0 + rhs.cwiseAbs().maxCoeff())).any()) continue;
    best = std::min(best, quad_form(theta - mu, cov));
  }
  return best;
}

/// Dense grid search for the radius-style system |μ0 - μj| <= b_j: writes
/// μ = t·1 + (0, s), s in the box Π[-b_j, b_j], minimizes over t in closed
/// form and over s on a grid refined around the incumbent. Every grid point
/// is feasible by construction.
inline double qp_dense_grid(const Eigen::VectorXd& theta, const Eigen::MatrixXd& cov, const std::vector<double>& half_width,
                            int points = 21, int levels = 90) {
  const auto m = static_cast<int>(half_width.size());
  const Eigen::MatrixXd P = cov.inverse();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m + 1);
  const double oPo = ones.dot(P * ones);
  auto value = [&](const std::vector<double>& s) {
    Eigen::VectorXd r = theta;
    for (int j = 0; j < m; ++j) r[j + 1] -= s[static_cast<std::size_t>(j)];
    const double oPr = ones.dot(P * r);
    return r.dot(P * r) - oPr * oPr / oPo;
  };
  std::vector<double> center(static_cast<std::size_t>(m), 0.0), radius(half_width);
  double best = value(center);
  std::vector<double> best_s = center;
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int level = 0; level < levels; ++level) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      std::vector<double> s(static_cast<std::size_t>(m));
      for (int j = 0; j < m; ++j) {
        const auto J = static_cast<std::size_t>(j);
        const double lo = std::max(-half_width[J], center[J] - radius[J]);
        const double hi = std::min(half_width[J], center[J] + radius[J]);
        s[J] = points > 1 ? lo + (hi - lo) * idx[J] / (points - 1) : lo;
      }
      const double v = value(s);
      if (v < best) {
        best = v;
        best_s = s;
      }
      int j = 0;
      while (j < m && ++idx[static_cast<std::size_t>(j)] == points) idx[static_cast<std::size_t>(j++)] = 0;
      if (j == m) break;
    }
    center = best_s;
    for (auto& r : radius) r *= 0.7;
  }
  return std::max(best, 0.0);
}

// ---------------------------------------------------------------- generators

/// Random SPD covariance with unit-ish scale: D C D with a random
/// correlation C built from a Gram matrix.
inline Eigen::MatrixXd random_cov(std::mt19937_64& rng, int dim, double min_eig = 0.05) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> sd(0.3, 2.0);
  Eigen::MatrixXd G(dim, dim + 2);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = z(rng);
  Eigen::MatrixXd C = G * G.transpose() / (dim + 2) + min_eig * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd d = C.diagonal().cwiseSqrt().cwiseInverse();
  C = d.asDiagonal() * C * d.asDiagonal();
  Eigen::VectorXd s(dim);
  for (int i = 0; i < dim; ++i) s[i] = sd(rng);
  return s.asDiagonal() * C * s.asDiagonal();
}

inline Eigen::VectorXd random_theta(std::mt19937_64& rng, int dim, double spread = 2.0) {
  std::normal_distribution<double> z(0.0, spread);
  Eigen::VectorXd t(dim);
  for (int i = 0; i < dim; ++i) t[i] = z(rng);
  return t;
}

}  // namespace oracle
