#pragma once

// Joint covariance of the stacked estimates: trimmed (row or cluster)
// bootstrap, and an i.i.d. plug-in estimator built from influence rows.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "robrad/dataset.hpp"
#include "robrad/error.hpp"
#include "robrad/parallel.hpp"
#include "robrad/regress.hpp"
#include "robrad/rng.hpp"
#include "robrad/specification.hpp"

namespace robrad {

enum class ResampleMode { IidRows, Cluster };

struct BootstrapConfig {
  int replications = 1000;
  std::uint64_t seed = 20240601;
  std::optional<std::string> cluster_column;
  std::optional<double> trim_threshold;  // nullopt = auto
  ResampleMode mode = ResampleMode::IidRows;
  unsigned threads = 0;                  // 0 = machine parallelism

  void validate() const {
    if (replications < 2) throw ConfigError("bootstrap: replications must be at least 2");
    if (trim_threshold && !(*trim_threshold > 0.0)) throw ConfigError("bootstrap: trim_threshold must be positive");
    if (mode == ResampleMode::Cluster && !cluster_column)
      throw ConfigError("bootstrap: cluster mode needs a cluster column");
  }
};

struct CovarianceEstimate {
  Eigen::MatrixXd matrix;
  int n_trimmed = 0;
  int n_redrawn = 0;           // unestimable resamples that were redrawn
  double trim_threshold = 0.0;
  Eigen::MatrixXd replicate_draws;  // B x (m+1), before trimming
  std::vector<bool> trimmed;        // per replication
};

/// Default trimming level: scale * exp(sqrt(n) / 8), which satisfies
/// tau^4 = O(exp(sqrt(n))).
inline double auto_trim_threshold(std::size_t n, double scale) {
  if (n < 1) throw ConfigError("auto_trim_threshold: n must be at least 1");
  if (!(scale > 0.0)) throw ConfigError("auto_trim_threshold: scale must be positive");
  return scale * std::exp(std::sqrt(static_cast<double>(n)) / 8.0);
}

namespace detail {

/// Rejects matrices with an eigenvalue below -1e-10 * trace; never repairs.
inline void require_psd(const Eigen::MatrixXd& m, const char* what) {
  if (m.size() == 0) return;
  const double trace = m.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-10 * std::max(trace, 0.0))
    throw EstimationError(std::string(what) + ": covariance is not positive semidefinite (min eigenvalue " +
                          std::to_string(min_eig) + ")");
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& draws) {
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(draws.rows() - 1);
  return (cov + cov.transpose()) * 0.5;
}

}  // namespace detail

/// Trimmed bootstrap covariance of θ̂.
///
/// Each replication resamples rows (or whole clusters, keeping the cluster
/// count) with replacement, rebuilds every mask and refits every
/// specification on the same resample. Draws with ||θ̂ᵇ|| above the trimming
/// level are replaced by the zero vector. Resamples on which some
/// specification is unestimable are redrawn from the next stream of the same
/// replication; more than 10% redraws overall is an error.
inline CovarianceEstimate bootstrap_cov(const Dataset& data, const std::vector<Specification>& specs,
                                        const BootstrapConfig& config) {
  config.validate();
  const Eigen::VectorXd theta_hat = estimate_study(data, specs).theta;
  const auto B = static_cast<std::size_t>(config.replications);
  const auto dim = theta_hat.size();

  std::vector<std::size_t> cluster_of(data.row_count());
  if (config.mode == ResampleMode::Cluster) {
    Dataset keyed = data;
    keyed.set_cluster_column(*config.cluster_column);
    cluster_of = keyed.cluster_ids();
  } else {
    for (std::size_t i = 0; i < cluster_of.size(); ++i) cluster_of[i] = i;
  }
  std::size_t clusters = 0;
  for (auto c : cluster_of) clusters = std::max(clusters, c + 1);
  std::vector<std::vector<std::size_t>> members(clusters);
  for (std::size_t i = 0; i < cluster_of.size(); ++i) members[cluster_of[i]].push_back(i);

  CovarianceEstimate out;
  out.trim_threshold = config.trim_threshold ? *config.trim_threshold
                                             : auto_trim_threshold(data.row_count(), theta_hat.norm() + 1.0);
  out.replicate_draws.resize(static_cast<Eigen::Index>(B), dim);
  std::vector<int> redraws(B, 0);
  const int max_attempts = std::max(10, config.replications / 10 + 1);

  parallel_for(B, config.threads, [&](std::size_t b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= max_attempts)
        throw EstimationError("bootstrap: replication " + std::to_string(b) + " unestimable after " +
                              std::to_string(max_attempts) + " redraws");
      auto engine = rng::make_engine(config.seed, b, static_cast<std::uint64_t>(attempt));
      std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
      std::vector<std::size_t> rows;
      rows.reserve(data.row_count());
      for (std::size_t c = 0; c < clusters; ++c) {
        const auto& mem = members[pick(engine)];
        rows.insert(rows.end(), mem.begin(), mem.end());
      }
      try {
        Dataset resample = data.take(rows);
        StudyFit sf = fit_study(resample, specs);
        for (Eigen::Index j = 0; j < dim; ++j)
          out.replicate_draws(static_cast<Eigen::Index>(b), j) = sf.fits[static_cast<std::size_t>(j)].theta_hat;
        redraws[b] = attempt;
        return;
      } catch (const EstimationError&) {
      }
    }
  });

  for (int r : redraws) out.n_redrawn += r;
  if (static_cast<double>(out.n_redrawn) > 0.1 * static_cast<double>(B))
    throw EstimationError("bootstrap: " + std::to_string(out.n_redrawn) + " of " + std::to_string(B) +
                          " resamples were unestimable (more than 10%); specifications are fragile");

  Eigen::MatrixXd recorded = out.replicate_draws;
  out.trimmed.assign(B, false);
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    if (recorded.row(row).norm() > out.trim_threshold) {
      recorded.row(row).setZero();
      out.trimmed[b] = true;
      ++out.n_trimmed;
    }
  }
  out.matrix = detail::sample_covariance(recorded);
  detail::require_psd(out.matrix, "bootstrap_cov");
  return out;
}

/// Plug-in covariance under i.i.d. rows: (1/n^2) Σ ψ_i ψ_i' over the
/// influence rows, which carry the delta-method correction for the
/// estimated denominator.
inline CovarianceEstimate plugin_cov_iid(const EstimateBundle& bundle) {
  if (bundle.influence_rows.rows() == 0 || bundle.influence_rows.cols() != bundle.theta.size())
    throw ConfigError("plugin_cov_iid: influence rows are not populated");
  const double n = static_cast<double>(bundle.influence_rows.rows());
  const Eigen::RowVectorXd mean = bundle.influence_rows.colwise().mean();
  const Eigen::MatrixXd c = bundle.influence_rows.rowwise() - mean;
  CovarianceEstimate out;
  out.matrix = (c.transpose() * c) / (n * n);
  out.matrix = (out.matrix + out.matrix.transpose()) * 0.5;
  for (Eigen::Index j = 0; j < out.matrix.rows(); ++j)
    if (!(out.matrix(j, j) > 0.0)) throw EstimationError("plugin_cov_iid: zero variance for specification " + std::to_string(j));
  detail::require_psd(out.matrix, "plugin_cov_iid");
  return out;
}

}  // namespace robrad
