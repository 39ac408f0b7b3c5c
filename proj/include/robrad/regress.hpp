#pragma once

// Per-specification least squares through FWL residualization, and the
// stacked estimate vector used by the covariance and testing stages.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "robrad/dataset.hpp"
#include "robrad/error.hpp"
#include "robrad/specification.hpp"

namespace robrad {

/// Relative pivot threshold used to decide the rank of a design.
inline constexpr double kRankTolerance = 1e-10;

/// Subsample design for one specification: controls block (with intercept),
/// treatment, outcome and analytic weights, rows in mask order.
struct Design {
  Eigen::MatrixXd controls;  // n_j x (1 + expanded controls)
  Eigen::VectorXd treatment;
  Eigen::VectorXd outcome;
  Eigen::VectorXd weights;
};

inline Design build_design(const Dataset& data, const Specification& spec, const SubsampleMask& mask) {
  const auto nj = static_cast<Eigen::Index>(mask.n_j);
  // Column generators for the controls block.
  std::vector<Eigen::VectorXd> blocks;
  for (const auto& name : spec.controls) {
    const Column& col = data.column(name);
    if (col.kind == ColumnKind::Numeric) {
      Eigen::VectorXd v(nj);
      for (Eigen::Index r = 0; r < nj; ++r) v[r] = col.numeric[mask.index_set[static_cast<std::size_t>(r)]];
      blocks.push_back(std::move(v));
      continue;
    }
    if (col.levels.size() > kMaxCategoricalLevels)
      throw ConfigError("categorical control '" + name + "' has " + std::to_string(col.levels.size()) +
                        " levels (cap " + std::to_string(kMaxCategoricalLevels) + ")");
    std::vector<bool> present(col.levels.size(), false);
    for (std::size_t i : mask.index_set) present[static_cast<std::size_t>(col.codes[i])] = true;
    bool baseline_dropped = false;
    for (std::size_t level = 0; level < col.levels.size(); ++level) {
      if (!present[level]) continue;
      if (!baseline_dropped) {
        baseline_dropped = true;
        continue;
      }
      Eigen::VectorXd v(nj);
      for (Eigen::Index r = 0; r < nj; ++r)
        v[r] = col.codes[mask.index_set[static_cast<std::size_t>(r)]] == static_cast<int>(level) ? 1.0 : 0.0;
      blocks.push_back(std::move(v));
    }
  }
  Design d;
  d.controls.resize(nj, static_cast<Eigen::Index>(blocks.size()) + 1);
  d.controls.col(0).setOnes();
  for (std::size_t b = 0; b < blocks.size(); ++b) d.controls.col(static_cast<Eigen::Index>(b) + 1) = blocks[b];
  const Column& y = data.column(spec.outcome);
  const Column& D = data.column(spec.treatment);
  d.outcome.resize(nj);
  d.treatment.resize(nj);
  d.weights.setOnes(nj);
  const Column* w = spec.weights ? &data.column(*spec.weights) : nullptr;
  for (Eigen::Index r = 0; r < nj; ++r) {
    std::size_t i = mask.index_set[static_cast<std::size_t>(r)];
    d.outcome[r] = y.numeric[i];
    d.treatment[r] = D.numeric[i];
    if (w) d.weights[r] = w->numeric[i];
  }
  return d;
}

/// Result of one FWL fit on a subsample. Vectors are indexed by position in
/// the mask's index_set.
struct FwlFit {
  double theta_hat = 0.0;
  Eigen::VectorXd residualized_treatment;  // u: D residualized on intercept + controls
  double denom = 0.0;                      // weighted mean of u^2 over the subsample
  Eigen::VectorXd outcome_values;          // y on the subsample
  Eigen::VectorXd outcome_residuals;       // e: full-regression residual
  Eigen::VectorXd weights;
  double se_conventional = 0.0;            // HC1, reporting only
  double r2_treatment = 0.0;               // R^2 of D on intercept + controls
  std::size_t regressors = 0;              // intercept + treatment + controls
};

/// Fits one specification on its subsample.
///
/// The treatment and the outcome are residualized on the intercept and the
/// controls with a column-pivoted QR of the weighted controls block; the
/// coefficient is then sum(w u y) / sum(w u^2).
inline FwlFit fit_fwl(const Dataset& data, const Specification& spec, const SubsampleMask& mask) {
  Design d = build_design(data, spec, mask);
  const Eigen::Index nj = d.controls.rows();
  const Eigen::Index kc = d.controls.cols();
  if (nj < kc + 2)
    throw EstimationError("specification '" + spec.label + "': too few rows (" + std::to_string(nj) + ") for " +
                          std::to_string(kc + 1) + " regressors");
  const Eigen::VectorXd sw = d.weights.cwiseSqrt();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * d.controls);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < kc)
    throw EstimationError("specification '" + spec.label + "': rank-deficient design (collinear controls), rank " +
                          std::to_string(qr.rank()) + " of " + std::to_string(kc));

  FwlFit fit;
  fit.regressors = static_cast<std::size_t>(kc) + 1;
  fit.weights = d.weights;
  fit.outcome_values = d.outcome;
  Eigen::VectorXd gamma = qr.solve(sw.cwiseProduct(d.treatment));
  fit.residualized_treatment = d.treatment - d.controls * gamma;
  const Eigen::VectorXd& u = fit.residualized_treatment;

  const double wuu = (d.weights.array() * u.array().square()).sum();
  const double wdd = (d.weights.array() * d.treatment.array().square()).sum();
  if (!(wuu > 1e-20 * wdd) || !(wuu > 0.0))
    throw EstimationError("specification '" + spec.label + "': treatment has no residual variation after controls");

  fit.denom = wuu / static_cast<double>(nj);
  fit.theta_hat = (d.weights.array() * u.array() * d.outcome.array()).sum() / wuu;

  Eigen::VectorXd delta = qr.solve(sw.cwiseProduct(d.outcome));
  fit.outcome_residuals = d.outcome - d.controls * delta - fit.theta_hat * u;

  const double wsum = d.weights.sum();
  const double dbar = d.weights.dot(d.treatment) / wsum;
  const double tss = (d.weights.array() * (d.treatment.array() - dbar).square()).sum();
  fit.r2_treatment = tss > 0.0 ? std::max(0.0, 1.0 - wuu / tss) : 0.0;

  const double k = static_cast<double>(fit.regressors);
  const double meat = (d.weights.array().square() * u.array().square() * fit.outcome_residuals.array().square()).sum();
  fit.se_conventional = std::sqrt(static_cast<double>(nj) / (static_cast<double>(nj) - k) * meat) / wuu;
  return fit;
}

/// Stacked estimates θ̂ (main first) with per-observation contributions.
struct EstimateBundle {
  std::vector<std::string> labels;
  Eigen::VectorXd theta;
  Eigen::MatrixXd cov;  // covariance of θ̂ itself (not scaled by n); empty until estimated
  std::size_t n = 0;
  std::vector<std::size_t> n_per_spec;
  /// w u y / denom_j on included rows, zero elsewhere. (n/n_j) times the
  /// column mean reproduces theta[j].
  Eigen::MatrixXd moment_rows;
  /// Influence contributions w u e / mean_n(w u^2); the column mean is zero
  /// and (1/n^2) Σ ψ ψ' is the plug-in covariance of θ̂.
  Eigen::MatrixXd influence_rows;
  std::vector<double> se_conventional;

  std::size_t checks() const { return static_cast<std::size_t>(theta.size()) - 1; }
};

inline EstimateBundle stack_estimates(const std::vector<FwlFit>& fits, const std::vector<SubsampleMask>& masks,
                                      std::vector<std::string> labels = {}) {
  if (fits.empty() || fits.size() != masks.size())
    throw ConfigError("stack_estimates: need one mask per fit");
  const std::size_t n = masks.front().included.size();
  for (std::size_t j = 0; j < fits.size(); ++j) {
    if (masks[j].included.size() != n) throw ConfigError("stack_estimates: masks have different row counts");
    if (static_cast<std::size_t>(fits[j].residualized_treatment.size()) != masks[j].n_j)
      throw ConfigError("stack_estimates: fit " + std::to_string(j) + " does not match its mask");
  }
  EstimateBundle b;
  const auto cols = static_cast<Eigen::Index>(fits.size());
  b.labels = std::move(labels);
  if (b.labels.empty())
    for (std::size_t j = 0; j < fits.size(); ++j) b.labels.push_back("spec" + std::to_string(j));
  b.n = n;
  b.theta.resize(cols);
  b.moment_rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), cols);
  b.influence_rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const FwlFit& f = fits[static_cast<std::size_t>(j)];
    const SubsampleMask& m = masks[static_cast<std::size_t>(j)];
    b.theta[j] = f.theta_hat;
    b.n_per_spec.push_back(m.n_j);
    b.se_conventional.push_back(f.se_conventional);
    const double mean_n = f.denom * static_cast<double>(m.n_j) / static_cast<double>(n);
    for (std::size_t r = 0; r < m.n_j; ++r) {
      const auto i = static_cast<Eigen::Index>(m.index_set[r]);
      const auto rr = static_cast<Eigen::Index>(r);
      const double wu = f.weights[rr] * f.residualized_treatment[rr];
      b.moment_rows(i, j) = wu * f.outcome_values[rr] / f.denom;
      b.influence_rows(i, j) = wu * f.outcome_residuals[rr] / mean_n;
    }
  }
  return b;
}

/// Masks and fits for every specification on `data`.
struct StudyFit {
  std::vector<SubsampleMask> masks;
  std::vector<FwlFit> fits;
};

inline StudyFit fit_study(const Dataset& data, const std::vector<Specification>& specs) {
  StudyFit out;
  out.masks.reserve(specs.size());
  out.fits.reserve(specs.size());
  for (const auto& spec : specs) {
    out.masks.push_back(build_mask(data, spec));
    out.fits.push_back(fit_fwl(data, spec, out.masks.back()));
  }
  return out;
}

inline EstimateBundle estimate_study(const Dataset& data, const std::vector<Specification>& specs) {
  StudyFit sf = fit_study(data, specs);
  std::vector<std::string> labels;
  for (const auto& s : specs) labels.push_back(s.label);
  return stack_estimates(sf.fits, sf.masks, std::move(labels));
}

}  // namespace robrad
