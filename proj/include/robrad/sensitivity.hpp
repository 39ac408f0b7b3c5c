#pragma once

// Maps the robustness radius into an omitted-variable-bias sensitivity
// parameter: the relative selection-on-unobservables level τ̂ at which the
// implied bias bound equals b_rr, and the bias bound implied by a given τ̄.
//
// Note on the finite branch of the bias bound: its usual statement carries
// the condition 0 <= τ̄² <= sqrt(1 - R²), while the formula's denominator is
// 1 - R² - τ̄². We return a finite bound exactly when the denominator is
// positive (τ̄² < 1 - R², which implies the printed condition) and +inf
// otherwise.

#include <cmath>
#include <limits>

#include "robrad/error.hpp"
#include "robrad/regress.hpp"

namespace robrad {

struct SensitivityInputs {
  double b_rr = 0.0;
  double var_ratio = 1.0;  // var(e_D) / var(e_y): treatment-on-controls over outcome residual variance
  double r2_dx = 0.0;      // R² of the treatment on the main specification's controls

  void validate(bool need_b = true) const {
    if (need_b && !(b_rr >= 0.0)) throw ConfigError("sensitivity: b_rr must be nonnegative");
    if (!(var_ratio > 0.0) || !std::isfinite(var_ratio)) throw ConfigError("sensitivity: var_ratio must be positive");
    if (!(r2_dx >= 0.0 && r2_dx < 1.0)) throw ConfigError("sensitivity: r2_dx must lie in [0, 1)");
  }
};

/// τ̂ = sqrt( b² v (1 - R²) / (R² + b² v) ), zero at b = 0.
inline double tau_from_radius(const SensitivityInputs& in) {
  in.validate();
  if (in.b_rr == 0.0) return 0.0;
  if (std::isinf(in.b_rr)) return std::sqrt(1.0 - in.r2_dx);
  const double bv = in.b_rr * in.b_rr * in.var_ratio;
  return std::sqrt(bv * (1.0 - in.r2_dx) / (in.r2_dx + bv));
}

/// b^UN = sqrt( (1/v) τ̄² R² / (1 - R² - τ̄²) ) while the denominator is
/// positive, +inf otherwise. `in.b_rr` is ignored.
inline double bias_from_tau(double tau_bar, const SensitivityInputs& in) {
  in.validate(false);
  if (!(tau_bar >= 0.0)) throw ConfigError("sensitivity: tau_bar must be nonnegative");
  const double t2 = tau_bar * tau_bar;
  const double denom = 1.0 - in.r2_dx - t2;
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(t2 * in.r2_dx / (in.var_ratio * denom));
}

/// Sample counterparts from the main specification's fit: var_ratio is
/// mean(w u²) / mean(w e²) and r2_dx the treatment-on-controls R².
inline SensitivityInputs sensitivity_inputs(const FwlFit& main_fit, double b_rr) {
  const auto& w = main_fit.weights;
  const double uu = (w.array() * main_fit.residualized_treatment.array().square()).sum();
  const double ee = (w.array() * main_fit.outcome_residuals.array().square()).sum();
  if (!(ee > 0.0)) throw EstimationError("sensitivity: main specification has zero residual variance");
  return {b_rr, uu / ee, main_fit.r2_treatment};
}

}  // namespace robrad
