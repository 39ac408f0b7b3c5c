#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>

#include "robrad/error.hpp"

namespace robrad {

/// p-quantile of the chi-square distribution with `df` degrees of freedom.
/// df = 0 returns 0: with nothing active the test never rejects.
inline double chi2_quantile(int df, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("chi2_quantile: probability must lie in (0, 1), got " + std::to_string(p));
  if (df < 0) throw ConfigError("chi2_quantile: negative degrees of freedom");
  if (df == 0) return 0.0;
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: probability must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace robrad
