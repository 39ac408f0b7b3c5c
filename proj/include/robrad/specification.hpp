#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "robrad/dataset.hpp"
#include "robrad/error.hpp"
#include "robrad/filter.hpp"

namespace robrad {

/// Maximum number of levels a categorical control may expand into.
inline constexpr std::size_t kMaxCategoricalLevels = 200;

/// One regression: outcome on treatment plus controls, optionally weighted
/// and restricted to the rows passing `row_filter`.
struct Specification {
  std::string label;
  std::string outcome;
  std::string treatment;
  std::vector<std::string> controls;
  std::optional<std::string> weights;
  RowFilter row_filter;
  bool is_main = false;
  bool must_equal_main = false;

  void validate() const {
    if (outcome.empty() || treatment.empty())
      throw ConfigError("specification '" + label + "': outcome and treatment are required");
    if (std::find(controls.begin(), controls.end(), outcome) != controls.end())
      throw ConfigError("specification '" + label + "': outcome '" + outcome + "' is also listed as a control");
    if (std::find(controls.begin(), controls.end(), treatment) != controls.end())
      throw ConfigError("specification '" + label + "': treatment '" + treatment + "' is also listed as a control");
    if (std::set<std::string>(controls.begin(), controls.end()).size() != controls.size())
      throw ConfigError("specification '" + label + "': duplicate control");
    if (is_main && must_equal_main)
      throw ConfigError("specification '" + label + "': the main specification cannot be must_equal_main");
  }
};

/// Checks the study-level rules: the main specification exists, is unique,
/// and comes first. Returns specs reordered so that the main one is index 0.
inline std::vector<Specification> order_study(std::vector<Specification> specs) {
  if (specs.size() < 2) throw ConfigError("a study needs a main specification and at least one check");
  auto mains = std::count_if(specs.begin(), specs.end(), [](const Specification& s) { return s.is_main; });
  if (mains != 1) throw ConfigError("exactly one main specification is required (found " + std::to_string(mains) + ")");
  for (const auto& s : specs) s.validate();
  std::stable_partition(specs.begin(), specs.end(), [](const Specification& s) { return s.is_main; });
  return specs;
}

/// d_j: which rows a specification uses.
struct SubsampleMask {
  std::vector<bool> included;
  std::size_t n_j = 0;
  std::vector<std::size_t> index_set;
};

namespace detail {

inline const Column& numeric_or_throw(const Dataset& data, const std::string& name, const std::string& role) {
  const Column& col = data.column(name);
  if (col.kind != ColumnKind::Numeric) throw ConfigError(role + " column '" + name + "' must be numeric");
  return col;
}

}  // namespace detail

/// Number of regressors (intercept, treatment, expanded controls) the
/// specification has on the rows flagged in `included`. A categorical
/// control contributes one column per level present on those rows, minus one.
inline std::size_t regressor_count(const Dataset& data, const Specification& spec, const std::vector<bool>& included) {
  std::size_t k = 2;
  for (const auto& name : spec.controls) {
    const Column& col = data.column(name);
    if (col.kind == ColumnKind::Numeric) {
      ++k;
      continue;
    }
    if (col.levels.size() > kMaxCategoricalLevels)
      throw ConfigError("categorical control '" + name + "' has " + std::to_string(col.levels.size()) +
                        " levels (cap " + std::to_string(kMaxCategoricalLevels) + ")");
    std::vector<bool> present(col.levels.size(), false);
    for (std::size_t i = 0; i < included.size(); ++i)
      if (included[i]) present[static_cast<std::size_t>(col.codes[i])] = true;
    auto levels = static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
    k += levels > 0 ? levels - 1 : 0;
  }
  return k;
}

/// Builds d_j: a row is included iff outcome, treatment, every control and
/// the weight are non-missing there and the row filter passes. Throws when
/// a referenced column is absent or, with `enforce_floor`, when fewer than
/// (regressors + 2) rows remain.
inline SubsampleMask build_mask(const Dataset& data, const Specification& spec, bool enforce_floor = true) {
  std::vector<const Column*> required;
  required.push_back(&detail::numeric_or_throw(data, spec.outcome, "outcome"));
  required.push_back(&detail::numeric_or_throw(data, spec.treatment, "treatment"));
  for (const auto& c : spec.controls) required.push_back(&data.column(c));
  if (spec.weights) required.push_back(&detail::numeric_or_throw(data, *spec.weights, "weights"));
  for (const auto& c : spec.row_filter.columns()) (void)data.column(c);
  const Column* weights = spec.weights ? &data.column(*spec.weights) : nullptr;

  SubsampleMask mask;
  mask.included.assign(data.row_count(), false);
  for (std::size_t i = 0; i < data.row_count(); ++i) {
    bool ok = std::none_of(required.begin(), required.end(), [i](const Column* c) { return c->is_missing(i); });
    ok = ok && spec.row_filter.evaluate(data, i);
    if (ok && weights && weights->numeric[i] < 0.0)
      throw ConfigError("specification '" + spec.label + "': negative weight at row " + std::to_string(i + 1));
    if (ok) {
      mask.included[i] = true;
      mask.index_set.push_back(i);
    }
  }
  mask.n_j = mask.index_set.size();
  if (!enforce_floor) return mask;
  const std::size_t k = regressor_count(data, spec, mask.included);
  if (mask.n_j < k + 2)
    throw EstimationError("specification '" + spec.label + "' keeps " + std::to_string(mask.n_j) +
                          " rows, below the floor of " + std::to_string(k + 2) + " for " + std::to_string(k) +
                          " regressors");
  return mask;
}

struct SubsampleShare {
  double share = 0.0;
  bool below_floor = false;
};

/// n_j / n, flagged when below `floor` (default 5%).
inline SubsampleShare subsample_share(const SubsampleMask& mask, std::size_t n, double floor = 0.05) {
  if (n == 0) throw ConfigError("subsample_share: n must be positive");
  double share = static_cast<double>(mask.n_j) / static_cast<double>(n);
  return {share, share < floor};
}

}  // namespace robrad
