#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasengine/annotations.hpp"
#include "biasengine/axis.hpp"
#include "biasengine/distribution.hpp"

namespace biasengine {

/// Per-axis ideal ("unbiased") target distributions. Defaults to uniform
/// over each axis; individual axes can be overridden with real-world or
/// custom targets.
class IdealSet {
 public:
  IdealSet() = default;

  static IdealSet uniform(const AxisSet& axes);

  /// Replace the ideal for one axis. The distribution is normalized here;
  /// throws on arity mismatch or empty mass.
  void set(const BiasAxis& axis, const CategoricalDistribution& ideal);

  /// Throws ConfigError when the axis has no ideal.
  const CategoricalDistribution& for_axis(const std::string& name) const;

  const std::map<std::string, CategoricalDistribution>& all() const { return ideals_; }

 private:
  std::map<std::string, CategoricalDistribution> ideals_;
};

/// Everything generated for one prompt: the initial image set plus one
/// counterfactual set per (axis, value).
struct PromptData {
  AnnotatedImageSet init;
  std::map<Intervention, AnnotatedImageSet> cf_sets;

  const AnnotatedImageSet* find_cf(const std::string& axis, const std::string& value) const;
};

/// (axis, value) pairs of `axes` that have no counterfactual set in `data`.
std::vector<Intervention> missing_coverage(const PromptData& data, const AxisSet& axes);

/// The full record of one intervention measurement.
struct InterventionResult {
  std::string source_axis;
  std::string target_axis;
  CategoricalDistribution d_init;        // normalized
  CategoricalDistribution d_intervened;  // normalized
  double w_init = 0.0;
  double w_intervened = 0.0;
  double is_value = 0.0;  // w_init - w_intervened, in [-1, 1]
};

/// Intersectional Sensitivity values: rows are intervened axes (full axis
/// set, canonical order), columns the measured subset.
class IntersectionalityMatrix {
 public:
  IntersectionalityMatrix() = default;
  IntersectionalityMatrix(std::vector<std::string> row_axes, std::vector<std::string> col_axes,
                          std::vector<std::vector<double>> values,
                          std::map<std::string, std::vector<double>> ideals);

  const std::vector<std::string>& row_axes() const { return row_axes_; }
  const std::vector<std::string>& col_axes() const { return col_axes_; }
  const std::vector<std::vector<double>>& values() const { return values_; }
  const std::map<std::string, std::vector<double>>& ideals() const { return ideals_; }

  double at(std::size_t row, std::size_t col) const { return values_[row][col]; }
  int row_index(const std::string& axis) const;
  int col_index(const std::string& axis) const;

  /// Rows and columns cover the same axes in the same order.
  bool square() const { return row_axes_ == col_axes_; }

 private:
  std::vector<std::string> row_axes_;
  std::vector<std::string> col_axes_;
  std::vector<std::vector<double>> values_;
  std::map<std::string, std::vector<double>> ideals_;  // per measured axis
};

/// Empirical distribution of `axis` in the initial set (normalized) and
/// its bias deviation from the ideal.
std::pair<CategoricalDistribution, double> initial_bias(const AnnotatedImageSet& init_set,
                                                        const BiasAxis& axis,
                                                        const CategoricalDistribution& ideal);

/// Target-axis distribution after an intervention: the counterfactual
/// sets' counts on `target` combined with equal weight per counterfactual
/// (raw counts when the usable totals agree, per-set normalized masses
/// otherwise), then normalized.
CategoricalDistribution intervention_distribution(
    std::span<const AnnotatedImageSet* const> cf_sets, const BiasAxis& target);

/// IS_xy = normalized bias of `target` before minus after intervening on
/// `source`. Positive: mitigating the source improves the target axis.
InterventionResult intersectional_sensitivity(const AnnotatedImageSet& init_set,
                                              std::span<const AnnotatedImageSet* const> cf_sets,
                                              const BiasAxis& source, const BiasAxis& target,
                                              const CategoricalDistribution& ideal);

/// Full matrix over rows = every axis in `axes`, columns = `measured`.
/// Requires complete counterfactual coverage for every row axis; the
/// error lists every missing (axis, value) pair.
IntersectionalityMatrix build_matrix(const PromptData& data, const AxisSet& axes,
                                     std::span<const std::string> measured,
                                     const IdealSet& ideals);

/// Sum of absolute off-diagonal entries of a square matrix: the aggregate
/// entanglement between axes. Throws DataError on non-square input.
double aggregate_entanglement(const IntersectionalityMatrix& m);

}  // namespace biasengine
