#pragma once

#include <span>
#include <string>
#include <vector>

#include "biasengine/annotations.hpp"
#include "biasengine/axis.hpp"

namespace biasengine {

/// Tolerance inside which a distribution counts as normalized.
inline constexpr double kNormalizationTol = 1e-12;

/// Counts or weights over an axis's values, in declared value order.
/// Distributions carry raw counts until a metric explicitly normalizes;
/// `total` can exceed the sum of weights when "unknown" answers were kept
/// in the denominator (drop_unknown = false).
class CategoricalDistribution {
 public:
  CategoricalDistribution() = default;

  /// total defaults to the sum of weights. Throws DataError on negative
  /// weights or on an explicit total below the weight sum.
  CategoricalDistribution(std::string axis, std::vector<double> weights);
  CategoricalDistribution(std::string axis, std::vector<double> weights, double total);

  const std::string& axis() const { return axis_; }
  const std::vector<double>& weights() const { return weights_; }
  double total() const { return total_; }
  std::size_t size() const { return weights_.size(); }

  /// True when no mass was observed at all.
  bool empty() const { return total_ <= 0.0; }
  bool is_normalized() const;

 private:
  std::string axis_;
  std::vector<double> weights_;
  double total_ = 0.0;
};

/// Count each annotation's answer on `axis` into a distribution over the
/// axis's declared values. With drop_unknown (the default for all bias
/// math) "unknown" answers are excluded from the total; otherwise they
/// stay in the denominator as unattributed mass.
CategoricalDistribution distribution_from_annotations(const AnnotatedImageSet& set,
                                                      const BiasAxis& axis,
                                                      bool drop_unknown = true);

/// Scale weights so they sum to 1. Throws EmptyDistributionError when
/// total is zero. Idempotent.
CategoricalDistribution normalize(const CategoricalDistribution& d);

/// Elementwise sum of count distributions over the same axis.
/// Throws DataError on an empty list or an axis/arity mismatch.
CategoricalDistribution sum_distributions(std::span<const CategoricalDistribution> ds);

/// Uniform distribution over an axis's values (each 1/K). The default
/// ideal for every bias measurement.
CategoricalDistribution uniform_distribution(const BiasAxis& axis);

}  // namespace biasengine
