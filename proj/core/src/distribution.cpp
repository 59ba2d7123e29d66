#include "biasengine/distribution.hpp"

#include <cmath>
#include <numeric>

#include "biasengine/errors.hpp"

namespace biasengine {

namespace {
double checked_sum(const std::string& axis, const std::vector<double>& weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DataError("negative or NaN weight on axis '" + axis + "'");
    sum += w;
  }
  return sum;
}
}  // namespace

CategoricalDistribution::CategoricalDistribution(std::string axis, std::vector<double> weights)
    : axis_(std::move(axis)), weights_(std::move(weights)) {
  total_ = checked_sum(axis_, weights_);
}

CategoricalDistribution::CategoricalDistribution(std::string axis, std::vector<double> weights,
                                                 double total)
    : axis_(std::move(axis)), weights_(std::move(weights)), total_(total) {
  double sum = checked_sum(axis_, weights_);
  if (total_ < sum - kNormalizationTol) {
    throw DataError("total below weight sum on axis '" + axis_ + "'");
  }
}

bool CategoricalDistribution::is_normalized() const {
  return std::fabs(total_ - 1.0) <= kNormalizationTol;
}

CategoricalDistribution distribution_from_annotations(const AnnotatedImageSet& set,
                                                      const BiasAxis& axis, bool drop_unknown) {
  std::vector<double> weights(axis.values.size(), 0.0);
  std::size_t unknown = 0;
  for (const auto& annotation : set.annotations) {
    const std::string& value = annotation.value_for(axis.name);
    int idx = axis.index_of(value);
    if (idx >= 0) {
      weights[static_cast<std::size_t>(idx)] += 1.0;
    } else {
      ++unknown;
    }
  }
  double counted = static_cast<double>(set.size() - unknown);
  double total = drop_unknown ? counted : static_cast<double>(set.size());
  return CategoricalDistribution(axis.name, std::move(weights), total);
}

CategoricalDistribution normalize(const CategoricalDistribution& d) {
  if (d.empty()) {
    throw EmptyDistributionError("cannot normalize empty distribution on axis '" + d.axis() + "'");
  }
  std::vector<double> weights = d.weights();
  for (double& w : weights) w /= d.total();
  return CategoricalDistribution(d.axis(), std::move(weights), 1.0);
}

CategoricalDistribution sum_distributions(std::span<const CategoricalDistribution> ds) {
  if (ds.empty()) throw DataError("sum_distributions: empty input list");
  const auto& first = ds.front();
  std::vector<double> weights(first.size(), 0.0);
  double total = 0.0;
  for (const auto& d : ds) {
    if (d.axis() != first.axis()) {
      throw DataError("sum_distributions: axis mismatch ('" + first.axis() + "' vs '" + d.axis() +
                      "')");
    }
    if (d.size() != first.size()) {
      throw DataError("sum_distributions: arity mismatch on axis '" + first.axis() + "'");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += d.weights()[i];
    total += d.total();
  }
  return CategoricalDistribution(first.axis(), std::move(weights), total);
}

CategoricalDistribution uniform_distribution(const BiasAxis& axis) {
  std::size_t k = axis.values.size();
  std::vector<double> weights(k, 1.0 / static_cast<double>(k));
  return CategoricalDistribution(axis.name, std::move(weights), 1.0);
}

}  // namespace biasengine
