#include "biasengine/biasconnect.hpp"

#include <cmath>

#include "biasengine/errors.hpp"
#include "biasengine/stats.hpp"

namespace biasengine {

IdealSet IdealSet::uniform(const AxisSet& axes) {
  IdealSet out;
  for (const auto& axis : axes) {
    out.ideals_.emplace(axis.name, uniform_distribution(axis));
  }
  return out;
}

void IdealSet::set(const BiasAxis& axis, const CategoricalDistribution& ideal) {
  if (ideal.axis() != axis.name || ideal.size() != axis.values.size()) {
    throw ConfigError("ideal distribution does not match axis '" + axis.name + "'");
  }
  ideals_[axis.name] = normalize(ideal);
}

const CategoricalDistribution& IdealSet::for_axis(const std::string& name) const {
  auto it = ideals_.find(name);
  if (it == ideals_.end()) throw ConfigError("no ideal distribution for axis '" + name + "'");
  return it->second;
}

const AnnotatedImageSet* PromptData::find_cf(const std::string& axis,
                                             const std::string& value) const {
  auto it = cf_sets.find(Intervention{axis, value});
  return it == cf_sets.end() ? nullptr : &it->second;
}

std::vector<Intervention> missing_coverage(const PromptData& data, const AxisSet& axes) {
  std::vector<Intervention> missing;
  for (const auto& axis : axes) {
    for (const auto& value : axis.values) {
      if (data.find_cf(axis.name, value) == nullptr) {
        missing.push_back({axis.name, value});
      }
    }
  }
  return missing;
}

IntersectionalityMatrix::IntersectionalityMatrix(std::vector<std::string> row_axes,
                                                 std::vector<std::string> col_axes,
                                                 std::vector<std::vector<double>> values,
                                                 std::map<std::string, std::vector<double>> ideals)
    : row_axes_(std::move(row_axes)),
      col_axes_(std::move(col_axes)),
      values_(std::move(values)),
      ideals_(std::move(ideals)) {
  if (values_.size() != row_axes_.size()) {
    throw DataError("intersectionality matrix: row count mismatch");
  }
  for (const auto& row : values_) {
    if (row.size() != col_axes_.size()) {
      throw DataError("intersectionality matrix: column count mismatch");
    }
  }
}

int IntersectionalityMatrix::row_index(const std::string& axis) const {
  for (std::size_t i = 0; i < row_axes_.size(); ++i) {
    if (row_axes_[i] == axis) return static_cast<int>(i);
  }
  return -1;
}

int IntersectionalityMatrix::col_index(const std::string& axis) const {
  for (std::size_t i = 0; i < col_axes_.size(); ++i) {
    if (col_axes_[i] == axis) return static_cast<int>(i);
  }
  return -1;
}

std::pair<CategoricalDistribution, double> initial_bias(const AnnotatedImageSet& init_set,
                                                        const BiasAxis& axis,
                                                        const CategoricalDistribution& ideal) {
  CategoricalDistribution counts = distribution_from_annotations(init_set, axis);
  if (counts.empty()) {
    throw EmptyDistributionError("no usable annotations for axis '" + axis.name +
                                 "' in initial set");
  }
  CategoricalDistribution d = normalize(counts);
  return {d, normalized_bias(d, ideal)};
}

CategoricalDistribution intervention_distribution(
    std::span<const AnnotatedImageSet* const> cf_sets, const BiasAxis& target) {
  if (cf_sets.empty()) throw DataError("intervention_distribution: no counterfactual sets");

  std::vector<CategoricalDistribution> counts;
  counts.reserve(cf_sets.size());
  for (const AnnotatedImageSet* set : cf_sets) {
    if (set == nullptr) throw DataError("intervention_distribution: missing counterfactual set");
    counts.push_back(distribution_from_annotations(*set, target));
  }

  bool equal_totals = true;
  for (const auto& c : counts) {
    if (std::fabs(c.total() - counts.front().total()) > kNormalizationTol) {
      equal_totals = false;
      break;
    }
  }

  // Equal representation of all counterfactuals: with equal usable totals
  // the raw counts already weight each counterfactual alike; otherwise
  // each set contributes one unit of normalized mass.
  if (equal_totals) {
    return normalize(sum_distributions(counts));
  }
  std::vector<CategoricalDistribution> scaled;
  scaled.reserve(counts.size());
  for (const auto& c : counts) {
    if (c.empty()) {
      throw EmptyDistributionError("counterfactual set has no usable annotations for axis '" +
                                   target.name + "'");
    }
    scaled.push_back(normalize(c));
  }
  return normalize(sum_distributions(scaled));
}

InterventionResult intersectional_sensitivity(const AnnotatedImageSet& init_set,
                                              std::span<const AnnotatedImageSet* const> cf_sets,
                                              const BiasAxis& source, const BiasAxis& target,
                                              const CategoricalDistribution& ideal) {
  InterventionResult out;
  out.source_axis = source.name;
  out.target_axis = target.name;
  auto [d_init, w_init] = initial_bias(init_set, target, ideal);
  out.d_init = std::move(d_init);
  out.w_init = w_init;
  out.d_intervened = intervention_distribution(cf_sets, target);
  out.w_intervened = normalized_bias(out.d_intervened, ideal);
  out.is_value = out.w_init - out.w_intervened;
  return out;
}

IntersectionalityMatrix build_matrix(const PromptData& data, const AxisSet& axes,
                                     std::span<const std::string> measured,
                                     const IdealSet& ideals) {
  auto missing = missing_coverage(data, axes);
  if (!missing.empty()) {
    std::string msg = "incomplete counterfactual coverage, missing:";
    for (const auto& m : missing) msg += " (" + m.axis + ", " + m.value + ")";
    throw DataError(msg);
  }
  for (const auto& name : measured) axes.at(name);  // validate the subset

  std::vector<std::vector<double>> values;
  values.reserve(axes.size());
  for (const auto& source : axes) {
    std::vector<const AnnotatedImageSet*> cf_sets;
    cf_sets.reserve(source.values.size());
    for (const auto& value : source.values) cf_sets.push_back(data.find_cf(source.name, value));

    std::vector<double> row;
    row.reserve(measured.size());
    for (const auto& target_name : measured) {
      const BiasAxis& target = axes.at(target_name);
      InterventionResult r = intersectional_sensitivity(data.init, cf_sets, source, target,
                                                        ideals.for_axis(target_name));
      row.push_back(r.is_value);
    }
    values.push_back(std::move(row));
  }

  std::map<std::string, std::vector<double>> ideal_weights;
  for (const auto& name : measured) {
    ideal_weights.emplace(name, ideals.for_axis(name).weights());
  }
  return IntersectionalityMatrix(axes.names(),
                                 std::vector<std::string>(measured.begin(), measured.end()),
                                 std::move(values), std::move(ideal_weights));
}

double aggregate_entanglement(const IntersectionalityMatrix& m) {
  if (!m.square()) {
    throw DataError("aggregate_entanglement: matrix is not square over the full axis set");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < m.row_axes().size(); ++i) {
    for (std::size_t j = 0; j < m.col_axes().size(); ++j) {
      if (i != j) sum += std::fabs(m.at(i, j));
    }
  }
  return sum;
}

}  // namespace biasengine
