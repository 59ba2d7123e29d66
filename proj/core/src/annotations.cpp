#include "biasengine/annotations.hpp"

#include <string>

#include "biasengine/errors.hpp"

namespace biasengine {

const std::string& ImageAnnotation::value_for(const std::string& axis) const {
  static const std::string unknown = kUnknownValue;
  auto it = attrs.find(axis);
  return it == attrs.end() ? unknown : it->second;
}

void validate_annotations(const AnnotatedImageSet& set, const AxisSet& axes) {
  if (set.intervention) {
    const BiasAxis& axis = axes.at(set.intervention->axis);
    if (axis.index_of(set.intervention->value) < 0) {
      throw DataError("intervention value '" + set.intervention->value +
                      "' is not a value of axis '" + axis.name + "'");
    }
  }
  for (std::size_t i = 0; i < set.annotations.size(); ++i) {
    for (const auto& [axis_name, value] : set.annotations[i].attrs) {
      const BiasAxis* axis = axes.find(axis_name);
      if (axis == nullptr) {
        throw DataError("image " + std::to_string(i) + ": unknown axis '" + axis_name + "'");
      }
      if (value != kUnknownValue && axis->index_of(value) < 0) {
        throw DataError("image " + std::to_string(i) + ": value '" + value +
                        "' is not a value of axis '" + axis_name + "'");
      }
    }
  }
}

}  // namespace biasengine
