#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biasengine/axis.hpp"

namespace biasengine {

/// Reserved attribute value for extractor answers that match no declared
/// value of an axis.
inline constexpr const char* kUnknownValue = "unknown";

/// Per-image attribute answers: axis name -> attribute value. A missing
/// axis key is treated as "unknown" by all counting code.
struct ImageAnnotation {
  std::map<std::string, std::string> attrs;

  /// Value for `axis`, or "unknown" when absent.
  const std::string& value_for(const std::string& axis) const;
};

/// Identifies the counterfactual that produced an image set.
struct Intervention {
  std::string axis;
  std::string value;

  friend bool operator==(const Intervention&, const Intervention&) = default;
  friend auto operator<=>(const Intervention&, const Intervention&) = default;
};

/// A set of generated images reduced to their attribute annotations.
/// No pixels are ever held; `size()` is the image count.
struct AnnotatedImageSet {
  std::string prompt;
  std::optional<Intervention> intervention;
  std::vector<ImageAnnotation> annotations;

  std::size_t size() const { return annotations.size(); }
};

/// Checks every annotation against the axis set: keys must be declared
/// axes and non-"unknown" values must belong to their axis. Throws
/// DataError with the offending record position.
void validate_annotations(const AnnotatedImageSet& set, const AxisSet& axes);

}  // namespace biasengine
