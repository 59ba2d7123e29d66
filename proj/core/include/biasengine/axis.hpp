#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace biasengine {

/// A named bias dimension: its ordered attribute values, the question an
/// extractor answers to annotate it, and one counterfactual prompt
/// template per value. Templates contain the "{prompt}" placeholder.
struct BiasAxis {
  std::string name;
  std::vector<std::string> values;
  std::string question;
  std::vector<std::string> cf_prompt_templates;

  std::size_t cardinality() const { return values.size(); }

  /// Index of a value in declared order, or -1 if not a value of this axis.
  int index_of(const std::string& value) const;

  /// Axes with a single value carry no measurable bias.
  bool inert() const { return values.size() < 2; }
};

/// Ordered collection of axes. The declared order is canonical for all
/// matrix and graph indexing. Construction validates uniqueness of axis
/// names and of values within each axis.
class AxisSet {
 public:
  AxisSet() = default;
  explicit AxisSet(std::vector<BiasAxis> axes);

  const std::vector<BiasAxis>& axes() const { return axes_; }
  std::size_t size() const { return axes_.size(); }
  bool empty() const { return axes_.empty(); }

  /// Throws ConfigError for unknown names.
  const BiasAxis& at(const std::string& name) const;
  const BiasAxis* find(const std::string& name) const;
  int index_of(const std::string& name) const;

  std::vector<std::string> names() const;

  auto begin() const { return axes_.begin(); }
  auto end() const { return axes_.end(); }

 private:
  std::vector<BiasAxis> axes_;
};

/// An input prompt under audit. Paired with an AxisSet at every call site
/// that needs counterfactuals.
struct PromptSpec {
  std::string text;
};

/// Substitute `text` into every "{prompt}" placeholder of `tmpl`.
/// A template without the placeholder is returned unchanged.
std::string apply_prompt_template(const std::string& tmpl, const std::string& text);

}  // namespace biasengine
