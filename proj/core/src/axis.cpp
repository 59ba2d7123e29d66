#include "biasengine/axis.hpp"

#include <set>

#include "biasengine/errors.hpp"

namespace biasengine {

int BiasAxis::index_of(const std::string& value) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == value) return static_cast<int>(i);
  }
  return -1;
}

AxisSet::AxisSet(std::vector<BiasAxis> axes) : axes_(std::move(axes)) {
  std::set<std::string> seen;
  for (const auto& axis : axes_) {
    if (axis.name.empty()) throw ConfigError("axis with empty name");
    if (!seen.insert(axis.name).second) {
      throw ConfigError("duplicate axis name: " + axis.name);
    }
    if (axis.values.empty()) {
      throw ConfigError("axis '" + axis.name + "' declares no values");
    }
    std::set<std::string> vals;
    for (const auto& v : axis.values) {
      if (v.empty()) throw ConfigError("axis '" + axis.name + "' has an empty value");
      if (v == "unknown") {
        throw ConfigError("axis '" + axis.name + "' declares the reserved value 'unknown'");
      }
      if (!vals.insert(v).second) {
        throw ConfigError("axis '" + axis.name + "' has duplicate value: " + v);
      }
    }
    if (!axis.cf_prompt_templates.empty() &&
        axis.cf_prompt_templates.size() != axis.values.size()) {
      throw ConfigError("axis '" + axis.name + "' needs one prompt template per value (" +
                        std::to_string(axis.values.size()) + " values, " +
                        std::to_string(axis.cf_prompt_templates.size()) + " templates)");
    }
  }
}

const BiasAxis& AxisSet::at(const std::string& name) const {
  if (const BiasAxis* axis = find(name)) return *axis;
  throw ConfigError("unknown axis: " + name);
}

const BiasAxis* AxisSet::find(const std::string& name) const {
  for (const auto& axis : axes_) {
    if (axis.name == name) return &axis;
  }
  return nullptr;
}

int AxisSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    if (axes_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> AxisSet::names() const {
  std::vector<std::string> out;
  out.reserve(axes_.size());
  for (const auto& axis : axes_) out.push_back(axis.name);
  return out;
}

std::string apply_prompt_template(const std::string& tmpl, const std::string& text) {
  static const std::string placeholder = "{prompt}";
  std::string out = tmpl;
  std::size_t pos = 0;
  while ((pos = out.find(placeholder, pos)) != std::string::npos) {
    out.replace(pos, placeholder.size(), text);
    pos += text.size();
  }
  return out;
}

}  // namespace biasengine
