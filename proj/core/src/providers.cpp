#include "biasengine/providers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "biasengine/errors.hpp"
#include "biasengine/json_io.hpp"
#include "biasengine/rng.hpp"

namespace biasengine {

std::vector<CounterfactualPrompt> template_counterfactuals(const PromptSpec& prompt,
                                                           const AxisSet& axes) {
  std::vector<CounterfactualPrompt> out;
  for (const auto& axis : axes) {
    if (axis.cf_prompt_templates.size() != axis.values.size()) {
      throw ConfigError("axis '" + axis.name + "' has no counterfactual prompt templates");
    }
    for (std::size_t i = 0; i < axis.values.size(); ++i) {
      out.push_back({axis.name, axis.values[i],
                     apply_prompt_template(axis.cf_prompt_templates[i], prompt.text)});
    }
  }
  return out;
}

std::vector<std::size_t> largest_remainder_apportion(std::span<const double> quotas,
                                                     std::size_t n) {
  double sum = std::accumulate(quotas.begin(), quotas.end(), 0.0);
  if (std::fabs(sum - static_cast<double>(n)) > 1e-6) {
    throw DataError("largest_remainder_apportion: quotas sum to " + std::to_string(sum) +
                    ", expected " + std::to_string(n));
  }
  std::vector<std::size_t> counts(quotas.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  remainders.reserve(quotas.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < quotas.size(); ++i) {
    if (quotas[i] < 0.0) throw DataError("largest_remainder_apportion: negative quota");
    double floor_part = std::floor(quotas[i]);
    counts[i] = static_cast<std::size_t>(floor_part);
    assigned += counts[i];
    remainders.emplace_back(quotas[i] - floor_part, i);
  }
  // Stable sort keeps earlier indices first among equal remainders.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (assigned > n) throw DataError("largest_remainder_apportion: floor exceeds n");
  std::size_t leftover = n - assigned;
  for (std::size_t k = 0; k < leftover; ++k) {
    counts[remainders[k % remainders.size()].second] += 1;
  }
  return counts;
}

SyntheticModel::SyntheticModel(AxisSet axes, std::vector<JointEntry> joint,
                               std::string prompt_key)
    : axes_(std::move(axes)), joint_(std::move(joint)), prompt_key_(std::move(prompt_key)) {
  double sum = 0.0;
  for (const auto& entry : joint_) {
    if (entry.values.size() != axes_.size()) {
      throw ConfigError("synthetic joint tuple arity mismatch (expected " +
                        std::to_string(axes_.size()) + " values)");
    }
    for (std::size_t i = 0; i < entry.values.size(); ++i) {
      if (axes_.axes()[i].index_of(entry.values[i]) < 0) {
        throw ConfigError("synthetic joint tuple value '" + entry.values[i] +
                          "' is not a value of axis '" + axes_.axes()[i].name + "'");
      }
    }
    if (!(entry.p >= 0.0)) throw ConfigError("synthetic joint probability must be >= 0");
    sum += entry.p;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    throw ConfigError("synthetic joint probabilities sum to " + std::to_string(sum) +
                      ", expected 1");
  }
}

std::vector<SyntheticModel::JointEntry> SyntheticModel::conditioned(
    std::span<const Intervention> constraints) const {
  // Later constraints on the same axis replace earlier ones.
  std::map<std::string, std::string> active;
  for (const auto& c : constraints) {
    const BiasAxis& axis = axes_.at(c.axis);
    if (axis.index_of(c.value) < 0) {
      throw DataError("constraint value '" + c.value + "' is not a value of axis '" + c.axis +
                      "'");
    }
    active[c.axis] = c.value;
  }

  std::vector<JointEntry> restricted;
  double mass = 0.0;
  for (const auto& entry : joint_) {
    bool match = true;
    for (const auto& [axis_name, value] : active) {
      int idx = axes_.index_of(axis_name);
      if (entry.values[static_cast<std::size_t>(idx)] != value) {
        match = false;
        break;
      }
    }
    if (match) {
      restricted.push_back(entry);
      mass += entry.p;
    }
  }
  if (mass <= 0.0) {
    std::string msg = "zero-mass conditioning on";
    for (const auto& [axis_name, value] : active) msg += " (" + axis_name + "=" + value + ")";
    throw DataError(msg);
  }
  for (auto& entry : restricted) entry.p /= mass;
  return restricted;
}

AnnotatedImageSet SyntheticModel::generate(const GenerationRequest& req) const {
  if (req.n < 1) throw DataError("generation request needs n >= 1");
  std::vector<JointEntry> dist = conditioned(req.intervention);

  std::vector<std::size_t> counts(dist.size(), 0);
  if (req.mode == GenerationMode::exact_counts) {
    std::vector<double> quotas(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) {
      quotas[i] = static_cast<double>(req.n) * dist[i].p;
    }
    counts = largest_remainder_apportion(quotas, req.n);
  } else {
    std::vector<double> cumulative(dist.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      acc += dist[i].p;
      cumulative[i] = acc;
    }
    cumulative.back() = 1.0;
    std::uint64_t state = req.seed;
    for (std::size_t k = 0; k < req.n; ++k) {
      double u = next_unit(state);
      std::size_t idx = static_cast<std::size_t>(
          std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      if (idx >= counts.size()) idx = counts.size() - 1;
      counts[idx] += 1;
    }
  }

  AnnotatedImageSet out;
  out.prompt = req.prompt;
  if (req.intervention.size() == 1) out.intervention = req.intervention.front();
  out.annotations.reserve(req.n);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    ImageAnnotation annotation;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
      annotation.attrs[axes_.axes()[a].name] = dist[i].values[a];
    }
    for (std::size_t k = 0; k < counts[i]; ++k) out.annotations.push_back(annotation);
  }
  return out;
}

SyntheticProvider::SyntheticProvider(std::vector<SyntheticModel> models)
    : models_(std::move(models)) {
  if (models_.empty()) throw ConfigError("synthetic provider needs at least one model");
}

const SyntheticModel& SyntheticProvider::model_for(const std::string& prompt) const {
  for (const auto& model : models_) {
    if (model.prompt_key() == prompt) return model;
  }
  throw ProviderError("no synthetic model responds to prompt '" + prompt + "'");
}

AnnotatedImageSet SyntheticProvider::generate(const GenerationRequest& req) {
  return model_for(req.prompt).generate(req);
}

const AxisSet& SyntheticProvider::axes() const { return models_.front().axes(); }

std::vector<std::string> SyntheticProvider::prompt_keys() const {
  std::vector<std::string> keys;
  keys.reserve(models_.size());
  for (const auto& model : models_) keys.push_back(model.prompt_key());
  return keys;
}

RecordedCorpus load_recorded_corpus(const std::string& path, const AxisSet& axes) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw ConfigError("recorded corpus path does not exist: " + path);
  }
  if (files.empty()) throw DataError("no .json files under " + path);

  RecordedCorpus corpus;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
      corpus.sets.push_back(
          parse_annotated_image_set_lenient(buffer.str(), axes, &corpus.warnings));
    } catch (const DataError& e) {
      throw DataError(file.string() + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace biasengine
