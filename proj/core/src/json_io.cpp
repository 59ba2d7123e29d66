#include "biasengine/json_io.hpp"

#include "json.hpp"

#include "biasengine/errors.hpp"

namespace biasengine {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json parse_root(const std::string& text, const char* what) {
  try {
    return ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

const ordered_json& require(const ordered_json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string(what) + ": missing key '" + key + "'");
  return *it;
}

template <typename T>
T as(const ordered_json& j, const char* key, const char* what) {
  try {
    return require(j, key, what).get<T>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError(std::string(what) + ": wrong type for key '" + key + "'");
  }
}

}  // namespace

AxisSet parse_axis_set(const std::string& text) {
  const char* what = "axis set";
  ordered_json j = parse_root(text, what);
  std::vector<BiasAxis> axes;
  for (const auto& a : require(j, "axes", what)) {
    BiasAxis axis;
    axis.name = as<std::string>(a, "name", what);
    axis.values = as<std::vector<std::string>>(a, "values", what);
    axis.question = as<std::string>(a, "question", what);
    axis.cf_prompt_templates = as<std::vector<std::string>>(a, "cf_prompt_templates", what);
    axes.push_back(std::move(axis));
  }
  try {
    return AxisSet(std::move(axes));
  } catch (const ConfigError& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

std::string dump_axis_set(const AxisSet& axes) {
  ordered_json j;
  j["axes"] = ordered_json::array();
  for (const auto& axis : axes) {
    ordered_json a;
    a["name"] = axis.name;
    a["values"] = axis.values;
    a["question"] = axis.question;
    a["cf_prompt_templates"] = axis.cf_prompt_templates;
    j["axes"].push_back(a);
  }
  return j.dump(2) + "\n";
}

AnnotatedImageSet parse_annotated_image_set(const std::string& text) {
  const char* what = "annotated image set";
  ordered_json j = parse_root(text, what);
  AnnotatedImageSet set;
  set.prompt = as<std::string>(j, "prompt", what);
  if (j.contains("intervention") && !j["intervention"].is_null()) {
    const auto& iv = j["intervention"];
    set.intervention = Intervention{as<std::string>(iv, "axis", what),
                                    as<std::string>(iv, "value", what)};
  }
  const ordered_json& images = require(j, "images", what);
  if (!images.is_array()) throw DataError(std::string(what) + ": 'images' must be an array");
  std::size_t index = 0;
  for (const auto& image : images) {
    const ordered_json& attrs = require(image, "attrs", what);
    if (!attrs.is_object()) {
      throw DataError(std::string(what) + ": image " + std::to_string(index) +
                      ": 'attrs' must be an object");
    }
    ImageAnnotation annotation;
    for (const auto& [axis, value] : attrs.items()) {
      if (!value.is_string()) {
        throw DataError(std::string(what) + ": image " + std::to_string(index) +
                        ": value for axis '" + axis + "' must be a string");
      }
      annotation.attrs[axis] = value.get<std::string>();
    }
    set.annotations.push_back(std::move(annotation));
    ++index;
  }
  return set;
}

std::string dump_annotated_image_set(const AnnotatedImageSet& set) {
  ordered_json j;
  j["prompt"] = set.prompt;
  if (set.intervention) {
    j["intervention"] = {{"axis", set.intervention->axis}, {"value", set.intervention->value}};
  } else {
    j["intervention"] = nullptr;
  }
  j["images"] = ordered_json::array();
  for (const auto& annotation : set.annotations) {
    ordered_json attrs = ordered_json::object();
    for (const auto& [axis, value] : annotation.attrs) attrs[axis] = value;
    j["images"].push_back({{"attrs", attrs}});
  }
  return j.dump(2) + "\n";
}

AnnotatedImageSet parse_annotated_image_set_lenient(const std::string& text, const AxisSet& axes,
                                                    std::vector<std::string>* warnings) {
  AnnotatedImageSet set = parse_annotated_image_set(text);
  if (set.intervention) {
    const BiasAxis& axis = axes.at(set.intervention->axis);
    if (axis.index_of(set.intervention->value) < 0) {
      throw DataError("annotated image set: intervention value '" + set.intervention->value +
                      "' is not a value of axis '" + axis.name + "'");
    }
  }
  std::size_t index = 0;
  for (auto& annotation : set.annotations) {
    for (auto& [axis_name, value] : annotation.attrs) {
      const BiasAxis* axis = axes.find(axis_name);
      if (axis == nullptr) {
        throw DataError("annotated image set: image " + std::to_string(index) +
                        ": undeclared axis '" + axis_name + "'");
      }
      if (value != kUnknownValue && axis->index_of(value) < 0) {
        if (warnings != nullptr) {
          warnings->push_back("prompt '" + set.prompt + "' image " + std::to_string(index) +
                              ": value '" + value + "' is not declared on axis '" + axis_name +
                              "', mapped to \"unknown\"");
        }
        value = kUnknownValue;
      }
    }
    ++index;
  }
  return set;
}

SynonymTable parse_synonym_table(const std::string& text) {
  const char* what = "synonym table";
  ordered_json j = parse_root(text, what);
  std::vector<SynonymTable::Group> groups;
  for (const auto& g : require(j, "groups", what)) {
    SynonymTable::Group group;
    group.canonical = as<std::string>(g, "canonical", what);
    group.members = as<std::vector<std::string>>(g, "members", what);
    groups.push_back(std::move(group));
  }
  try {
    return SynonymTable(std::move(groups));
  } catch (const ConfigError& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

std::string dump_synonym_table(const SynonymTable& table) {
  ordered_json j;
  j["groups"] = ordered_json::array();
  for (const auto& group : table.groups()) {
    j["groups"].push_back({{"canonical", group.canonical}, {"members", group.members}});
  }
  return j.dump(2) + "\n";
}

ConceptSet parse_concept_set(const std::string& text) {
  const char* what = "concept set";
  ordered_json j = parse_root(text, what);
  std::vector<std::pair<std::string, double>> entries;
  for (const auto& e : require(j, "entries", what)) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number()) {
      throw DataError(std::string(what) + ": entries must be [concept, frequency] pairs");
    }
    entries.emplace_back(e[0].get<std::string>(), e[1].get<double>());
  }
  return ConceptSet(std::move(entries));
}

std::string dump_concept_set(const ConceptSet& set) {
  ordered_json j;
  j["entries"] = ordered_json::array();
  for (const auto& [word, freq] : set.entries()) {
    j["entries"].push_back(ordered_json::array({word, freq}));
  }
  return j.dump(2) + "\n";
}

std::vector<EmbeddingVector> parse_embeddings(const std::string& text) {
  const char* what = "embedding file";
  ordered_json j = parse_root(text, what);
  std::vector<EmbeddingVector> out;
  for (const auto& v : require(j, "vectors", what)) {
    EmbeddingVector vec;
    vec.source_id = as<std::string>(v, "source_id", what);
    vec.dims = as<std::vector<double>>(v, "dims", what);
    if (vec.dims.empty()) throw DataError(std::string(what) + ": empty dims");
    double norm = 0.0;
    for (double d : vec.dims) norm += d * d;
    if (norm == 0.0) {
      throw DataError(std::string(what) + ": zero-norm vector '" + vec.source_id + "'");
    }
    out.push_back(std::move(vec));
  }
  return out;
}

std::string dump_embeddings(std::span<const EmbeddingVector> vectors) {
  ordered_json j;
  j["vectors"] = ordered_json::array();
  for (const auto& vec : vectors) {
    j["vectors"].push_back({{"source_id", vec.source_id}, {"dims", vec.dims}});
  }
  return j.dump(2) + "\n";
}

std::string dump_matrix(const IntersectionalityMatrix& m) {
  ordered_json j;
  j["rows"] = m.row_axes();
  j["cols"] = m.col_axes();
  j["values"] = m.values();
  ordered_json ideals = ordered_json::object();
  for (const auto& [axis, weights] : m.ideals()) ideals[axis] = weights;
  j["ideals"] = ideals;
  return j.dump(2) + "\n";
}

IntersectionalityMatrix parse_matrix(const std::string& text) {
  const char* what = "intersectionality matrix";
  ordered_json j = parse_root(text, what);
  std::map<std::string, std::vector<double>> ideals;
  for (const auto& [axis, weights] : require(j, "ideals", what).items()) {
    ideals[axis] = weights.get<std::vector<double>>();
  }
  try {
    return IntersectionalityMatrix(as<std::vector<std::string>>(j, "rows", what),
                                   as<std::vector<std::string>>(j, "cols", what),
                                   as<std::vector<std::vector<double>>>(j, "values", what),
                                   std::move(ideals));
  } catch (const DataError& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

SyntheticModel parse_synthetic_model(const std::string& text) {
  const char* what = "synthetic model";
  ordered_json j = parse_root(text, what);
  AxisSet axes = parse_axis_set(require(j, "axes", what).dump());
  std::vector<SyntheticModel::JointEntry> joint;
  for (const auto& e : require(j, "joint", what)) {
    SyntheticModel::JointEntry entry;
    entry.values = as<std::vector<std::string>>(e, "values", what);
    entry.p = as<double>(e, "p", what);
    joint.push_back(std::move(entry));
  }
  std::string prompt_key = as<std::string>(j, "prompt_key", what);
  try {
    return SyntheticModel(std::move(axes), std::move(joint), std::move(prompt_key));
  } catch (const ConfigError& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

std::string dump_synthetic_model(const SyntheticModel& model) {
  ordered_json out;
  out["axes"] = ordered_json::parse(dump_axis_set(model.axes()));
  out["joint"] = ordered_json::array();
  for (const auto& entry : model.joint()) {
    out["joint"].push_back({{"values", entry.values}, {"p", entry.p}});
  }
  out["prompt_key"] = model.prompt_key();
  return out.dump(2) + "\n";
}

std::string dump_generation_request(const GenerationRequest& req) {
  ordered_json j;
  j["prompt"] = req.prompt;
  j["intervention"] = ordered_json::array();
  for (const auto& iv : req.intervention) {
    j["intervention"].push_back({{"axis", iv.axis}, {"value", iv.value}});
  }
  j["n"] = req.n;
  j["mode"] = req.mode == GenerationMode::exact_counts ? "exact_counts" : "sampled";
  j["seed"] = req.seed;
  return j.dump();
}

GenerationRequest parse_generation_request(const std::string& text) {
  const char* what = "generation request";
  ordered_json j = parse_root(text, what);
  GenerationRequest req;
  req.prompt = as<std::string>(j, "prompt", what);
  if (j.contains("intervention") && !j["intervention"].is_null()) {
    for (const auto& iv : j["intervention"]) {
      req.intervention.push_back(
          {as<std::string>(iv, "axis", what), as<std::string>(iv, "value", what)});
    }
  }
  req.n = as<std::size_t>(j, "n", what);
  std::string mode = as<std::string>(j, "mode", what);
  if (mode == "exact_counts") {
    req.mode = GenerationMode::exact_counts;
  } else if (mode == "sampled") {
    req.mode = GenerationMode::sampled;
  } else {
    throw DataError(std::string(what) + ": unknown mode '" + mode + "'");
  }
  if (j.contains("seed")) req.seed = j["seed"].get<std::uint64_t>();
  return req;
}

namespace {

ordered_json pairs_to_json(const std::vector<std::pair<std::string, double>>& pairs) {
  ordered_json out = ordered_json::array();
  for (const auto& [axis, value] : pairs) out.push_back(ordered_json::array({axis, value}));
  return out;
}

std::vector<std::pair<std::string, double>> pairs_from_json(const ordered_json& j,
                                                            const char* what) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number()) {
      throw DataError(std::string(what) + ": expected [axis, number] pairs");
    }
    out.emplace_back(e[0].get<std::string>(), e[1].get<double>());
  }
  return out;
}

}  // namespace

std::string dump_trace(const MitigationTrace& trace) {
  ordered_json j;
  j["steps"] = ordered_json::array();
  for (const auto& step : trace.steps) {
    ordered_json s;
    s["selected_axis"] = step.selected_axis;
    s["gamma_scores"] = pairs_to_json(step.gamma_scores);
    s["tau_before"] = step.tau_before;
    s["tau_after"] = step.tau_after;
    s["per_axis_w"] = pairs_to_json(step.per_axis_w);
    s["alerts"] = ordered_json::array();
    for (const auto& alert : step.alerts) {
      s["alerts"].push_back(
          {{"axis", alert.axis}, {"before", alert.before}, {"after", alert.after}});
    }
    j["steps"].push_back(s);
  }
  j["mitigated_axes"] = trace.mitigated_axes;
  j["initial_w"] = pairs_to_json(trace.initial_w);
  j["initial_tau"] = trace.initial_tau;
  j["final_tau"] = trace.final_tau;
  j["mit_amt"] = trace.mit_amt;
  j["mit_steps_ratio"] = trace.mit_steps_ratio;
  j["reason"] = to_string(trace.reason);
  if (trace.error) {
    j["error"] = *trace.error;
  } else {
    j["error"] = nullptr;
  }
  return j.dump(2) + "\n";
}

MitigationTrace parse_trace(const std::string& text) {
  const char* what = "mitigation trace";
  ordered_json j = parse_root(text, what);
  MitigationTrace trace;
  for (const auto& s : require(j, "steps", what)) {
    MitigationStep step;
    step.selected_axis = as<std::string>(s, "selected_axis", what);
    step.gamma_scores = pairs_from_json(require(s, "gamma_scores", what), what);
    step.tau_before = as<double>(s, "tau_before", what);
    step.tau_after = as<double>(s, "tau_after", what);
    step.per_axis_w = pairs_from_json(require(s, "per_axis_w", what), what);
    for (const auto& a : require(s, "alerts", what)) {
      step.alerts.push_back({as<std::string>(a, "axis", what), as<double>(a, "before", what),
                             as<double>(a, "after", what)});
    }
    trace.steps.push_back(std::move(step));
  }
  trace.mitigated_axes = as<std::vector<std::string>>(j, "mitigated_axes", what);
  trace.initial_w = pairs_from_json(require(j, "initial_w", what), what);
  trace.initial_tau = as<double>(j, "initial_tau", what);
  trace.final_tau = as<double>(j, "final_tau", what);
  trace.mit_amt = as<double>(j, "mit_amt", what);
  trace.mit_steps_ratio = as<double>(j, "mit_steps_ratio", what);
  trace.reason = termination_reason_from_string(as<std::string>(j, "reason", what));
  if (j.contains("error") && !j["error"].is_null()) {
    trace.error = j["error"].get<std::string>();
  }
  return trace;
}

std::string dump_sensitivity_report(const SensitivityReport& report) {
  ordered_json j;
  j["kind"] = to_string(report.kind);
  j["levels"] = ordered_json::array();
  for (const auto& level : report.levels) {
    ordered_json l;
    l["level"] = level.level;
    l["mean_delta"] = level.mean_delta;
    l["cas"] = {{"mean", level.cas.mean}, {"stddev", level.cas.stddev}};
    l["mad"] = {{"mean", level.mad.mean}, {"stddev", level.mad.stddev}};
    l["is"] = {{"mean", level.is.mean}, {"stddev", level.is.stddev}};
    j["levels"].push_back(l);
  }
  j["seeds"] = report.seeds;
  return j.dump(2) + "\n";
}

IdealSet parse_ideals(const std::string& text, const AxisSet& axes) {
  const char* what = "ideal distributions";
  ordered_json j = parse_root(text, what);
  IdealSet ideals = IdealSet::uniform(axes);
  for (const auto& [axis_name, weights] : j.items()) {
    const BiasAxis& axis = axes.at(axis_name);
    std::vector<double> w;
    try {
      w = weights.get<std::vector<double>>();
    } catch (const std::exception&) {
      throw DataError(std::string(what) + ": weights for '" + axis_name +
                      "' must be an array of numbers");
    }
    if (w.size() != axis.values.size()) {
      throw DataError(std::string(what) + ": '" + axis_name + "' needs " +
                      std::to_string(axis.values.size()) + " weights");
    }
    ideals.set(axis, CategoricalDistribution(axis.name, std::move(w)));
  }
  return ideals;
}

}  // namespace biasengine
