#include "app.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "biasengine/biasconnect.hpp"
#include "biasengine/biasgraph.hpp"
#include "biasengine/concepts.hpp"
#include "biasengine/errors.hpp"
#include "biasengine/intermit.hpp"
#include "biasengine/json_io.hpp"
#include "biasengine/occupation.hpp"
#include "biasengine/providers.hpp"
#include "biasengine/rng.hpp"
#include "biasengine/sensitivity.hpp"
#include "biasengine/stats.hpp"

namespace biasaudit {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace biasengine;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string slug(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    out.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_');
  }
  return out;
}

std::string format_g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Everything a command needs, resolved and validated up front.
struct RunContext {
  ordered_json config;            // effective config (file + flag overrides)
  std::string config_hash;
  fs::path out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool force = false;
  std::string format;

  AxisSet axes;
  IdealSet ideals;
  std::shared_ptr<GenerationProvider> provider;  // null for recorded corpora
  std::vector<PromptData> recorded;              // grouped recorded data
  bool is_recorded = false;
  std::vector<std::string> prompts;
  std::size_t budget_n = 48;
  GenerationMode mode = GenerationMode::exact_counts;
  SynonymTable synonyms;

  std::string header_line(const std::string& comment_lead) const {
    return comment_lead + " " + kToolName + " " + kToolVersion + " seed=" +
           std::to_string(seed) + " config=" + config_hash + "\n";
  }
  ordered_json meta() const {
    ordered_json m;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["seed"] = seed;
    m["config_hash"] = config_hash;
    return m;
  }
};

template <typename T>
T config_value(const ordered_json& config, const std::string& key, T fallback) {
  if (!config.contains(key)) return fallback;
  try {
    return config.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::vector<PromptData> group_recorded(std::vector<AnnotatedImageSet> sets,
                                       std::vector<std::string>* prompts) {
  std::map<std::string, PromptData> grouped;
  std::vector<std::string> order;
  for (auto& set : sets) {
    if (!grouped.count(set.prompt)) order.push_back(set.prompt);
    PromptData& data = grouped[set.prompt];
    if (set.intervention) {
      data.cf_sets[*set.intervention] = std::move(set);
    } else {
      data.init = std::move(set);
    }
  }
  std::vector<PromptData> out;
  for (const auto& prompt : order) {
    if (grouped[prompt].init.size() == 0) {
      throw DataError("recorded corpus has no initial (intervention: null) set for prompt '" +
                      prompt + "'");
    }
    prompts->push_back(prompt);
    out.push_back(std::move(grouped[prompt]));
  }
  return out;
}

RunContext build_context(const CliOptions& opts) {
  RunContext ctx;
  ctx.config = ordered_json::object();
  if (!opts.config_path.empty()) {
    try {
      ctx.config = ordered_json::parse(read_file(opts.config_path));
    } catch (const ordered_json::exception& e) {
      throw ConfigError("config file " + opts.config_path + ": " + e.what());
    }
    if (!ctx.config.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  // flags win over the config file
  if (opts.out_dir) ctx.config["out"] = *opts.out_dir;
  if (opts.seed) ctx.config["seed"] = *opts.seed;
  if (opts.jobs) ctx.config["jobs"] = *opts.jobs;
  if (opts.p_threshold) ctx.config["p_threshold"] = *opts.p_threshold;
  if (opts.epsilon) ctx.config["epsilon"] = *opts.epsilon;
  if (opts.global) ctx.config["global"] = true;

  // The hash identifies the run semantics; where artifacts land and how
  // many workers ran does not change them, and the seed is reported on
  // its own.
  ordered_json hashed = ctx.config;
  hashed.erase("out");
  hashed.erase("jobs");
  hashed.erase("seed");
  ctx.config_hash = hex64(fnv1a(hashed.dump()));
  ctx.out_dir = config_value<std::string>(ctx.config, "out", "out");
  ctx.seed = config_value<std::uint64_t>(ctx.config, "seed", 0);
  ctx.jobs = config_value<int>(ctx.config, "jobs", 1);
  if (ctx.jobs < 1) throw ConfigError("jobs must be >= 1");
  ctx.force = opts.force;
  ctx.format = opts.format;
  ctx.budget_n = config_value<std::size_t>(ctx.config, "n", 48);
  if (ctx.budget_n < 1) throw ConfigError("n must be >= 1");
  std::string mode = config_value<std::string>(ctx.config, "mode", "exact_counts");
  if (mode == "exact_counts") {
    ctx.mode = GenerationMode::exact_counts;
  } else if (mode == "sampled") {
    ctx.mode = GenerationMode::sampled;
  } else {
    throw ConfigError("mode must be exact_counts or sampled");
  }

  // provider
  ordered_json provider = ctx.config.contains("provider") ? ctx.config.at("provider")
                                                          : ordered_json::object();
  std::string kind = config_value<std::string>(provider, "kind", "bundled");
  if (kind == "bundled") {
    std::string scenario = config_value<std::string>(provider, "scenario", "occupation");
    if (scenario == "occupation") {
      ctx.provider = std::make_shared<SyntheticProvider>(make_occupation_provider(ctx.seed));
      ctx.prompts = occupation_prompts();
    } else if (scenario == "coupled_demo") {
      ctx.provider = std::make_shared<SyntheticProvider>(
          SyntheticProvider({coupled_demo_model()}));
      ctx.prompts = {"nurse"};
    } else if (scenario == "adversarial_demo") {
      ctx.provider = std::make_shared<SyntheticProvider>(
          SyntheticProvider({adversarial_demo_model()}));
      ctx.prompts = {"athlete"};
    } else {
      throw ConfigError("unknown bundled scenario '" + scenario + "'");
    }
    ctx.axes = ctx.provider->axes();
  } else if (kind == "synthetic") {
    std::string model_file = config_value<std::string>(provider, "model_file", "");
    if (model_file.empty()) throw ConfigError("synthetic provider needs model_file");
    std::vector<SyntheticModel> models;
    models.push_back(parse_synthetic_model(read_file(model_file)));
    ctx.prompts = {models.front().prompt_key()};
    ctx.axes = models.front().axes();
    ctx.provider = std::make_shared<SyntheticProvider>(std::move(models));
  } else if (kind == "recorded") {
    std::string path = config_value<std::string>(provider, "path", "");
    if (path.empty()) throw ConfigError("recorded provider needs path");
    std::string axes_file = config_value<std::string>(ctx.config, "axes_file", "");
    if (axes_file.empty()) throw ConfigError("recorded provider needs axes_file");
    ctx.axes = parse_axis_set(read_file(axes_file));
    RecordedCorpus corpus = load_recorded_corpus(path, ctx.axes);
    for (const auto& warning : corpus.warnings) {
      std::cerr << "warning: " << warning << "\n";
    }
    ctx.recorded = group_recorded(std::move(corpus.sets), &ctx.prompts);
    ctx.is_recorded = true;
  } else if (kind == "adapter") {
    std::string target = config_value<std::string>(provider, "target", "");
    if (target.empty()) throw ConfigError("adapter provider needs target");
    std::string axes_file = config_value<std::string>(ctx.config, "axes_file", "");
    if (axes_file.empty()) throw ConfigError("adapter provider needs axes_file");
    ctx.axes = parse_axis_set(read_file(axes_file));
    AdapterSpec spec = parse_adapter_spec(
        target, std::chrono::milliseconds(
                    config_value<std::int64_t>(provider, "timeout_ms", 10000)));
    spec.parallelism = config_value<int>(provider, "parallelism", 1);
    ctx.provider = std::make_shared<AdapterProvider>(spec, AxisSet(ctx.axes.axes()));
    ctx.prompts.clear();
  } else {
    throw ConfigError("unknown provider kind '" + kind + "'");
  }

  // prompt selection from config narrows (or, for adapters, defines) the list
  if (ctx.config.contains("prompt")) {
    ctx.prompts = {config_value<std::string>(ctx.config, "prompt", "")};
  } else if (ctx.config.contains("prompts")) {
    ctx.prompts = config_value<std::vector<std::string>>(ctx.config, "prompts", {});
  }
  if (ctx.prompts.empty()) throw ConfigError("no prompts selected");

  ctx.ideals = IdealSet::uniform(ctx.axes);
  if (ctx.config.contains("ideals")) {
    ctx.ideals = parse_ideals(ctx.config.at("ideals").dump(), ctx.axes);
  }
  if (ctx.config.contains("synonyms_file")) {
    ctx.synonyms = parse_synonym_table(
        read_file(config_value<std::string>(ctx.config, "synonyms_file", "")));
  }
  return ctx;
}

void prepare_out_dir(const RunContext& ctx) {
  if (fs::exists(ctx.out_dir) && !fs::is_empty(ctx.out_dir) && !ctx.force) {
    throw ConfigError("output directory '" + ctx.out_dir.string() +
                      "' is not empty (use --force to overwrite)");
  }
  fs::create_directories(ctx.out_dir);
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

void write_json_artifact(const RunContext& ctx, const std::string& name,
                         ordered_json payload) {
  ordered_json doc;
  doc["meta"] = ctx.meta();
  for (auto& [key, value] : payload.items()) doc[key] = value;
  write_text(ctx.out_dir / name, doc.dump(2) + "\n");
}

/// Collect init + all counterfactual sets per prompt through the
/// provider, prompts fanned out over the --jobs worker threads.
std::vector<PromptData> collect_corpus(RunContext& ctx) {
  if (ctx.is_recorded) {
    std::map<std::string, const PromptData*> by_prompt;
    for (const auto& data : ctx.recorded) by_prompt[data.init.prompt] = &data;
    std::vector<PromptData> out;
    for (const auto& prompt : ctx.prompts) {
      auto it = by_prompt.find(prompt);
      if (it == by_prompt.end()) {
        throw DataError("recorded corpus has no data for prompt '" + prompt + "'");
      }
      out.push_back(*it->second);
    }
    return out;
  }

  std::vector<PromptData> out(ctx.prompts.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      std::size_t index = next.fetch_add(1);
      if (index >= ctx.prompts.size()) return;
      try {
        PromptData data;
        GenerationRequest init;
        init.prompt = ctx.prompts[index];
        init.n = ctx.budget_n;
        init.mode = ctx.mode;
        init.seed = derive_seed(ctx.seed, fnv1a(ctx.prompts[index]));
        data.init = ctx.provider->generate(init);
        std::uint64_t salt = 1;
        for (const auto& axis : ctx.axes) {
          for (const auto& value : axis.values) {
            GenerationRequest req = init;
            req.intervention = {{axis.name, value}};
            req.seed = derive_seed(init.seed, salt++);
            data.cf_sets[{axis.name, value}] = ctx.provider->generate(req);
          }
        }
        out[index] = std::move(data);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(ctx.prompts.size());
        return;
      }
    }
  };
  std::size_t n_workers = std::min<std::size_t>(ctx.jobs, ctx.prompts.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

// ---------------------------------------------------------------------------
// evaluate

struct AxisEvaluation {
  std::string axis;
  std::vector<std::pair<std::string, double>> cas;  // per counterfactual value
  std::optional<double> mad;
};

std::vector<AxisEvaluation> evaluate_prompt(const PromptData& data, const RunContext& ctx) {
  std::vector<AxisEvaluation> out;
  ConceptSet init_concepts = concept_set_from_annotations(data.init, ctx.axes);
  for (const auto& axis : ctx.axes) {
    AxisEvaluation eval;
    eval.axis = axis.name;
    std::vector<ConceptSet> cf_concepts;
    for (const auto& value : axis.values) {
      const AnnotatedImageSet* cf = data.find_cf(axis.name, value);
      if (cf == nullptr) {
        throw DataError("prompt '" + data.init.prompt + "': missing counterfactual set (" +
                        axis.name + ", " + value + ")");
      }
      cf_concepts.push_back(concept_set_from_annotations(*cf, ctx.axes));
    }
    std::vector<double> scores = cas_distribution(init_concepts, cf_concepts, ctx.synonyms);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      eval.cas.emplace_back(axis.values[i], scores[i]);
    }
    if (scores.size() >= 2) eval.mad = mad_normalized(scores);
    out.push_back(std::move(eval));
  }
  return out;
}

int cmd_evaluate(RunContext& ctx) {
  std::vector<PromptData> corpus = collect_corpus(ctx);
  ordered_json prompts_json = ordered_json::array();
  std::ostringstream csv;
  csv << ctx.header_line("#") << "prompt,axis,cf_value,cas,mad_normalized\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ordered_json prompt_json;
    prompt_json["prompt"] = ctx.prompts[i];
    prompt_json["axes"] = ordered_json::array();
    for (const auto& eval : evaluate_prompt(corpus[i], ctx)) {
      ordered_json axis_json;
      axis_json["axis"] = eval.axis;
      axis_json["cas"] = ordered_json::array();
      for (const auto& [value, score] : eval.cas) {
        axis_json["cas"].push_back(ordered_json::array({value, score}));
      }
      axis_json["mad_normalized"] = eval.mad ? ordered_json(*eval.mad) : ordered_json(nullptr);
      prompt_json["axes"].push_back(axis_json);
      for (const auto& [value, score] : eval.cas) {
        csv << csv_quote(ctx.prompts[i]) << "," << csv_quote(eval.axis) << ","
            << csv_quote(value) << "," << format_g6(score) << ","
            << (eval.mad ? format_g6(*eval.mad) : "") << "\n";
      }
    }
    prompts_json.push_back(std::move(prompt_json));
  }
  prepare_out_dir(ctx);
  ordered_json payload;
  payload["prompts"] = prompts_json;
  write_json_artifact(ctx, "evaluate.json", payload);
  write_text(ctx.out_dir / "evaluate.csv", csv.str());
  std::cout << "evaluate: " << corpus.size() << " prompt(s) -> "
            << (ctx.out_dir / "evaluate.json").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// connect

std::string matrix_table(const IntersectionalityMatrix& m) {
  std::ostringstream out;
  std::size_t width = 12;
  for (const auto& axis : m.row_axes()) width = std::max(width, axis.size() + 2);
  out << std::string(width, ' ');
  for (const auto& col : m.col_axes()) {
    out << col << std::string(width > col.size() ? width - col.size() : 1, ' ');
  }
  out << "\n";
  for (std::size_t i = 0; i < m.row_axes().size(); ++i) {
    const std::string& row = m.row_axes()[i];
    out << row << std::string(width - row.size(), ' ');
    for (std::size_t j = 0; j < m.col_axes().size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%+.3f", m.at(i, j));
      std::string cell = buf;
      out << cell << std::string(width > cell.size() ? width - cell.size() : 1, ' ');
    }
    out << "\n";
  }
  return out.str();
}

int cmd_connect(RunContext& ctx) {
  std::vector<std::string> measured =
      config_value<std::vector<std::string>>(ctx.config, "measured", ctx.axes.names());
  std::vector<PromptData> corpus = collect_corpus(ctx);
  std::vector<IntersectionalityMatrix> matrices;
  for (const auto& data : corpus) {
    matrices.push_back(build_matrix(data, ctx.axes, measured, ctx.ideals));
  }
  prepare_out_dir(ctx);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& m = matrices[i];
    ordered_json payload;
    payload["prompt"] = ctx.prompts[i];
    payload["matrix"] = ordered_json::parse(dump_matrix(m));
    if (m.square()) payload["aggregate_entanglement"] = aggregate_entanglement(m);
    std::string base = "matrix_" + slug(ctx.prompts[i]);
    write_json_artifact(ctx, base + ".json", payload);
    write_text(ctx.out_dir / (base + ".txt"),
               ctx.header_line("#") + "prompt: " + ctx.prompts[i] + "\n" + matrix_table(m));
  }
  std::cout << "connect: wrote " << corpus.size() << " matrix artifact(s) under "
            << ctx.out_dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// graph

void write_graph_artifacts(const RunContext& ctx, const std::string& base,
                           const DiscoveryResult& result) {
  bool all = ctx.format.empty();
  if (all || ctx.format == "dot") {
    write_text(ctx.out_dir / (base + ".dot"),
               ctx.header_line("//") + export_dot(result.graph));
  }
  if (all || ctx.format == "json") {
    ordered_json payload = ordered_json::parse(export_graph_json(result.graph));
    ordered_json doc;
    doc["meta"] = ctx.meta();
    for (auto& [key, value] : payload.items()) doc[key] = value;
    ordered_json skipped = ordered_json::array();
    for (const auto& s : result.skipped) {
      skipped.push_back({{"source", s.source}, {"target", s.target}, {"reason", s.reason}});
    }
    doc["skipped"] = skipped;
    write_text(ctx.out_dir / (base + ".json"), doc.dump(2) + "\n");
  }
  if (all || ctx.format == "csv") {
    write_text(ctx.out_dir / (base + ".csv"),
               ctx.header_line("#") + export_graph_csv(result.graph));
    NodeStatsReport stats = node_stats(result.graph);
    std::ostringstream csv;
    csv << ctx.header_line("#") << "axis,out_influence,in_influence\n";
    for (const auto& s : stats.stats) {
      csv << s.axis << "," << format_g6(s.out_influence) << "," << format_g6(s.in_influence)
          << "\n";
    }
    csv << "# max_impact=" << stats.max_impact_axis
        << " max_influenced=" << stats.max_influenced_axis << "\n";
    write_text(ctx.out_dir / (base + "_node_stats.csv"), csv.str());
  }
  for (const auto& s : result.skipped) {
    std::cerr << "skipped " << s.source << " -> " << s.target << ": " << s.reason << "\n";
  }
}

int cmd_graph(RunContext& ctx) {
  bool global = config_value<bool>(ctx.config, "global", false);
  std::vector<PromptData> corpus = collect_corpus(ctx);
  if (global) {
    double p_threshold =
        config_value<double>(ctx.config, "global_p_threshold", kGlobalPThreshold);
    double is_floor = config_value<double>(ctx.config, "is_floor", kGlobalIsFloor);
    DiscoveryResult result =
        global_aggregate(corpus, ctx.axes, p_threshold, is_floor, ctx.ideals);
    prepare_out_dir(ctx);
    write_graph_artifacts(ctx, "graph_global", result);
    NodeStatsReport stats = node_stats(result.graph);
    std::cout << "graph: global over " << corpus.size() << " prompt(s), "
              << result.graph.edges.size() << " edge(s), MaxImp=" << stats.max_impact_axis
              << " MaxInf=" << stats.max_influenced_axis << "\n";
    return kExitOk;
  }

  double p_threshold = config_value<double>(ctx.config, "p_threshold", kPromptLevelPThreshold);
  std::vector<DiscoveryResult> results;
  for (const auto& data : corpus) {
    results.push_back(discover_edges(data, ctx.axes, p_threshold, ctx.ideals));
  }
  prepare_out_dir(ctx);
  std::size_t total_edges = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    write_graph_artifacts(ctx, "graph_" + slug(ctx.prompts[i]), results[i]);
    total_edges += results[i].graph.edges.size();
  }
  std::cout << "graph: " << corpus.size() << " prompt-level graph(s), " << total_edges
            << " edge(s) total\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mitigate

PriorityVector priority_from_config(const RunContext& ctx,
                                    std::vector<std::string>* b_star) {
  if (!ctx.config.contains("priority")) {
    throw ConfigError("mitigate needs a priority object {axis: weight}");
  }
  std::vector<std::pair<std::string, double>> entries;
  for (const auto& [axis, weight] : ctx.config.at("priority").items()) {
    if (!weight.is_number()) throw ConfigError("priority weights must be numbers");
    entries.emplace_back(axis, weight.get<double>());
  }
  if (ctx.config.contains("b_star")) {
    *b_star = config_value<std::vector<std::string>>(ctx.config, "b_star", {});
    if (b_star->size() != entries.size()) {
      throw ConfigError("b_star and priority must cover the same axes");
    }
    // priority follows the b_star order
    std::vector<std::pair<std::string, double>> reordered;
    for (const auto& axis : *b_star) {
      bool found = false;
      for (const auto& entry : entries) {
        if (entry.first == axis) {
          reordered.push_back(entry);
          found = true;
          break;
        }
      }
      if (!found) throw ConfigError("b_star axis '" + axis + "' missing from priority");
    }
    entries = std::move(reordered);
  } else {
    for (const auto& [axis, _] : entries) b_star->push_back(axis);
  }
  return PriorityVector(std::move(entries));
}

std::string steps_csv(const RunContext& ctx, const MitigationTrace& trace) {
  std::ostringstream csv;
  csv << ctx.header_line("#") << "step,selected_axis,tau_before,tau_after";
  for (const auto& [axis, _] : trace.initial_w) csv << ",w_" << axis;
  csv << ",alerts\n";
  csv << "0,,," << format_g6(trace.initial_tau);
  for (const auto& [_, w] : trace.initial_w) csv << "," << format_g6(w);
  csv << ",\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const MitigationStep& step = trace.steps[i];
    csv << (i + 1) << "," << step.selected_axis << "," << format_g6(step.tau_before) << ","
        << format_g6(step.tau_after);
    for (const auto& [_, w] : step.per_axis_w) csv << "," << format_g6(w);
    std::string alerts;
    for (const auto& alert : step.alerts) {
      if (!alerts.empty()) alerts += ";";
      alerts += alert.axis + " worsened " + format_g6(alert.before) + "->" +
                format_g6(alert.after);
    }
    csv << ",\"" << alerts << "\"\n";
  }
  return csv.str();
}

int cmd_mitigate(RunContext& ctx) {
  if (ctx.is_recorded) {
    throw ConfigError("mitigate needs a generation provider, not a recorded corpus");
  }
  std::vector<std::string> b_star;
  PriorityVector priority = priority_from_config(ctx, &b_star);
  MitigationConfig cfg;
  cfg.epsilon = config_value<double>(ctx.config, "epsilon", 0.35);
  cfg.max_steps = config_value<std::size_t>(ctx.config, "max_steps", 0);
  cfg.worsen_delta = config_value<double>(ctx.config, "worsen_delta", 0.05);
  cfg.ideals = ctx.ideals;
  cfg.budget_n = config_value<std::size_t>(ctx.config, "budget_n", ctx.budget_n);
  cfg.mode = ctx.mode;
  cfg.seed = ctx.seed;

  std::vector<MitigationTrace> traces;
  for (const auto& prompt : ctx.prompts) {
    traces.push_back(
        intermit_run({prompt}, ctx.axes, b_star, priority, cfg, *ctx.provider));
  }

  prepare_out_dir(ctx);
  bool incomplete = false;
  bool provider_failed = false;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const MitigationTrace& trace = traces[i];
    std::string base = "trace_" + slug(ctx.prompts[i]);
    ordered_json payload;
    payload["prompt"] = ctx.prompts[i];
    ordered_json trace_json = ordered_json::parse(dump_trace(trace));
    for (auto& [key, value] : trace_json.items()) payload[key] = value;
    write_json_artifact(ctx, base + ".json", payload);
    write_text(ctx.out_dir / (base + "_steps.csv"), steps_csv(ctx, trace));

    std::cout << "mitigate '" << ctx.prompts[i] << "': " << to_string(trace.reason) << ", tau "
              << format_g6(trace.initial_tau) << " -> " << format_g6(trace.final_tau) << " in "
              << trace.steps.size() << " step(s)\n";
    for (const auto& step : trace.steps) {
      for (const auto& alert : step.alerts) {
        std::cout << "  ALERT: mitigating " << step.selected_axis << " worsened " << alert.axis
                  << " (" << format_g6(alert.before) << " -> " << format_g6(alert.after)
                  << ")\n";
      }
    }
    if (trace.reason == TerminationReason::provider_error) provider_failed = true;
    if (trace.reason == TerminationReason::exhausted ||
        trace.reason == TerminationReason::max_steps_reached) {
      incomplete = true;
    }
  }
  MitigationMetrics metrics = mitigation_metrics(traces);
  ordered_json summary;
  summary["mit_amt"] = metrics.mit_amt;
  summary["mit_steps"] = metrics.mit_steps;
  write_json_artifact(ctx, "mitigation_summary.json", summary);
  std::cout << "MitAmt=" << format_g6(metrics.mit_amt)
            << " MitSteps=" << format_g6(metrics.mit_steps) << "\n";
  if (provider_failed) return kExitProviderError;
  return incomplete ? kExitMitigationIncomplete : kExitOk;
}

// ---------------------------------------------------------------------------
// sensitivity

int cmd_sensitivity(RunContext& ctx) {
  std::string sweep = config_value<std::string>(ctx.config, "sweep", "vqa_error");
  SweepKind kind;
  if (sweep == "vqa_error") {
    kind = SweepKind::vqa_error;
  } else if (sweep == "image_count") {
    kind = SweepKind::image_count;
  } else {
    throw ConfigError("sweep must be vqa_error or image_count");
  }
  std::vector<double> levels = config_value<std::vector<double>>(
      ctx.config, "levels", kind == SweepKind::vqa_error ? std::vector<double>{0.05, 0.1, 0.2}
                                                         : std::vector<double>{40, 32, 16});
  int repeats = config_value<int>(ctx.config, "repeats", 3);
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < repeats; ++i) {
    seeds.push_back(derive_seed(ctx.seed, static_cast<std::uint64_t>(i)));
  }

  std::vector<PromptData> corpus = collect_corpus(ctx);
  SensitivityReport report = sensitivity_sweep(corpus, ctx.axes, ctx.ideals, kind, levels, seeds);

  prepare_out_dir(ctx);
  write_json_artifact(ctx, "sensitivity.json",
                      ordered_json::parse(dump_sensitivity_report(report)));
  std::ostringstream csv;
  csv << ctx.header_line("#") << "level,metric,mean_delta,stddev\n";
  for (const auto& level : report.levels) {
    csv << format_g6(level.level) << ",cas," << format_g6(level.cas.mean) << ","
        << format_g6(level.cas.stddev) << "\n";
    csv << format_g6(level.level) << ",mad," << format_g6(level.mad.mean) << ","
        << format_g6(level.mad.stddev) << "\n";
    csv << format_g6(level.level) << ",is," << format_g6(level.is.mean) << ","
        << format_g6(level.is.stddev) << "\n";
  }
  write_text(ctx.out_dir / "sensitivity.csv", csv.str());
  std::cout << "sensitivity: " << to_string(kind) << " sweep over " << report.levels.size()
            << " level(s), " << seeds.size() << " seed(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demo

int cmd_demo(RunContext& ctx) {
  // End-to-end pass over the bundled occupation scenario, then a
  // mitigation run on one occupation with three two-valued axes so the
  // even split is exact at the default budget.
  std::string stage = "setup";
  try {
    prepare_out_dir(ctx);

    stage = "evaluate";
    {
      RunContext sub = ctx;
      sub.out_dir = ctx.out_dir / "evaluate";
      fs::create_directories(sub.out_dir);
      cmd_evaluate(sub);
    }
    stage = "connect";
    {
      RunContext sub = ctx;
      sub.prompts = {ctx.prompts.front()};
      sub.out_dir = ctx.out_dir / "connect";
      fs::create_directories(sub.out_dir);
      cmd_connect(sub);
    }
    stage = "graph";
    {
      RunContext sub = ctx;
      sub.config["global"] = true;
      sub.out_dir = ctx.out_dir / "graph";
      fs::create_directories(sub.out_dir);
      cmd_graph(sub);
    }
    stage = "mitigate";
    {
      RunContext sub = ctx;
      sub.prompts = {"nurse"};
      sub.config["priority"] = {{"gender", 0.4}, {"environment", 0.3}, {"clothing", 0.3}};
      sub.config.erase("b_star");
      sub.out_dir = ctx.out_dir / "mitigate";
      fs::create_directories(sub.out_dir);
      int code = cmd_mitigate(sub);
      if (code != kExitOk) {
        throw DataError("mitigation did not reach the threshold (exit " +
                        std::to_string(code) + ")");
      }
    }
  } catch (const Error&) {
    std::cerr << "demo stage '" << stage << "' failed\n";
    throw;
  }
  std::cout << "demo: all stages completed under " << ctx.out_dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_command(const CliOptions& opts) {
  RunContext ctx = build_context(opts);
  if (opts.command == "evaluate") {
    int code = cmd_evaluate(ctx);
    return code;
  }
  if (opts.command == "connect") return cmd_connect(ctx);
  if (opts.command == "graph") return cmd_graph(ctx);
  if (opts.command == "mitigate") return cmd_mitigate(ctx);
  if (opts.command == "sensitivity") return cmd_sensitivity(ctx);
  if (opts.command == "demo") return cmd_demo(ctx);
  throw ConfigError("unknown command '" + opts.command + "'");
}

}  // namespace biasaudit
