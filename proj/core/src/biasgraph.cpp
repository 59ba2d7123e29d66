#include "biasengine/biasgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "biasengine/errors.hpp"

namespace biasengine {

namespace {
using ordered_json = nlohmann::ordered_json;

std::vector<const AnnotatedImageSet*> gather_cf_sets(const PromptData& data,
                                                     const BiasAxis& source) {
  std::vector<const AnnotatedImageSet*> sets;
  sets.reserve(source.values.size());
  for (const auto& value : source.values) {
    const AnnotatedImageSet* set = data.find_cf(source.name, value);
    if (set == nullptr) {
      throw DataError("missing counterfactual set (" + source.name + ", " + value + ")");
    }
    sets.push_back(set);
  }
  return sets;
}
}  // namespace

ContingencyTable contingency_table(const PromptData& data, const BiasAxis& source,
                                   const BiasAxis& target) {
  auto cf_sets = gather_cf_sets(data, source);
  ContingencyTable t;
  t.row_labels = source.values;
  t.col_labels = target.values;
  t.counts.assign(source.values.size(),
                  std::vector<std::int64_t>(target.values.size(), 0));
  std::int64_t grand = 0;
  for (std::size_t r = 0; r < cf_sets.size(); ++r) {
    for (const auto& annotation : cf_sets[r]->annotations) {
      int idx = target.index_of(annotation.value_for(target.name));
      if (idx >= 0) {
        t.counts[r][static_cast<std::size_t>(idx)] += 1;
        ++grand;
      }
    }
  }
  if (grand == 0) {
    throw NotTestableError("contingency table " + source.name + " -> " + target.name +
                           " has no usable counts");
  }
  return t;
}

DiscoveryResult discover_edges(const PromptData& data, const AxisSet& axes, double p_threshold,
                               const IdealSet& ideals) {
  DiscoveryResult out;
  out.graph.nodes = axes.names();
  out.graph.scope = GraphScope::prompt_level;
  for (const auto& source : axes) {
    for (const auto& target : axes) {
      if (source.name == target.name) continue;
      ChiSquareResult chi;
      try {
        chi = chi_square_p(contingency_table(data, source, target));
      } catch (const NotTestableError& e) {
        out.skipped.push_back({source.name, target.name, e.what()});
        continue;
      }
      if (chi.p < p_threshold) {
        auto cf_sets = gather_cf_sets(data, source);
        InterventionResult r = intersectional_sensitivity(data.init, cf_sets, source, target,
                                                          ideals.for_axis(target.name));
        out.graph.edges.push_back({source.name, target.name, r.is_value, chi.p});
      }
    }
  }
  return out;
}

DiscoveryResult global_aggregate(std::span<const PromptData> per_prompt, const AxisSet& axes,
                                 double p_threshold, double is_floor, const IdealSet& ideals) {
  if (per_prompt.empty()) throw DataError("global_aggregate: empty corpus");
  for (const auto& data : per_prompt) {
    auto missing = missing_coverage(data, axes);
    if (!missing.empty()) {
      throw DataError("global_aggregate: prompt '" + data.init.prompt +
                      "' is missing counterfactual coverage for (" + missing.front().axis + ", " +
                      missing.front().value + ")" +
                      (missing.size() > 1
                           ? " and " + std::to_string(missing.size() - 1) + " more"
                           : ""));
    }
  }

  DiscoveryResult out;
  out.graph.nodes = axes.names();
  out.graph.scope = GraphScope::global;

  // Pooled initial counts per target axis across all prompts.
  std::map<std::string, CategoricalDistribution> init_counts;
  for (const auto& target : axes) {
    std::vector<CategoricalDistribution> per;
    per.reserve(per_prompt.size());
    for (const auto& data : per_prompt) {
      per.push_back(distribution_from_annotations(data.init, target));
    }
    init_counts.emplace(target.name, sum_distributions(per));
  }

  for (const auto& source : axes) {
    for (const auto& target : axes) {
      if (source.name == target.name) continue;

      // Cellwise sum of the per-prompt contingency tables.
      ContingencyTable global;
      global.row_labels = source.values;
      global.col_labels = target.values;
      global.counts.assign(source.values.size(),
                           std::vector<std::int64_t>(target.values.size(), 0));
      bool any = false;
      for (const auto& data : per_prompt) {
        ContingencyTable t;
        try {
          t = contingency_table(data, source, target);
        } catch (const NotTestableError&) {
          continue;  // an all-unknown prompt contributes nothing
        }
        any = true;
        for (std::size_t r = 0; r < t.rows(); ++r) {
          for (std::size_t c = 0; c < t.cols(); ++c) global.counts[r][c] += t.counts[r][c];
        }
      }
      if (!any) {
        out.skipped.push_back({source.name, target.name, "no usable counts in any prompt"});
        continue;
      }

      ChiSquareResult chi;
      try {
        chi = chi_square_p(global);
      } catch (const NotTestableError& e) {
        out.skipped.push_back({source.name, target.name, e.what()});
        continue;
      }
      if (chi.p >= p_threshold) continue;

      // Global distributions: column sums of the pooled table vs pooled
      // initial counts, both against the target's ideal.
      std::vector<double> col_sums(target.values.size(), 0.0);
      for (const auto& row : global.counts) {
        for (std::size_t c = 0; c < row.size(); ++c) col_sums[c] += static_cast<double>(row[c]);
      }
      CategoricalDistribution d_global(target.name, std::move(col_sums));
      const CategoricalDistribution& ideal = ideals.for_axis(target.name);
      const CategoricalDistribution& init = init_counts.at(target.name);
      if (init.empty()) {
        out.skipped.push_back({source.name, target.name, "empty pooled initial distribution"});
        continue;
      }
      double w_init = normalized_bias(normalize(init), ideal);
      double w_global = normalized_bias(normalize(d_global), ideal);
      double is_global = w_init - w_global;
      if (std::fabs(is_global) > is_floor) {
        out.graph.edges.push_back({source.name, target.name, is_global, chi.p});
      }
    }
  }
  return out;
}

NodeStatsReport node_stats(const BiasGraph& g) {
  NodeStatsReport report;
  report.stats.reserve(g.nodes.size());
  for (const auto& node : g.nodes) report.stats.push_back({node, 0.0, 0.0});
  auto find = [&report](const std::string& axis) -> NodeStats* {
    for (auto& s : report.stats) {
      if (s.axis == axis) return &s;
    }
    return nullptr;
  };
  for (const auto& edge : g.edges) {
    if (NodeStats* s = find(edge.source)) s->out_influence += std::fabs(edge.is_weight);
    if (NodeStats* s = find(edge.target)) s->in_influence += std::fabs(edge.is_weight);
  }
  double best_out = -1.0, best_in = -1.0;
  for (const auto& s : report.stats) {
    if (s.out_influence > best_out) {
      best_out = s.out_influence;
      report.max_impact_axis = s.axis;
    }
    if (s.in_influence > best_in) {
      best_in = s.in_influence;
      report.max_influenced_axis = s.axis;
    }
  }
  return report;
}

namespace {
std::vector<BiasEdge> sorted_edges(const BiasGraph& g) {
  std::vector<BiasEdge> edges = g.edges;
  std::sort(edges.begin(), edges.end(), [](const BiasEdge& a, const BiasEdge& b) {
    return std::tie(a.source, a.target) < std::tie(b.source, b.target);
  });
  return edges;
}

std::string format_is(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string format_p(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1e", v);
  return buf;
}

std::string scope_name(GraphScope scope) {
  return scope == GraphScope::global ? "global" : "prompt_level";
}
}  // namespace

std::string export_dot(const BiasGraph& g) {
  std::ostringstream out;
  out << "digraph bias {\n";
  for (const auto& node : g.nodes) out << "  \"" << node << "\";\n";
  for (const auto& edge : sorted_edges(g)) {
    out << "  \"" << edge.source << "\" -> \"" << edge.target << "\" [label=\"IS="
        << format_is(edge.is_weight) << " p=" << format_p(edge.p_value) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

std::string export_graph_json(const BiasGraph& g) {
  ordered_json j;
  j["nodes"] = g.nodes;
  j["edges"] = ordered_json::array();
  for (const auto& edge : g.edges) {
    ordered_json e;
    e["source"] = edge.source;
    e["target"] = edge.target;
    e["is"] = edge.is_weight;
    e["p"] = edge.p_value;
    j["edges"].push_back(e);
  }
  j["scope"] = scope_name(g.scope);
  return j.dump(2) + "\n";
}

BiasGraph parse_graph_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("graph JSON: ") + e.what());
  }
  BiasGraph g;
  try {
    g.nodes = j.at("nodes").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) {
      g.edges.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>(),
                         e.at("is").get<double>(), e.at("p").get<double>()});
    }
    std::string scope = j.at("scope").get<std::string>();
    if (scope == "global") {
      g.scope = GraphScope::global;
    } else if (scope == "prompt_level") {
      g.scope = GraphScope::prompt_level;
    } else {
      throw DataError("graph JSON: unknown scope '" + scope + "'");
    }
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("graph JSON: ") + e.what());
  }
  return g;
}

namespace {
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

std::string format_g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace

std::string export_graph_csv(const BiasGraph& g) {
  std::ostringstream out;
  out << "source,target,is,p\n";
  for (const auto& edge : sorted_edges(g)) {
    out << csv_quote(edge.source) << "," << csv_quote(edge.target) << ","
        << format_g6(edge.is_weight) << "," << format_g6(edge.p_value) << "\n";
  }
  return out.str();
}

}  // namespace biasengine
