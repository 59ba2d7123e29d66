#pragma once

#include <span>
#include <string>
#include <vector>

#include "biasengine/biasconnect.hpp"
#include "biasengine/stats.hpp"

namespace biasengine {

enum class GraphScope { prompt_level, global };

struct BiasEdge {
  std::string source;
  std::string target;
  double is_weight = 0.0;
  double p_value = 1.0;

  friend bool operator==(const BiasEdge&, const BiasEdge&) = default;
};

/// Directed graph of statistically significant bias interactions.
/// Self-loops are never exported; prompt-level graphs apply only the
/// p-value filter, global graphs additionally apply the |IS| floor.
struct BiasGraph {
  std::vector<std::string> nodes;
  std::vector<BiasEdge> edges;
  GraphScope scope = GraphScope::prompt_level;

  friend bool operator==(const BiasGraph&, const BiasGraph&) = default;
};

/// A (source, target) pair that could not be tested, with the reason.
struct SkippedPair {
  std::string source;
  std::string target;
  std::string reason;
};

struct DiscoveryResult {
  BiasGraph graph;
  std::vector<SkippedPair> skipped;
};

/// Counts of `target` values per counterfactual of `source`, rows in the
/// source axis's value order. Throws NotTestableError on an all-zero
/// table and DataError on missing counterfactual sets.
ContingencyTable contingency_table(const PromptData& data, const BiasAxis& source,
                                   const BiasAxis& target);

/// Prompt-level pairwise causal discovery: chi-square test per ordered
/// axis pair, keep pairs with p below the threshold, weight edges with
/// Intersectional Sensitivity. Untestable pairs are reported, never
/// silently dropped.
DiscoveryResult discover_edges(const PromptData& data, const AxisSet& axes, double p_threshold,
                               const IdealSet& ideals);

/// Default significance thresholds.
inline constexpr double kPromptLevelPThreshold = 1e-4;
inline constexpr double kGlobalPThreshold = 5e-5;
inline constexpr double kGlobalIsFloor = 0.03;

/// Corpus-level aggregation: contingency tables summed cellwise across
/// prompts, global distributions from the summed counts, and edges kept
/// when p < p_threshold and |IS_global| > is_floor.
DiscoveryResult global_aggregate(std::span<const PromptData> per_prompt, const AxisSet& axes,
                                 double p_threshold, double is_floor, const IdealSet& ideals);

struct NodeStats {
  std::string axis;
  double out_influence = 0.0;  // sum of |IS| over outgoing edges
  double in_influence = 0.0;   // sum of |IS| over incoming edges
};

struct NodeStatsReport {
  std::vector<NodeStats> stats;    // in node order
  std::string max_impact_axis;     // argmax out_influence, ties to canonical order
  std::string max_influenced_axis; // argmax in_influence
};

NodeStatsReport node_stats(const BiasGraph& g);

/// DOT digraph with node declarations and edges labeled
/// "IS=<3 decimals> p=<2-significant-digit scientific>", edges ordered
/// lexicographically by (source, target).
std::string export_dot(const BiasGraph& g);

/// JSON mirroring the BiasGraph fields; parse(export(g)) == g.
std::string export_graph_json(const BiasGraph& g);
BiasGraph parse_graph_json(const std::string& text);

/// Edge list (source,target,is,p) for spreadsheet audits.
std::string export_graph_csv(const BiasGraph& g);

}  // namespace biasengine
