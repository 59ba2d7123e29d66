#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasengine/biasconnect.hpp"
#include "biasengine/providers.hpp"

namespace biasengine {

/// User priorities over the selected bias axes B*: non-negative weights
/// with unit L1 norm, in B* order.
class PriorityVector {
 public:
  PriorityVector() = default;
  /// Throws ConfigError on negative weights or an L1 norm off 1 by more
  /// than 1e-9.
  explicit PriorityVector(std::vector<std::pair<std::string, double>> entries);

  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  std::vector<std::string> axis_names() const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

struct MitigationConfig {
  double epsilon = 0.35;
  std::size_t max_steps = 0;  // 0 -> number of axes in the axis set
  double worsen_delta = 0.05;
  IdealSet ideals;
  std::size_t budget_n = 48;
  GenerationMode mode = GenerationMode::exact_counts;
  std::uint64_t seed = 0;
};

struct WorsenAlert {
  std::string axis;
  double before = 0.0;
  double after = 0.0;
};

struct MitigationStep {
  std::string selected_axis;
  std::vector<std::pair<std::string, double>> gamma_scores;  // empty when skipped
  double tau_before = 0.0;
  double tau_after = 0.0;
  std::vector<std::pair<std::string, double>> per_axis_w;  // after this step, all axes
  std::vector<WorsenAlert> alerts;
};

enum class TerminationReason { threshold_met, exhausted, max_steps_reached, provider_error };

std::string to_string(TerminationReason reason);
TerminationReason termination_reason_from_string(const std::string& s);

struct MitigationTrace {
  std::vector<MitigationStep> steps;
  std::vector<std::string> mitigated_axes;
  std::vector<std::pair<std::string, double>> initial_w;  // pre-mitigation, all axes
  double initial_tau = 0.0;
  double final_tau = 0.0;
  double mit_amt = 0.0;
  double mit_steps_ratio = 0.0;
  TerminationReason reason = TerminationReason::threshold_met;
  std::optional<std::string> error;
};

/// One regeneration cell of a mitigated prompt plan: the composed prompt
/// text, the value constraints it encodes, and its share of the budget.
struct PlanCell {
  std::string text;
  std::vector<Intervention> constraints;
  std::size_t allocation = 0;
};

struct MitigatedPromptPlan {
  std::vector<PlanCell> cells;
  bool truncated = false;  // more cells than budget: some allocations are 0
};

/// Priority-weighted bias score: dot product of per-axis bias deviations
/// (in B* order) with the priority vector. Throws ConfigError when the
/// axis order does not match.
double tau(std::span<const std::pair<std::string, double>> w, const PriorityVector& p);

/// Alignment of each candidate axis's sensitivity row with the priority
/// vector: gamma_i = <s'_i, p>. Matrix columns must match p's axes.
std::vector<std::pair<std::string, double>> gamma_scores(const IntersectionalityMatrix& s,
                                                         const PriorityVector& p);

/// Argmax gamma over axes not yet mitigated; ties go to the earlier
/// (canonical) axis. nullopt when every candidate is exhausted.
std::optional<std::string> select_axis(
    std::span<const std::pair<std::string, double>> gammas,
    const std::set<std::string>& already_mitigated);

/// Cartesian product of counterfactual values over the mitigated axes,
/// applied in mitigation order, with the budget apportioned evenly
/// (largest remainder; allocations differ by at most 1).
MitigatedPromptPlan prompt_modification_plan(const PromptSpec& base_prompt, const AxisSet& axes,
                                             std::span<const std::string> mitigated_axes,
                                             std::size_t budget_n);

/// The iterative mitigation loop: measure tau over B*, select the axis
/// whose sensitivity row best aligns with the priorities, regenerate
/// under the extended prompt plan, and repeat until tau < epsilon, every
/// candidate is mitigated, or max_steps is hit. A single-axis B* skips
/// the cross-axis analysis. Provider failures abort the loop and return
/// the partial trace with an error status.
MitigationTrace intermit_run(const PromptSpec& prompt, const AxisSet& axes,
                             std::span<const std::string> b_star, const PriorityVector& p,
                             const MitigationConfig& cfg, GenerationProvider& provider);

struct MitigationMetrics {
  double mit_amt = 0.0;      // final tau (mean over prompts for a corpus)
  double mit_steps = 0.0;    // |mitigated| / |B*|
};

MitigationMetrics mitigation_metrics(const MitigationTrace& trace);
MitigationMetrics mitigation_metrics(std::span<const MitigationTrace> traces);

/// Pearson correlation between estimated IS values and the IS values
/// recomputed after actually mitigating each source axis.
double validate_estimates(std::span<const double> pre, std::span<const double> post);

}  // namespace biasengine
