#include "biasengine/intermit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "biasengine/errors.hpp"
#include "biasengine/rng.hpp"
#include "biasengine/stats.hpp"

namespace biasengine {

PriorityVector::PriorityVector(std::vector<std::pair<std::string, double>> entries)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw ConfigError("priority vector is empty");
  double l1 = 0.0;
  for (const auto& [axis, weight] : entries_) {
    if (!(weight >= 0.0)) throw ConfigError("priority weight for '" + axis + "' must be >= 0");
    l1 += weight;
  }
  if (std::fabs(l1 - 1.0) > 1e-9) {
    throw ConfigError("priority vector L1 norm is " + std::to_string(l1) + ", expected 1");
  }
}

std::vector<std::string> PriorityVector::axis_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& [axis, _] : entries_) names.push_back(axis);
  return names;
}

std::string to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::threshold_met: return "threshold_met";
    case TerminationReason::exhausted: return "exhausted";
    case TerminationReason::max_steps_reached: return "max_steps_reached";
    case TerminationReason::provider_error: return "provider_error";
  }
  return "unknown";
}

TerminationReason termination_reason_from_string(const std::string& s) {
  if (s == "threshold_met") return TerminationReason::threshold_met;
  if (s == "exhausted") return TerminationReason::exhausted;
  if (s == "max_steps_reached") return TerminationReason::max_steps_reached;
  if (s == "provider_error") return TerminationReason::provider_error;
  throw DataError("unknown termination reason '" + s + "'");
}

double tau(std::span<const std::pair<std::string, double>> w, const PriorityVector& p) {
  if (w.size() != p.size()) throw ConfigError("tau: bias vector / priority size mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i].first != p.entries()[i].first) {
      throw ConfigError("tau: axis order mismatch at position " + std::to_string(i) + " ('" +
                        w[i].first + "' vs '" + p.entries()[i].first + "')");
    }
    dot += w[i].second * p.entries()[i].second;
  }
  return dot;
}

std::vector<std::pair<std::string, double>> gamma_scores(const IntersectionalityMatrix& s,
                                                         const PriorityVector& p) {
  if (s.col_axes().size() != p.size()) {
    throw ConfigError("gamma_scores: matrix column / priority size mismatch");
  }
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (s.col_axes()[j] != p.entries()[j].first) {
      throw ConfigError("gamma_scores: column order mismatch at position " + std::to_string(j));
    }
  }
  std::vector<std::pair<std::string, double>> gammas;
  gammas.reserve(s.row_axes().size());
  for (std::size_t i = 0; i < s.row_axes().size(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      dot += s.at(i, j) * p.entries()[j].second;
    }
    gammas.emplace_back(s.row_axes()[i], dot);
  }
  return gammas;
}

std::optional<std::string> select_axis(std::span<const std::pair<std::string, double>> gammas,
                                       const std::set<std::string>& already_mitigated) {
  const std::pair<std::string, double>* best = nullptr;
  for (const auto& candidate : gammas) {
    if (already_mitigated.count(candidate.first)) continue;
    if (best == nullptr || candidate.second > best->second) best = &candidate;
  }
  if (best == nullptr) return std::nullopt;
  return best->first;
}

namespace {

/// Drop a leading photo-caption prefix so full-sentence templates compose
/// into one fluent sentence instead of nesting.
std::string strip_caption_prefix(const std::string& s) {
  static const char* prefixes[] = {"a photo of an ", "a photo of a "};
  for (const char* prefix : prefixes) {
    std::size_t len = std::char_traits<char>::length(prefix);
    if (s.size() >= len) {
      bool match = true;
      for (std::size_t i = 0; i < len; ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) {
          match = false;
          break;
        }
      }
      if (match) return s.substr(len);
    }
  }
  return s;
}

}  // namespace

MitigatedPromptPlan prompt_modification_plan(const PromptSpec& base_prompt, const AxisSet& axes,
                                             std::span<const std::string> mitigated_axes,
                                             std::size_t budget_n) {
  if (budget_n < 1) throw ConfigError("prompt_modification_plan: budget must be >= 1");

  // Cartesian product over the mitigated axes' values, first mitigated
  // axis slowest-varying. Each cell composes its value templates in
  // mitigation order: the next template wraps the previous one's text
  // (minus any caption prefix) via the {prompt} slot.
  struct Cell {
    std::string tmpl = "{prompt}";
    std::vector<Intervention> constraints;
  };
  std::vector<Cell> cells(1);
  for (const auto& axis_name : mitigated_axes) {
    const BiasAxis& axis = axes.at(axis_name);
    if (axis.cf_prompt_templates.size() != axis.values.size()) {
      throw ConfigError("axis '" + axis.name + "' has no counterfactual prompt templates");
    }
    std::vector<Cell> expanded;
    expanded.reserve(cells.size() * axis.values.size());
    for (const auto& cell : cells) {
      for (std::size_t v = 0; v < axis.values.size(); ++v) {
        Cell next = cell;
        std::string inner =
            cell.tmpl == "{prompt}" ? cell.tmpl : strip_caption_prefix(cell.tmpl);
        next.tmpl = apply_prompt_template(axis.cf_prompt_templates[v], inner);
        next.constraints.push_back({axis.name, axis.values[v]});
        expanded.push_back(std::move(next));
      }
    }
    cells = std::move(expanded);
  }

  MitigatedPromptPlan plan;
  std::size_t count = cells.size();
  plan.truncated = count > budget_n;
  std::size_t base = budget_n / count;
  std::size_t leftover = budget_n % count;
  plan.cells.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PlanCell cell;
    cell.text = apply_prompt_template(cells[i].tmpl, base_prompt.text);
    cell.constraints = std::move(cells[i].constraints);
    cell.allocation = base + (i < leftover ? 1 : 0);
    plan.cells.push_back(std::move(cell));
  }
  return plan;
}

namespace {

AnnotatedImageSet pooled_generate(GenerationProvider& provider, const std::string& prompt,
                                  const MitigatedPromptPlan& plan,
                                  std::span<const Intervention> extra, GenerationMode mode,
                                  std::uint64_t seed, std::uint64_t salt) {
  AnnotatedImageSet pooled;
  pooled.prompt = prompt;
  if (extra.size() == 1) pooled.intervention = extra.front();
  for (std::size_t i = 0; i < plan.cells.size(); ++i) {
    const PlanCell& cell = plan.cells[i];
    if (cell.allocation == 0) continue;
    GenerationRequest req;
    req.prompt = prompt;
    req.intervention = cell.constraints;
    req.intervention.insert(req.intervention.end(), extra.begin(), extra.end());
    req.n = cell.allocation;
    req.mode = mode;
    req.seed = derive_seed(seed, salt * 1000003ULL + i);
    AnnotatedImageSet part = provider.generate(req);
    for (auto& annotation : part.annotations) {
      pooled.annotations.push_back(std::move(annotation));
    }
  }
  return pooled;
}

std::vector<std::pair<std::string, double>> measure_all(const AnnotatedImageSet& pooled,
                                                        const AxisSet& axes,
                                                        const IdealSet& ideals) {
  std::vector<std::pair<std::string, double>> w;
  w.reserve(axes.size());
  for (const auto& axis : axes) {
    auto [_, bias] = initial_bias(pooled, axis, ideals.for_axis(axis.name));
    w.emplace_back(axis.name, bias);
  }
  return w;
}

std::vector<std::pair<std::string, double>> restrict_to(
    const std::vector<std::pair<std::string, double>>& w, std::span<const std::string> names) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    for (const auto& entry : w) {
      if (entry.first == name) {
        out.push_back(entry);
        break;
      }
    }
  }
  return out;
}

}  // namespace

MitigationTrace intermit_run(const PromptSpec& prompt, const AxisSet& axes,
                             std::span<const std::string> b_star, const PriorityVector& p,
                             const MitigationConfig& cfg, GenerationProvider& provider) {
  if (b_star.empty()) throw ConfigError("intermit_run: B* must not be empty");
  for (const auto& name : b_star) axes.at(name);
  if (p.size() != b_star.size()) {
    throw ConfigError("intermit_run: priority vector does not cover B*");
  }
  for (std::size_t i = 0; i < b_star.size(); ++i) {
    if (p.entries()[i].first != b_star[i]) {
      throw ConfigError("intermit_run: priority axis order must match B*");
    }
  }
  if (!(cfg.epsilon > 0.0) || cfg.epsilon > 1.0) {
    throw ConfigError("intermit_run: epsilon must be in (0, 1]");
  }
  std::size_t max_steps = cfg.max_steps == 0 ? axes.size() : cfg.max_steps;

  MitigationTrace trace;
  std::set<std::string> mitigated;
  std::vector<std::string> mitigation_order;
  MitigatedPromptPlan plan = prompt_modification_plan(prompt, axes, {}, cfg.budget_n);

  try {
    AnnotatedImageSet pooled = pooled_generate(provider, prompt.text, plan, {}, cfg.mode,
                                               cfg.seed, /*salt=*/0);
    std::vector<std::pair<std::string, double>> w_all = measure_all(pooled, axes, cfg.ideals);
    double current_tau = tau(restrict_to(w_all, b_star), p);
    trace.initial_w = w_all;
    trace.initial_tau = current_tau;
    trace.final_tau = current_tau;

    std::uint64_t step_salt = 1;
    while (true) {
      if (current_tau < cfg.epsilon) {
        trace.reason = TerminationReason::threshold_met;
        break;
      }
      if (trace.steps.size() >= max_steps) {
        trace.reason = TerminationReason::max_steps_reached;
        break;
      }

      std::vector<std::pair<std::string, double>> gammas;
      std::optional<std::string> selected;
      if (b_star.size() == 1) {
        // No cross-axis analysis with a single target: mitigate it directly.
        if (!mitigated.count(std::string(b_star.front()))) {
          selected = b_star.front();
        }
      } else {
        PromptData state;
        state.init = pooled;
        for (const auto& axis : axes) {
          for (const auto& value : axis.values) {
            std::vector<Intervention> extra = {{axis.name, value}};
            state.cf_sets[{axis.name, value}] =
                pooled_generate(provider, prompt.text, plan, extra, cfg.mode, cfg.seed,
                                step_salt * 65537ULL + state.cf_sets.size() + 1);
          }
        }
        IntersectionalityMatrix s = build_matrix(state, axes, b_star, cfg.ideals);
        gammas = gamma_scores(s, p);
        selected = select_axis(gammas, mitigated);
      }

      if (!selected) {
        trace.reason = TerminationReason::exhausted;
        break;
      }

      mitigated.insert(*selected);
      mitigation_order.push_back(*selected);
      plan = prompt_modification_plan(prompt, axes, mitigation_order, cfg.budget_n);

      std::vector<std::pair<std::string, double>> w_before = w_all;
      pooled = pooled_generate(provider, prompt.text, plan, {}, cfg.mode, cfg.seed, step_salt);
      w_all = measure_all(pooled, axes, cfg.ideals);
      double tau_after = tau(restrict_to(w_all, b_star), p);

      MitigationStep step;
      step.selected_axis = *selected;
      step.gamma_scores = std::move(gammas);
      step.tau_before = current_tau;
      step.tau_after = tau_after;
      step.per_axis_w = w_all;
      for (std::size_t i = 0; i < w_all.size(); ++i) {
        if (w_all[i].second - w_before[i].second > cfg.worsen_delta) {
          step.alerts.push_back({w_all[i].first, w_before[i].second, w_all[i].second});
        }
      }
      trace.steps.push_back(std::move(step));
      trace.mitigated_axes = mitigation_order;
      current_tau = tau_after;
      trace.final_tau = current_tau;
      ++step_salt;
    }
  } catch (const ProviderError& e) {
    trace.reason = TerminationReason::provider_error;
    trace.error = e.what();
  }

  trace.mit_amt = trace.final_tau;
  trace.mit_steps_ratio =
      static_cast<double>(trace.mitigated_axes.size()) / static_cast<double>(b_star.size());
  return trace;
}

MitigationMetrics mitigation_metrics(const MitigationTrace& trace) {
  return {trace.mit_amt, trace.mit_steps_ratio};
}

MitigationMetrics mitigation_metrics(std::span<const MitigationTrace> traces) {
  if (traces.empty()) throw DataError("mitigation_metrics: no traces");
  MitigationMetrics out;
  for (const auto& trace : traces) {
    out.mit_amt += trace.mit_amt;
    out.mit_steps += trace.mit_steps_ratio;
  }
  out.mit_amt /= static_cast<double>(traces.size());
  out.mit_steps /= static_cast<double>(traces.size());
  return out;
}

double validate_estimates(std::span<const double> pre, std::span<const double> post) {
  return pearson(pre, post);
}

}  // namespace biasengine
