#include "biasengine/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "biasengine/concepts.hpp"
#include "biasengine/errors.hpp"
#include "biasengine/rng.hpp"
#include "biasengine/stats.hpp"

namespace biasengine {

std::vector<AnnotatedImageSet> inject_vqa_errors(std::span<const AnnotatedImageSet> sets,
                                                 const AxisSet& axes, double rate,
                                                 std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("error rate must be in [0,1]");
  std::vector<AnnotatedImageSet> out(sets.begin(), sets.end());
  std::uint64_t state = seed;
  for (auto& set : out) {
    for (auto& annotation : set.annotations) {
      for (const auto& axis : axes) {
        if (axis.values.size() < 2) continue;
        auto it = annotation.attrs.find(axis.name);
        if (it == annotation.attrs.end()) continue;
        int idx = axis.index_of(it->second);
        if (idx < 0) continue;  // "unknown" answers stay untouched
        if (next_unit(state) < rate) {
          std::size_t k = axis.values.size();
          std::size_t alt = static_cast<std::size_t>(next_unit(state) *
                                                     static_cast<double>(k - 1));
          if (alt >= k - 1) alt = k - 2;
          if (alt >= static_cast<std::size_t>(idx)) ++alt;
          it->second = axis.values[alt];
        }
      }
    }
  }
  return out;
}

std::size_t eligible_answer_cells(std::span<const AnnotatedImageSet> sets, const AxisSet& axes) {
  std::size_t cells = 0;
  for (const auto& set : sets) {
    for (const auto& annotation : set.annotations) {
      for (const auto& axis : axes) {
        if (axis.values.size() < 2) continue;
        auto it = annotation.attrs.find(axis.name);
        if (it != annotation.attrs.end() && axis.index_of(it->second) >= 0) ++cells;
      }
    }
  }
  return cells;
}

AnnotatedImageSet subsample_images(const AnnotatedImageSet& set, std::size_t n,
                                   std::uint64_t seed) {
  if (n < 1 || n > set.size()) {
    throw DataError("subsample_images: n=" + std::to_string(n) + " out of range for set of " +
                    std::to_string(set.size()));
  }
  std::vector<std::size_t> indices(set.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(
                            next_unit(state) * static_cast<double>(indices.size() - i));
    if (j >= indices.size()) j = indices.size() - 1;
    std::swap(indices[i], indices[j]);
  }
  indices.resize(n);
  std::sort(indices.begin(), indices.end());  // keep original relative order

  AnnotatedImageSet out;
  out.prompt = set.prompt;
  out.intervention = set.intervention;
  out.annotations.reserve(n);
  for (std::size_t i : indices) out.annotations.push_back(set.annotations[i]);
  return out;
}

std::string to_string(SweepKind kind) {
  return kind == SweepKind::vqa_error ? "vqa_error" : "image_count";
}

namespace {

struct MetricVectors {
  std::vector<double> cas;
  std::vector<double> mad;
  std::vector<double> is;
};

MetricVectors compute_metrics(std::span<const PromptData> corpus, const AxisSet& axes,
                              const IdealSet& ideals) {
  MetricVectors out;
  SynonymTable no_synonyms;
  std::vector<std::string> all_axes = axes.names();
  for (const auto& data : corpus) {
    ConceptSet init_concepts = concept_set_from_annotations(data.init, axes);
    for (const auto& axis : axes) {
      std::vector<ConceptSet> cf_concepts;
      cf_concepts.reserve(axis.values.size());
      for (const auto& value : axis.values) {
        const AnnotatedImageSet* cf = data.find_cf(axis.name, value);
        if (cf == nullptr) {
          throw DataError("sensitivity pipeline: missing counterfactual (" + axis.name + ", " +
                          value + ")");
        }
        cf_concepts.push_back(concept_set_from_annotations(*cf, axes));
      }
      std::vector<double> scores = cas_distribution(init_concepts, cf_concepts, no_synonyms);
      out.cas.insert(out.cas.end(), scores.begin(), scores.end());
      if (scores.size() >= 2) out.mad.push_back(mad_normalized(scores));
    }
    IntersectionalityMatrix m = build_matrix(data, axes, all_axes, ideals);
    for (const auto& row : m.values()) out.is.insert(out.is.end(), row.begin(), row.end());
  }
  return out;
}

double mean_abs_rel_change(std::span<const double> base, std::span<const double> perturbed) {
  if (base.size() != perturbed.size()) {
    throw DataError("sensitivity pipeline: metric vector shape changed under perturbation");
  }
  if (base.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    sum += std::fabs(perturbed[i] - base[i]) / std::max(std::fabs(base[i]), 1e-9);
  }
  return sum / static_cast<double>(base.size());
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Perturbation seed keyed by the set's identity, not its position, so
/// reported deltas do not depend on corpus ordering.
std::uint64_t set_salt(const std::string& prompt, const Intervention* intervention) {
  std::uint64_t h = fnv1a(prompt);
  if (intervention != nullptr) {
    h = fnv1a(intervention->axis, fnv1a("|", h));
    h = fnv1a(intervention->value, fnv1a("=", h));
  }
  return h;
}

AnnotatedImageSet perturb_set(const AnnotatedImageSet& set, const AxisSet& axes, SweepKind kind,
                              double level, std::uint64_t seed, std::uint64_t salt) {
  if (kind == SweepKind::vqa_error) {
    return inject_vqa_errors(std::span<const AnnotatedImageSet>(&set, 1), axes, level,
                             derive_seed(seed, salt))
        .front();
  }
  std::size_t keep = static_cast<std::size_t>(level);
  if (static_cast<double>(keep) != level || keep < 1) {
    throw ConfigError("image_count sweep level must be a positive integer");
  }
  return subsample_images(set, keep, derive_seed(seed, salt));
}

std::vector<PromptData> perturb_corpus(std::span<const PromptData> corpus, const AxisSet& axes,
                                       SweepKind kind, double level, std::uint64_t seed) {
  std::vector<PromptData> out;
  out.reserve(corpus.size());
  for (const auto& data : corpus) {
    PromptData p;
    p.init = perturb_set(data.init, axes, kind, level, seed,
                         set_salt(data.init.prompt, nullptr));
    for (const auto& [key, set] : data.cf_sets) {
      p.cf_sets[key] = perturb_set(set, axes, kind, level, seed, set_salt(data.init.prompt, &key));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

SensitivityReport sensitivity_sweep(std::span<const PromptData> corpus, const AxisSet& axes,
                                    const IdealSet& ideals, SweepKind kind,
                                    std::span<const double> levels,
                                    std::span<const std::uint64_t> seeds) {
  if (corpus.empty()) throw DataError("sensitivity_sweep: empty corpus");
  if (levels.empty()) throw ConfigError("sensitivity_sweep: no levels");
  if (seeds.empty()) throw ConfigError("sensitivity_sweep: needs at least one seed");

  MetricVectors baseline = compute_metrics(corpus, axes, ideals);

  SensitivityReport report;
  report.kind = kind;
  report.seeds.assign(seeds.begin(), seeds.end());

  std::vector<double> sorted_levels(levels.begin(), levels.end());
  std::sort(sorted_levels.begin(), sorted_levels.end());

  for (double level : sorted_levels) {
    std::vector<double> d_cas, d_mad, d_is;
    for (std::uint64_t seed : seeds) {
      std::vector<PromptData> noisy = perturb_corpus(corpus, axes, kind, level, seed);
      MetricVectors perturbed = compute_metrics(noisy, axes, ideals);
      d_cas.push_back(mean_abs_rel_change(baseline.cas, perturbed.cas));
      d_mad.push_back(mean_abs_rel_change(baseline.mad, perturbed.mad));
      d_is.push_back(mean_abs_rel_change(baseline.is, perturbed.is));
    }
    auto drift = [](std::span<const double> deltas) {
      MetricDrift d;
      for (double v : deltas) d.mean += v;
      d.mean /= static_cast<double>(deltas.size());
      for (double v : deltas) d.stddev += (v - d.mean) * (v - d.mean);
      d.stddev = std::sqrt(d.stddev / static_cast<double>(deltas.size()));
      return d;
    };
    SensitivityLevelResult result;
    result.level = level;
    result.cas = drift(d_cas);
    result.mad = drift(d_mad);
    result.is = drift(d_is);
    result.mean_delta = (result.cas.mean + result.mad.mean + result.is.mean) / 3.0;
    report.levels.push_back(result);
  }
  return report;
}

}  // namespace biasengine
