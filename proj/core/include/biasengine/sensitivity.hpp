#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biasengine/biasconnect.hpp"

namespace biasengine {

/// Replace each (image, axis) answer, independently with probability
/// `rate`, by a uniformly random different valid value of its axis.
/// "unknown" answers and single-value axes are left alone. Deterministic
/// under the seed; annotation counts are conserved.
std::vector<AnnotatedImageSet> inject_vqa_errors(std::span<const AnnotatedImageSet> sets,
                                                 const AxisSet& axes, double rate,
                                                 std::uint64_t seed);

/// Number of (image, axis) cells eligible for error injection: cells
/// holding a valid value of a multi-value axis.
std::size_t eligible_answer_cells(std::span<const AnnotatedImageSet> sets, const AxisSet& axes);

/// Uniform sample of n annotations without replacement, preserving the
/// original relative order. Throws DataError when n is out of range.
AnnotatedImageSet subsample_images(const AnnotatedImageSet& set, std::size_t n,
                                   std::uint64_t seed);

enum class SweepKind { vqa_error, image_count };

std::string to_string(SweepKind kind);

/// Per-metric drift at one perturbation level, aggregated over repeats.
struct MetricDrift {
  double mean = 0.0;
  double stddev = 0.0;
};

struct SensitivityLevelResult {
  double level = 0.0;
  double mean_delta = 0.0;  // mean of the three per-metric means
  MetricDrift cas;
  MetricDrift mad;
  MetricDrift is;
};

struct SensitivityReport {
  SweepKind kind = SweepKind::vqa_error;
  std::vector<SensitivityLevelResult> levels;  // sorted ascending by level
  std::vector<std::uint64_t> seeds;
};

/// Run the full metric pipeline (CAS, MAD, IS) on the corpus perturbed at
/// each level, once per seed, and report the mean absolute relative
/// change against the unperturbed baseline. Relative change uses
/// |m' - m| / max(|m|, 1e-9). For image_count sweeps the level is the
/// retained image count per set.
SensitivityReport sensitivity_sweep(std::span<const PromptData> corpus, const AxisSet& axes,
                                    const IdealSet& ideals, SweepKind kind,
                                    std::span<const double> levels,
                                    std::span<const std::uint64_t> seeds);

}  // namespace biasengine
