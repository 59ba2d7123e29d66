#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "biasengine/annotations.hpp"
#include "biasengine/axis.hpp"

namespace biasengine {

enum class GenerationMode { exact_counts, sampled };

/// One generation call: the base prompt, the ordered intervention
/// constraints (later constraints on the same axis win), the image
/// budget, and whether counts are apportioned deterministically or
/// sampled under a seed.
struct GenerationRequest {
  std::string prompt;
  std::vector<Intervention> intervention;
  std::size_t n = 48;
  GenerationMode mode = GenerationMode::exact_counts;
  std::uint64_t seed = 0;
};

/// Source of annotated image sets. Implementations must be safe for
/// concurrent requests across distinct prompts.
class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual AnnotatedImageSet generate(const GenerationRequest& req) = 0;
  virtual const AxisSet& axes() const = 0;
};

/// A counterfactual prompt produced for one (axis, value).
struct CounterfactualPrompt {
  std::string axis;
  std::string value;
  std::string text;
};

/// One counterfactual prompt per (axis, value) of the axis set, by
/// substituting the prompt text into each value's template. Throws
/// ConfigError when an axis declares no templates.
std::vector<CounterfactualPrompt> template_counterfactuals(const PromptSpec& prompt,
                                                           const AxisSet& axes);

/// Apportion `n` units over fractional quotas by largest remainder:
/// floor every quota, then hand the leftover units to the largest
/// fractional parts (ties to the lower index). Quotas must sum to n.
std::vector<std::size_t> largest_remainder_apportion(std::span<const double> quotas,
                                                     std::size_t n);

/// A deterministic stand-in for a black-box generation-plus-extraction
/// stack: a full joint distribution over axis value tuples. Intervening
/// with a prompt constraint conditions the joint (hard-prompt semantics:
/// naming a value forces that attribute).
class SyntheticModel {
 public:
  struct JointEntry {
    std::vector<std::string> values;  // one per axis, in axis order
    double p = 0.0;
  };

  SyntheticModel() = default;
  /// Validates tuple arity/values, probability range, and that the mass
  /// sums to 1 within 1e-12.
  SyntheticModel(AxisSet axes, std::vector<JointEntry> joint, std::string prompt_key);

  const AxisSet& axes() const { return axes_; }
  const std::vector<JointEntry>& joint() const { return joint_; }
  const std::string& prompt_key() const { return prompt_key_; }

  /// Restrict the joint to tuples satisfying the constraints and
  /// renormalize. Throws DataError on zero-mass conditioning.
  std::vector<JointEntry> conditioned(std::span<const Intervention> constraints) const;

  /// exact_counts: n * P(tuple) apportioned by largest remainder.
  /// sampled: n seeded draws, bit-reproducible for a fixed seed.
  AnnotatedImageSet generate(const GenerationRequest& req) const;

 private:
  AxisSet axes_;
  std::vector<JointEntry> joint_;
  std::string prompt_key_;
};

/// Serves one or more synthetic models, dispatched by prompt text.
class SyntheticProvider : public GenerationProvider {
 public:
  explicit SyntheticProvider(std::vector<SyntheticModel> models);

  AnnotatedImageSet generate(const GenerationRequest& req) override;
  const AxisSet& axes() const override;

  const SyntheticModel& model_for(const std::string& prompt) const;
  std::vector<std::string> prompt_keys() const;

 private:
  std::vector<SyntheticModel> models_;
};

/// Result of loading recorded extractor output from disk.
struct RecordedCorpus {
  std::vector<AnnotatedImageSet> sets;
  std::vector<std::string> warnings;  // e.g. unlisted values mapped to "unknown"
};

/// Load AnnotatedImageSet JSON files from a path (a single file or every
/// *.json in a directory, in filename order). Values not declared on
/// their axis are mapped to "unknown" with a warning; structural schema
/// violations throw DataError naming the file and record.
RecordedCorpus load_recorded_corpus(const std::string& path, const AxisSet& axes);

/// How to reach an external generation/extraction stack.
struct AdapterSpec {
  enum class Kind { subprocess, http };
  Kind kind = Kind::subprocess;
  std::string target;  // shell command line, or http://host:port/path
  std::chrono::milliseconds timeout{10000};
  int parallelism = 1;
};

/// "http(s)://..." selects the HTTP transport, anything else runs as a
/// shell command reading one request line on stdin.
AdapterSpec parse_adapter_spec(const std::string& target,
                               std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));

/// Send one GenerationRequest to an external adapter and validate the
/// returned set like load_recorded_corpus does. The env var
/// BIASENGINE_ADAPTER_TIMEOUT_MS overrides spec.timeout when set.
/// Throws AdapterTimeoutError / AdapterExecError / AdapterSchemaError.
AnnotatedImageSet external_adapter(const GenerationRequest& req, const AdapterSpec& spec,
                                   const AxisSet& axes,
                                   std::vector<std::string>* warnings = nullptr);

/// GenerationProvider over an external adapter; concurrent calls are
/// serialized up to spec.parallelism.
class AdapterProvider : public GenerationProvider {
 public:
  AdapterProvider(AdapterSpec spec, AxisSet axes);

  AnnotatedImageSet generate(const GenerationRequest& req) override;
  const AxisSet& axes() const override { return axes_; }

  /// Values mapped to "unknown" and similar non-fatal issues.
  std::vector<std::string> take_warnings();

 private:
  AdapterSpec spec_;
  AxisSet axes_;
  std::mutex mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace biasengine
