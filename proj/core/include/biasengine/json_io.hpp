#pragma once

#include <span>
#include <string>
#include <vector>

#include "biasengine/annotations.hpp"
#include "biasengine/axis.hpp"
#include "biasengine/biasconnect.hpp"
#include "biasengine/concepts.hpp"
#include "biasengine/intermit.hpp"
#include "biasengine/providers.hpp"
#include "biasengine/sensitivity.hpp"

namespace biasengine {

// JSON wire formats. Every parse_* throws DataError naming the missing
// or ill-typed key; dumps are deterministic (insertion-ordered keys,
// shortest round-trip numbers).

// {"axes": [{"name", "values", "question", "cf_prompt_templates"}]}
AxisSet parse_axis_set(const std::string& text);
std::string dump_axis_set(const AxisSet& axes);

// {"prompt", "intervention": {"axis","value"} | null, "images": [{"attrs": {...}}]}
AnnotatedImageSet parse_annotated_image_set(const std::string& text);
std::string dump_annotated_image_set(const AnnotatedImageSet& set);

/// Structural parse plus value screening: attribute values not declared
/// on their axis become "unknown" with a warning; undeclared axis keys
/// are a schema error.
AnnotatedImageSet parse_annotated_image_set_lenient(const std::string& text, const AxisSet& axes,
                                                    std::vector<std::string>* warnings);

// {"groups": [{"canonical", "members"}]}
SynonymTable parse_synonym_table(const std::string& text);
std::string dump_synonym_table(const SynonymTable& table);

// {"entries": [[concept, frequency], ...]}
ConceptSet parse_concept_set(const std::string& text);
std::string dump_concept_set(const ConceptSet& set);

// {"vectors": [{"source_id", "dims"}]}
std::vector<EmbeddingVector> parse_embeddings(const std::string& text);
std::string dump_embeddings(std::span<const EmbeddingVector> vectors);

// {"rows", "cols", "values", "ideals": {axis: [weights]}}
std::string dump_matrix(const IntersectionalityMatrix& m);
IntersectionalityMatrix parse_matrix(const std::string& text);

// {"axes": {...}, "joint": [{"values": [...], "p"}], "prompt_key"}
SyntheticModel parse_synthetic_model(const std::string& text);
std::string dump_synthetic_model(const SyntheticModel& model);

// {"prompt", "intervention": [{"axis","value"}], "n", "mode", "seed"}
std::string dump_generation_request(const GenerationRequest& req);
GenerationRequest parse_generation_request(const std::string& text);

// Mirrors MitigationTrace; parse(dump(t)) reproduces t exactly.
std::string dump_trace(const MitigationTrace& trace);
MitigationTrace parse_trace(const std::string& text);

std::string dump_sensitivity_report(const SensitivityReport& report);

/// Per-axis ideal overrides {"axis": [weights]} applied on top of the
/// uniform defaults.
IdealSet parse_ideals(const std::string& text, const AxisSet& axes);

}  // namespace biasengine
