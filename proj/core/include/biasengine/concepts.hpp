#pragma once

#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasengine/annotations.hpp"

namespace biasengine {

/// Concept/frequency pairs extracted from one image set's extractor
/// answers. Concepts are lowercase, unique, kept in lexicographic order;
/// frequencies are per-image normalized (count divided by set size).
class ConceptSet {
 public:
  ConceptSet() = default;
  /// Throws DataError on duplicates or negative frequencies.
  explicit ConceptSet(std::vector<std::pair<std::string, double>> entries);

  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// Sum of all frequencies.
  double mass() const;

 private:
  std::vector<std::pair<std::string, double>> entries_;  // sorted by concept
};

/// Disjoint synonym classes, each with a canonical representative.
/// A static stand-in for a lexical database lookup.
class SynonymTable {
 public:
  struct Group {
    std::string canonical;
    std::vector<std::string> members;
  };

  SynonymTable() = default;
  /// Throws ConfigError when classes overlap. The canonical word is
  /// always a member of its own class.
  explicit SynonymTable(std::vector<Group> groups);

  const std::vector<Group>& groups() const { return groups_; }

  /// Canonical representative of `word` (identity when unlisted).
  const std::string& canonical_of(const std::string& word) const;

 private:
  std::vector<Group> groups_;
};

/// A recorded image embedding; live encoder inference is out of scope.
struct EmbeddingVector {
  std::string source_id;
  std::vector<double> dims;
};

/// The engine's default stopword list used when a run does not supply one.
const std::set<std::string>& default_stopwords();

/// Tokenize extractor answers (strip ASCII punctuation, lowercase, split
/// on whitespace, drop stopwords), count words, and divide each count by
/// image_count. Throws DataError when image_count is zero.
ConceptSet build_concept_set(std::span<const std::string> answers, std::size_t image_count,
                             const std::set<std::string>& stopwords);

/// Collapse concepts of the same synonym class onto the canonical
/// representative, summing frequencies. Conserves total mass.
ConceptSet merge_synonyms(const ConceptSet& c, const SynonymTable& syn);

/// Frequency lists of both sets over their union vocabulary in
/// lexicographic order; missing concepts get frequency 0.
struct AlignedConcepts {
  std::vector<std::string> vocabulary;
  std::vector<double> a;
  std::vector<double> b;
};
AlignedConcepts align_concepts(const ConceptSet& a, const ConceptSet& b);

/// Concept Association Score: histogram intersection-over-union of the
/// two frequency histograms after synonym merging and alignment.
/// Range [0,1]; two empty sets score 1, one empty set against a
/// non-empty one scores 0.
double cas(const ConceptSet& a, const ConceptSet& b, const SynonymTable& syn);

/// Embedding-based CAS: mean cosine similarity over all cross pairs of
/// recorded vectors. Throws DataError on dimension mismatch or an empty
/// side.
double cas_clip(std::span<const EmbeddingVector> set_a, std::span<const EmbeddingVector> set_b);

/// CAS of the initial set against each counterfactual, in counterfactual
/// order. Throws DataError on an empty counterfactual list.
std::vector<double> cas_distribution(const ConceptSet& initial, std::span<const ConceptSet> cfs,
                                     const SynonymTable& syn);

/// An image set's extractor answers flattened into a concept set: every
/// valid attribute value (axis order) of every image counts as an answer,
/// tokenized with the default stopword list.
ConceptSet concept_set_from_annotations(const AnnotatedImageSet& set, const AxisSet& axes);

}  // namespace biasengine
