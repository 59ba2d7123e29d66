#include "biasengine/concepts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "biasengine/errors.hpp"

namespace biasengine {

ConceptSet::ConceptSet(std::vector<std::pair<std::string, double>> entries)
    : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!(entries_[i].second >= 0.0)) {
      throw DataError("negative concept frequency for '" + entries_[i].first + "'");
    }
    if (i > 0 && entries_[i].first == entries_[i - 1].first) {
      throw DataError("duplicate concept '" + entries_[i].first + "'");
    }
  }
}

double ConceptSet::mass() const {
  double m = 0.0;
  for (const auto& [_, w] : entries_) m += w;
  return m;
}

SynonymTable::SynonymTable(std::vector<Group> groups) : groups_(std::move(groups)) {
  std::set<std::string> seen;
  for (auto& group : groups_) {
    if (group.canonical.empty()) throw ConfigError("synonym group with empty canonical");
    if (std::find(group.members.begin(), group.members.end(), group.canonical) ==
        group.members.end()) {
      group.members.push_back(group.canonical);
    }
    for (const auto& member : group.members) {
      if (!seen.insert(member).second) {
        throw ConfigError("synonym classes overlap on '" + member + "'");
      }
    }
  }
}

const std::string& SynonymTable::canonical_of(const std::string& word) const {
  for (const auto& group : groups_) {
    for (const auto& member : group.members) {
      if (member == word) return group.canonical;
    }
  }
  return word;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",    "the",   "and",  "or",    "but",  "if",    "of",    "at",   "by",
      "for",  "with",  "about", "to",   "from",  "in",   "on",    "off",   "out",  "over",
      "under", "again", "then",  "once", "here",  "there", "is",   "am",    "are",  "was",
      "were", "be",    "been",  "being", "have",  "has",  "had",   "do",    "does", "did",
      "will", "would", "can",   "could", "should", "it",  "its",   "this",  "that", "these",
      "those", "he",   "she",   "they",  "them",  "his",  "her",   "their", "who",  "whom",
      "which", "what", "as",    "so",    "such",  "no",   "not",   "nor",   "only", "own",
      "same", "than",  "too",   "very",  "s",     "t",    "just",  "both",  "each", "few",
      "more", "most",  "other", "some",  "any",   "all",  "into",  "up",    "down", "i",
      "me",   "my",    "we",    "us",    "our",   "you",  "your"};
  return words;
}

namespace {
std::vector<std::string> tokenize(const std::string& answer) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : answer) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}
}  // namespace

ConceptSet build_concept_set(std::span<const std::string> answers, std::size_t image_count,
                             const std::set<std::string>& stopwords) {
  if (image_count == 0) throw DataError("build_concept_set: image_count must be >= 1");
  std::map<std::string, double> counts;
  for (const auto& answer : answers) {
    for (auto& token : tokenize(answer)) {
      if (stopwords.count(token)) continue;
      counts[token] += 1.0;
    }
  }
  std::vector<std::pair<std::string, double>> entries;
  entries.reserve(counts.size());
  for (auto& [word, count] : counts) {
    entries.emplace_back(word, count / static_cast<double>(image_count));
  }
  return ConceptSet(std::move(entries));
}

ConceptSet merge_synonyms(const ConceptSet& c, const SynonymTable& syn) {
  std::map<std::string, double> merged;
  for (const auto& [word, freq] : c.entries()) {
    merged[syn.canonical_of(word)] += freq;
  }
  std::vector<std::pair<std::string, double>> entries(merged.begin(), merged.end());
  return ConceptSet(std::move(entries));
}

AlignedConcepts align_concepts(const ConceptSet& a, const ConceptSet& b) {
  AlignedConcepts out;
  auto ia = a.entries().begin();
  auto ib = b.entries().begin();
  // Both entry lists are sorted; a single merge pass yields the union
  // vocabulary in lexicographic order.
  while (ia != a.entries().end() || ib != b.entries().end()) {
    if (ib == b.entries().end() || (ia != a.entries().end() && ia->first < ib->first)) {
      out.vocabulary.push_back(ia->first);
      out.a.push_back(ia->second);
      out.b.push_back(0.0);
      ++ia;
    } else if (ia == a.entries().end() || ib->first < ia->first) {
      out.vocabulary.push_back(ib->first);
      out.a.push_back(0.0);
      out.b.push_back(ib->second);
      ++ib;
    } else {
      out.vocabulary.push_back(ia->first);
      out.a.push_back(ia->second);
      out.b.push_back(ib->second);
      ++ia;
      ++ib;
    }
  }
  return out;
}

double cas(const ConceptSet& a, const ConceptSet& b, const SynonymTable& syn) {
  ConceptSet ma = merge_synonyms(a, syn);
  ConceptSet mb = merge_synonyms(b, syn);
  AlignedConcepts aligned = align_concepts(ma, mb);
  double inter = 0.0;
  double uni = 0.0;
  for (std::size_t i = 0; i < aligned.vocabulary.size(); ++i) {
    inter += std::min(aligned.a[i], aligned.b[i]);
    uni += std::max(aligned.a[i], aligned.b[i]);
  }
  // Identical concept evidence on both sides; vacuously also true when
  // both sets are empty.
  if (uni == 0.0) return 1.0;
  return inter / uni;
}

double cas_clip(std::span<const EmbeddingVector> set_a, std::span<const EmbeddingVector> set_b) {
  if (set_a.empty() || set_b.empty()) throw DataError("cas_clip: empty embedding set");
  std::size_t dims = set_a.front().dims.size();
  for (const auto& v : set_a) {
    if (v.dims.size() != dims) throw DataError("cas_clip: dimension mismatch in set A");
  }
  for (const auto& v : set_b) {
    if (v.dims.size() != dims) throw DataError("cas_clip: dimension mismatch between sets");
  }
  double sum = 0.0;
  for (const auto& va : set_a) {
    for (const auto& vb : set_b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < dims; ++i) {
        dot += va.dims[i] * vb.dims[i];
        na += va.dims[i] * va.dims[i];
        nb += vb.dims[i] * vb.dims[i];
      }
      if (na == 0.0 || nb == 0.0) {
        throw DataError("cas_clip: zero-norm embedding '" +
                        (na == 0.0 ? va.source_id : vb.source_id) + "'");
      }
      sum += dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  return sum / (static_cast<double>(set_a.size()) * static_cast<double>(set_b.size()));
}

std::vector<double> cas_distribution(const ConceptSet& initial, std::span<const ConceptSet> cfs,
                                     const SynonymTable& syn) {
  if (cfs.empty()) throw DataError("cas_distribution: no counterfactual concept sets");
  std::vector<double> scores;
  scores.reserve(cfs.size());
  for (const auto& cf : cfs) scores.push_back(cas(initial, cf, syn));
  return scores;
}

ConceptSet concept_set_from_annotations(const AnnotatedImageSet& set, const AxisSet& axes) {
  if (set.size() == 0) throw DataError("concept_set_from_annotations: empty image set");
  std::vector<std::string> answers;
  answers.reserve(set.size() * axes.size());
  for (const auto& annotation : set.annotations) {
    for (const auto& axis : axes) {
      const std::string& value = annotation.value_for(axis.name);
      if (value != kUnknownValue) answers.push_back(value);
    }
  }
  return build_concept_set(answers, set.size(), default_stopwords());
}

}  // namespace biasengine
