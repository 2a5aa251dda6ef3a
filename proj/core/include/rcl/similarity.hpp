#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rcl/corpus.hpp"

namespace rcl {

enum class MetricKind { jaccard, ngram, tfidf, levenshtein, semantic };

/// Sequence similarity metric selector. `n` is only meaningful for n-grams.
struct Metric {
  MetricKind kind = MetricKind::jaccard;
  int n = 2;

  /// Accepts jaccard, tfidf, levenshtein, semantic, ngram (n=2), ngramN, Ngram.
  static Metric parse(std::string_view tag);
  std::string tag() const;
  /// Levenshtein and semantic distance depend on interaction order.
  bool order_sensitive() const noexcept {
    return kind == MetricKind::levenshtein || kind == MetricKind::semantic;
  }
  bool operator==(const Metric& o) const noexcept {
    return kind == o.kind && (kind != MetricKind::ngram || n == o.n);
  }
};

class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A similarity in [0, 1]. `degenerate` marks inputs for which the metric is
/// undefined and 0 was substituted (too short for n-grams, zero TF-IDF norm).
struct SimilarityScore {
  double value = 0.0;
  bool degenerate = false;
};

std::vector<ItemId> strip_padding(std::span<const ItemId> items);

SimilarityScore jaccard(std::span<const ItemId> a, std::span<const ItemId> b);
SimilarityScore ngram_similarity(std::span<const ItemId> a, std::span<const ItemId> b, int n);

/// Document frequencies over a collection of sequences.
struct IdfTable {
  std::vector<std::int32_t> df;  // indexed by item id, df[0] unused
  std::size_t n_sequences = 0;

  std::int32_t frequency(ItemId item) const {
    return item > 0 && static_cast<std::size_t>(item) < df.size() ? df[static_cast<std::size_t>(item)] : 0;
  }
};

IdfTable build_idf(const std::vector<SequenceRecord>& sequences);
/// Uses the train split.
IdfTable build_idf(const SequenceSet& set);

SimilarityScore tfidf_similarity(std::span<const ItemId> a, std::span<const ItemId> b, const IdfTable& idf);

std::size_t levenshtein_distance(std::span<const ItemId> a, std::span<const ItemId> b);
/// 1 - d / max(|a|, |b|).
SimilarityScore levenshtein_similarity(std::span<const ItemId> a, std::span<const ItemId> b);

/// Cosine clamped to [0, 1]. Throws DegenerateInputError on a zero vector.
SimilarityScore semantic_similarity(std::span<const double> a, std::span<const double> b);

inline SimilarityScore jaccard(const SequenceRecord& a, const SequenceRecord& b) { return jaccard(a.items, b.items); }
inline SimilarityScore ngram_similarity(const SequenceRecord& a, const SequenceRecord& b, int n) {
  return ngram_similarity(a.items, b.items, n);
}
inline SimilarityScore tfidf_similarity(const SequenceRecord& a, const SequenceRecord& b, const IdfTable& idf) {
  return tfidf_similarity(a.items, b.items, idf);
}
inline SimilarityScore levenshtein_similarity(const SequenceRecord& a, const SequenceRecord& b) {
  return levenshtein_similarity(a.items, b.items);
}

/// Precomputes per-sequence features so that any pair (u, v) of a fixed
/// collection can be scored cheaply and concurrently. score(u, v) is
/// bit-identical to the corresponding free function and to score(v, u).
class PairScorer {
 public:
  /// TF-IDF weights are derived from `sequences` itself.
  static PairScorer for_sequences(const std::vector<SequenceRecord>& sequences, Metric metric);
  /// Semantic distance over row vectors of equal dimension.
  static PairScorer for_vectors(std::vector<std::vector<double>> vectors);

  double score(std::size_t u, std::size_t v) const;
  std::size_t size() const noexcept { return count_; }
  const Metric& metric() const noexcept { return metric_; }

 private:
  struct SparseEntry {
    ItemId item;
    double weight;
  };

  Metric metric_;
  std::size_t count_ = 0;
  std::vector<std::vector<std::int32_t>> sets_;   // jaccard / n-gram ids, sorted unique
  std::vector<char> too_short_;                   // n-gram: sequence shorter than n
  std::vector<std::vector<SparseEntry>> sparse_;  // tf-idf
  std::vector<double> norms_;                     // tf-idf / semantic
  std::vector<std::vector<ItemId>> raw_;          // levenshtein
  std::vector<std::vector<double>> vectors_;      // semantic
};

}  // namespace rcl
