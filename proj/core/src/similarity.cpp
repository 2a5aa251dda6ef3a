#include "rcl/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace rcl {

namespace {

struct WeightedItem {
  ItemId item;
  double weight;
};

std::vector<std::int32_t> unique_sorted(std::span<const ItemId> items) {
  std::vector<std::int32_t> out;
  out.reserve(items.size());
  for (auto v : items)
    if (v != kPaddingItem) out.push_back(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename T>
double set_jaccard(const std::vector<T>& a, const std::vector<T>& b) {
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - common;
  if (uni == 0) return 0.0;
  return static_cast<double>(common) / static_cast<double>(uni);
}

std::vector<std::vector<ItemId>> collect_ngrams(const std::vector<ItemId>& seq, int n) {
  std::vector<std::vector<ItemId>> grams;
  const auto len = static_cast<std::ptrdiff_t>(seq.size());
  for (std::ptrdiff_t i = 0; i + n <= len; ++i) grams.emplace_back(seq.begin() + i, seq.begin() + i + n);
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

// Sorted by item id; weights summed in that order so both the norm and the
// dot product are independent of argument order.
std::vector<WeightedItem> tfidf_vector(std::span<const ItemId> items, const IdfTable& idf, double& norm) {
  std::vector<ItemId> sorted;
  for (auto v : items)
    if (v != kPaddingItem) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());

  std::vector<WeightedItem> out;
  const double n = static_cast<double>(idf.n_sequences);
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto df = idf.frequency(sorted[i]);
    if (df > 0) {
      const double w = static_cast<double>(j - i) * std::log(n / static_cast<double>(df));
      if (w != 0.0) out.push_back({sorted[i], w});
    }
    i = j;
  }
  double sq = 0.0;
  for (const auto& e : out) sq += e.weight * e.weight;
  norm = std::sqrt(sq);
  return out;
}

template <typename Entry>
double sparse_cosine(const std::vector<Entry>& a, double na, const std::vector<Entry>& b, double nb) {
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->item < ib->item) {
      ++ia;
    } else if (ib->item < ia->item) {
      ++ib;
    } else {
      dot += ia->weight * ib->weight;
      ++ia;
      ++ib;
    }
  }
  return std::clamp(dot / (na * nb), 0.0, 1.0);
}

double dense_cosine(std::span<const double> a, double na, std::span<const double> b, double nb) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), 0.0, 1.0);
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double normalized_levenshtein(std::span<const ItemId> a, std::span<const ItemId> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein_distance(a, b)) / static_cast<double>(longest);
}

}  // namespace

Metric Metric::parse(std::string_view tag) {
  if (tag == "jaccard") return {MetricKind::jaccard, 1};
  if (tag == "tfidf" || tag == "tf-idf") return {MetricKind::tfidf, 1};
  if (tag == "levenshtein") return {MetricKind::levenshtein, 1};
  if (tag == "semantic") return {MetricKind::semantic, 1};
  if (tag == "ngram" || tag == "bigram") return {MetricKind::ngram, 2};
  auto parse_n = [&](std::string_view digits) {
    int n = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') throw std::invalid_argument("unknown metric: " + std::string(tag));
      n = n * 10 + (c - '0');
    }
    if (n < 1 || digits.empty()) throw std::invalid_argument("unknown metric: " + std::string(tag));
    return n;
  };
  if (tag.starts_with("ngram")) return {MetricKind::ngram, parse_n(tag.substr(5))};
  if (tag.ends_with("gram")) return {MetricKind::ngram, parse_n(tag.substr(0, tag.size() - 4))};
  throw std::invalid_argument("unknown metric: " + std::string(tag));
}

std::string Metric::tag() const {
  switch (kind) {
    case MetricKind::jaccard: return "jaccard";
    case MetricKind::ngram: return "ngram" + std::to_string(n);
    case MetricKind::tfidf: return "tfidf";
    case MetricKind::levenshtein: return "levenshtein";
    case MetricKind::semantic: return "semantic";
  }
  return "unknown";
}

std::vector<ItemId> strip_padding(std::span<const ItemId> items) {
  std::vector<ItemId> out;
  out.reserve(items.size());
  for (auto v : items)
    if (v != kPaddingItem) out.push_back(v);
  return out;
}

SimilarityScore jaccard(std::span<const ItemId> a, std::span<const ItemId> b) {
  const auto sa = unique_sorted(a);
  const auto sb = unique_sorted(b);
  if (sa.empty() && sb.empty()) throw DegenerateInputError("jaccard of two empty sequences");
  return {set_jaccard(sa, sb), false};
}

SimilarityScore ngram_similarity(std::span<const ItemId> a, std::span<const ItemId> b, int n) {
  if (n < 1) throw std::invalid_argument("n-gram length must be >= 1");
  const auto ra = strip_padding(a);
  const auto rb = strip_padding(b);
  if (ra.size() < static_cast<std::size_t>(n) || rb.size() < static_cast<std::size_t>(n)) return {0.0, true};
  return {set_jaccard(collect_ngrams(ra, n), collect_ngrams(rb, n)), false};
}

IdfTable build_idf(const std::vector<SequenceRecord>& sequences) {
  IdfTable idf;
  idf.n_sequences = sequences.size();
  for (const auto& rec : sequences) {
    for (auto item : unique_sorted(rec.items)) {
      if (static_cast<std::size_t>(item) >= idf.df.size()) idf.df.resize(static_cast<std::size_t>(item) + 1, 0);
      ++idf.df[static_cast<std::size_t>(item)];
    }
  }
  return idf;
}

IdfTable build_idf(const SequenceSet& set) { return build_idf(set.train); }

SimilarityScore tfidf_similarity(std::span<const ItemId> a, std::span<const ItemId> b, const IdfTable& idf) {
  double na = 0.0;
  double nb = 0.0;
  const auto wa = tfidf_vector(a, idf, na);
  const auto wb = tfidf_vector(b, idf, nb);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {sparse_cosine(wa, na, wb, nb), false};
}

std::size_t levenshtein_distance(std::span<const ItemId> a, std::span<const ItemId> b) {
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  std::vector<std::size_t> prev(n + 1);
  std::vector<std::size_t> cur(n + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({subst, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

SimilarityScore levenshtein_similarity(std::span<const ItemId> a, std::span<const ItemId> b) {
  return {normalized_levenshtein(strip_padding(a), strip_padding(b)), false};
}

SimilarityScore semantic_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("semantic similarity of vectors with different dimension");
  const double na = l2(a);
  const double nb = l2(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("semantic similarity of a zero vector");
  return {dense_cosine(a, na, b, nb), false};
}

PairScorer PairScorer::for_sequences(const std::vector<SequenceRecord>& sequences, Metric metric) {
  if (metric.kind == MetricKind::semantic) {
    throw std::invalid_argument("semantic scores need representation vectors, use for_vectors");
  }
  PairScorer s;
  s.metric_ = metric;
  s.count_ = sequences.size();
  switch (metric.kind) {
    case MetricKind::jaccard:
      s.sets_.reserve(sequences.size());
      for (const auto& r : sequences) s.sets_.push_back(unique_sorted(r.items));
      break;
    case MetricKind::ngram: {
      // Global dictionary so every n-gram becomes a single integer.
      std::map<std::vector<ItemId>, std::int32_t> dict;
      s.sets_.reserve(sequences.size());
      s.too_short_.assign(sequences.size(), 0);
      for (std::size_t u = 0; u < sequences.size(); ++u) {
        const auto raw = strip_padding(sequences[u].items);
        if (raw.size() < static_cast<std::size_t>(metric.n)) s.too_short_[u] = 1;
        std::vector<std::int32_t> ids;
        for (auto& g : collect_ngrams(raw, metric.n)) {
          auto [it, _] = dict.try_emplace(std::move(g), static_cast<std::int32_t>(dict.size()));
          ids.push_back(it->second);
        }
        std::sort(ids.begin(), ids.end());
        s.sets_.push_back(std::move(ids));
      }
      break;
    }
    case MetricKind::tfidf: {
      const auto idf = build_idf(sequences);
      s.norms_.resize(sequences.size());
      for (std::size_t u = 0; u < sequences.size(); ++u) {
        auto vec = tfidf_vector(sequences[u].items, idf, s.norms_[u]);
        std::vector<SparseEntry> entries;
        entries.reserve(vec.size());
        for (const auto& e : vec) entries.push_back({e.item, e.weight});
        s.sparse_.push_back(std::move(entries));
      }
      break;
    }
    case MetricKind::levenshtein:
      for (const auto& r : sequences) s.raw_.push_back(strip_padding(r.items));
      break;
    case MetricKind::semantic:
      break;
  }
  return s;
}

PairScorer PairScorer::for_vectors(std::vector<std::vector<double>> vectors) {
  PairScorer s;
  s.metric_ = {MetricKind::semantic, 1};
  s.count_ = vectors.size();
  s.norms_.reserve(vectors.size());
  for (const auto& v : vectors) {
    if (!vectors.empty() && v.size() != vectors.front().size()) {
      throw std::invalid_argument("representation vectors differ in dimension");
    }
    s.norms_.push_back(l2(v));
  }
  s.vectors_ = std::move(vectors);
  return s;
}

double PairScorer::score(std::size_t u, std::size_t v) const {
  switch (metric_.kind) {
    case MetricKind::jaccard:
      return set_jaccard(sets_[u], sets_[v]);
    case MetricKind::ngram:
      if (too_short_[u] || too_short_[v]) return 0.0;
      return set_jaccard(sets_[u], sets_[v]);
    case MetricKind::tfidf:
      if (norms_[u] == 0.0 || norms_[v] == 0.0) return 0.0;
      return sparse_cosine(sparse_[u], norms_[u], sparse_[v], norms_[v]);
    case MetricKind::levenshtein:
      return normalized_levenshtein(raw_[u], raw_[v]);
    case MetricKind::semantic:
      // A collapsed representation carries no direction; treat as unrelated.
      if (norms_[u] == 0.0 || norms_[v] == 0.0) return 0.0;
      return dense_cosine(vectors_[u], norms_[u], vectors_[v], norms_[v]);
  }
  return 0.0;
}

}  // namespace rcl
