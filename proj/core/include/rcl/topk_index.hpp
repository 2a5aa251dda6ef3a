#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "rcl/corpus.hpp"
#include "rcl/similarity.hpp"

namespace rcl {

struct Neighbor {
  std::uint32_t id = 0;
  double score = 0.0;
  bool operator==(const Neighbor&) const = default;
};

/// Strict order used everywhere neighbors are ranked: higher score first,
/// equal scores by ascending sequence id.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

/// The weak-positive pool: for each sequence, its K most similar other
/// sequences in rank order.
struct SimilarityIndex {
  Metric metric;
  double alpha = 0.0;
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> neighbors;

  std::size_t size() const noexcept { return neighbors.size(); }
  /// Score of v in u's list, or 0 when v is not a neighbor of u.
  double lookup(std::size_t u, std::size_t v) const;
  bool operator==(const SimilarityIndex&) const = default;
};

/// K = ceil(alpha * n), clamped to n - 1.
std::size_t neighbor_count(std::size_t n, double alpha);

/// Rows are split across `workers` threads; each keeps a bounded buffer of its
/// K best candidates and replaces the worst whenever a better score arrives.
/// The result does not depend on the number of workers.
SimilarityIndex build_topk_index(const PairScorer& scorer, double alpha, std::size_t workers);
SimilarityIndex build_topk_index(const std::vector<SequenceRecord>& sequences, Metric metric, double alpha,
                                 std::size_t workers);
/// Uses the train split.
SimilarityIndex build_topk_index(const SequenceSet& set, Metric metric, double alpha, std::size_t workers);

/// Little-endian binary layout: "RSIX", u32 version, u32 tag length, tag
/// bytes, f64 alpha, u64 N, u64 K, then N*K records of (u32 id, f64 score).
void write_index(std::ostream& out, const SimilarityIndex& index);
SimilarityIndex read_index(std::istream& in);
void save_index(const std::filesystem::path& path, const SimilarityIndex& index);
SimilarityIndex load_index(const std::filesystem::path& path);
/// `sequence,rank,neighbor,score`
void write_index_csv(std::ostream& out, const SimilarityIndex& index);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 1]
  std::vector<std::uint64_t> counts;
  std::uint64_t pairs = 0;
  double threshold = 0.7;
  std::uint64_t above_threshold = 0;

  double share_above() const noexcept {
    return pairs == 0 ? 0.0 : static_cast<double>(above_threshold) / static_cast<double>(pairs);
  }
};

/// Counts all unordered pairs of sequences whose targets differ. Bin i covers
/// [i/bins, (i+1)/bins), the last bin is closed at 1.
Histogram similarity_histogram(const std::vector<SequenceRecord>& sequences, Metric metric, std::size_t bins,
                               double threshold = 0.7);
Histogram similarity_histogram(const SequenceSet& set, Metric metric, std::size_t bins, double threshold = 0.7);

/// `bin_low,bin_high,count`
void write_histogram_csv(std::ostream& out, const Histogram& hist);

}  // namespace rcl
