#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rcl/model.hpp"
#include "rcl/topk_index.hpp"

namespace rcl {

/// Unbiased draw from [0, n) by rejection; n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Train sequences grouped by target item. The strong positives of u are its
/// group minus u itself.
struct StrongIndex {
  std::map<ItemId, std::vector<std::size_t>> groups;
  std::vector<ItemId> targets;  // per sequence

  std::span<const std::size_t> group(ItemId target) const;
  std::size_t positive_count(std::size_t u) const;
  /// Share of sequences whose strong-positive set is empty.
  double empty_fraction() const;
};

StrongIndex build_strong_index(const std::vector<SequenceRecord>& sequences);
StrongIndex build_strong_index(const SequenceSet& set);

/// Uniform over the strong positives of u; empty when there are none.
std::optional<std::size_t> sample_strong(std::size_t u, const StrongIndex& index, Rng& rng);

struct WeakSample {
  std::size_t id = 0;
  double score = 0.0;
};

/// Draws b from u's neighbor list with probability proportional to its score.
/// An all-zero list falls back to a uniform draw.
WeakSample sample_weak(std::size_t u, const SimilarityIndex& index, Rng& rng);

/// Score between two train sequences for batch weighting. Levenshtein scores
/// come from the index only (0 when neither lists the other); every other
/// metric is scored directly.
class BatchScorer {
 public:
  BatchScorer(const PairScorer* scorer, const SimilarityIndex* index) : scorer_(scorer), index_(index) {}
  double operator()(std::size_t u, std::size_t v) const;

 private:
  const PairScorer* scorer_;
  const SimilarityIndex* index_;
};

struct TrainingBatch {
  std::vector<std::size_t> centers;
  std::vector<std::optional<std::size_t>> strong;
  std::vector<std::size_t> weak;
  std::vector<double> weak_score;
  Matrix batch_scores;  // s(centers[i], centers[j]); diagonal unused
};

TrainingBatch make_batch(std::span<const std::size_t> centers, const StrongIndex& strong_index,
                         const SimilarityIndex& sim_index, const BatchScorer& scorer, Rng& rng);

/// Shuffles the train set once per epoch and hands out consecutive slices.
/// The last batch of an epoch may be smaller.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::size_t batch_size);

  void shuffle(Rng& rng);
  std::size_t batch_count() const noexcept;
  std::span<const std::size_t> batch(std::size_t b) const;
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
};

}  // namespace rcl
