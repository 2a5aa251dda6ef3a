#include "rcl/selection.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rcl {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("cannot draw from an empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % range);
}

std::span<const std::size_t> StrongIndex::group(ItemId target) const {
  const auto it = groups.find(target);
  if (it == groups.end()) return {};
  return it->second;
}

std::size_t StrongIndex::positive_count(std::size_t u) const { return group(targets.at(u)).size() - 1; }

double StrongIndex::empty_fraction() const {
  if (targets.empty()) return 0.0;
  std::size_t lonely = 0;
  for (const auto& [target, members] : groups) lonely += members.size() == 1 ? 1 : 0;
  return static_cast<double>(lonely) / static_cast<double>(targets.size());
}

StrongIndex build_strong_index(const std::vector<SequenceRecord>& sequences) {
  StrongIndex index;
  index.targets.reserve(sequences.size());
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    index.targets.push_back(sequences[u].target);
    index.groups[sequences[u].target].push_back(u);
  }
  return index;
}

StrongIndex build_strong_index(const SequenceSet& set) { return build_strong_index(set.train); }

std::optional<std::size_t> sample_strong(std::size_t u, const StrongIndex& index, Rng& rng) {
  const auto members = index.group(index.targets.at(u));
  if (members.size() < 2) return std::nullopt;
  // Draw among the other members by skipping u's own position.
  const auto self = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), u) - members.begin());
  std::size_t pick = uniform_index(rng, members.size() - 1);
  if (pick >= self) ++pick;
  return members[pick];
}

WeakSample sample_weak(std::size_t u, const SimilarityIndex& index, Rng& rng) {
  const auto& row = index.neighbors.at(u);
  if (row.empty()) throw std::invalid_argument("weak-positive pool is empty");
  double total = 0.0;
  for (const auto& nb : row) total += nb.score;
  if (!(total > 0.0)) {
    spdlog::warn("all weak-positive scores of sequence {} are zero, drawing uniformly", u);
    const auto& nb = row[uniform_index(rng, row.size())];
    return {nb.id, nb.score};
  }
  const double r = uniform01(rng) * total;
  double acc = 0.0;
  for (const auto& nb : row) {
    acc += nb.score;
    if (r < acc) return {nb.id, nb.score};
  }
  // Rounding left r at the very top; return the last positive entry.
  for (auto it = row.rbegin(); it != row.rend(); ++it)
    if (it->score > 0.0) return {it->id, it->score};
  return {row.back().id, row.back().score};
}

double BatchScorer::operator()(std::size_t u, std::size_t v) const {
  if (u == v) return 1.0;
  if (scorer_ != nullptr && scorer_->metric().kind != MetricKind::levenshtein) return scorer_->score(u, v);
  if (index_ == nullptr) return 0.0;
  return std::max(index_->lookup(u, v), index_->lookup(v, u));
}

TrainingBatch make_batch(std::span<const std::size_t> centers, const StrongIndex& strong_index,
                         const SimilarityIndex& sim_index, const BatchScorer& scorer, Rng& rng) {
  TrainingBatch batch;
  const std::size_t n = centers.size();
  batch.centers.assign(centers.begin(), centers.end());
  batch.strong.reserve(n);
  batch.weak.reserve(n);
  batch.weak_score.reserve(n);
  for (const std::size_t u : centers) {
    batch.strong.push_back(sample_strong(u, strong_index, rng));
    const auto w = sample_weak(u, sim_index, rng);
    batch.weak.push_back(w.id);
    batch.weak_score.push_back(w.score);
  }
  batch.batch_scores = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = scorer(centers[i], centers[j]);
      batch.batch_scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
      batch.batch_scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
    }
  }
  return batch;
}

EpochSampler::EpochSampler(std::size_t n, std::size_t batch_size) : order_(n), batch_size_(batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

void EpochSampler::shuffle(Rng& rng) {
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[uniform_index(rng, i)]);
}

std::size_t EpochSampler::batch_count() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::span<const std::size_t> EpochSampler::batch(std::size_t b) const {
  const std::size_t begin = b * batch_size_;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  return std::span<const std::size_t>(order_).subspan(begin, end - begin);
}

}  // namespace rcl
