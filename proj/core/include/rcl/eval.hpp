#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rcl/model.hpp"
#include "rcl/selection.hpp"

namespace rcl {

struct EvalReport {
  std::string variant;
  std::vector<std::size_t> ks;  // ascending
  std::vector<double> hr;
  std::vector<double> ndcg;
  std::size_t count = 0;

  double hr_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

/// 1-based rank of `target` among items 1..|V| (entry i of `scores` belongs to
/// item i + 1). Equal scores rank the lower item id first.
std::size_t target_rank(const Vector& scores, ItemId target);

/// Ranks the full item set for every record; history items stay candidates.
/// Throws std::invalid_argument on an empty split or empty Ks.
EvalReport evaluate(const ModelParams& params, const std::vector<SequenceRecord>& split,
                    std::span<const std::size_t> ks, std::size_t workers = 1);

/// `variant,K,HR,NDCG`
void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports);
void write_eval_table(std::ostream& out, std::span<const EvalReport> reports);

struct TripletDots {
  double strong = 0.0;
  double weak = 0.0;
  double negative = 0.0;
  std::size_t strong_pairs = 0;
  std::size_t weak_pairs = 0;
  std::size_t negative_pairs = 0;
};

/// Mean h_u.h_a over strong pairs, h_u.h_b over weak pairs and h_u.h_n over
/// random other sequences, for `samples` centers drawn from `sequences`.
/// Representations are taken in evaluation mode.
TripletDots triplet_dot_report(const ModelParams& params, const std::vector<SequenceRecord>& sequences,
                               const StrongIndex& strong_index, const SimilarityIndex& sim_index,
                               std::size_t samples, Rng& rng);

/// `pair,mean_dot,count`
void write_triplet_csv(std::ostream& out, const TripletDots& dots);

}  // namespace rcl
