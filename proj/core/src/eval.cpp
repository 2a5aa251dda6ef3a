#include "rcl/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace rcl {

namespace {

std::size_t k_position(const std::vector<std::size_t>& ks, std::size_t k) {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw std::out_of_range("K=" + std::to_string(k) + " was not evaluated");
  return static_cast<std::size_t>(it - ks.begin());
}

}  // namespace

double EvalReport::hr_at(std::size_t k) const { return hr[k_position(ks, k)]; }
double EvalReport::ndcg_at(std::size_t k) const { return ndcg[k_position(ks, k)]; }

std::size_t target_rank(const Vector& scores, ItemId target) {
  const auto t = static_cast<Eigen::Index>(target - 1);
  if (t < 0 || t >= scores.size()) throw std::out_of_range("target item out of range");
  const double st = scores(t);
  std::size_t rank = 1;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (scores(j) > st || (scores(j) == st && j < t)) ++rank;
  }
  return rank;
}

EvalReport evaluate(const ModelParams& params, const std::vector<SequenceRecord>& split,
                    std::span<const std::size_t> ks, std::size_t workers) {
  if (split.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  if (ks.empty()) throw std::invalid_argument("no cutoffs requested");

  EvalReport report;
  report.ks.assign(ks.begin(), ks.end());
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
  report.count = split.size();

  std::vector<std::size_t> ranks(split.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < split.size(); i = next++) {
      const auto& rec = split[i];
      std::span<const ItemId> items(rec.items);
      if (items.size() > params.shape.max_len) items = items.last(params.shape.max_len);
      const Vector h = encode_sequence(items, params, {}, nullptr);
      ranks[i] = target_rank(item_logits(h, params), rec.target);
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, split.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  report.hr.assign(report.ks.size(), 0.0);
  report.ndcg.assign(report.ks.size(), 0.0);
  for (const std::size_t rank : ranks) {
    const double gain = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    for (std::size_t k = 0; k < report.ks.size(); ++k) {
      if (rank <= report.ks[k]) {
        report.hr[k] += 1.0;
        report.ndcg[k] += gain;
      }
    }
  }
  const double n = static_cast<double>(split.size());
  for (std::size_t k = 0; k < report.ks.size(); ++k) {
    report.hr[k] /= n;
    report.ndcg[k] /= n;
  }
  return report;
}

void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "variant,K,HR,NDCG\n";
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < r.ks.size(); ++k) {
      out << fmt::format("{},{},{:.6f},{:.6f}\n", r.variant, r.ks[k], r.hr[k], r.ndcg[k]);
    }
  }
}

void write_eval_table(std::ostream& out, std::span<const EvalReport> reports) {
  out << fmt::format("{:<14} {:>5} {:>9} {:>9}\n", "variant", "K", "HR", "NDCG");
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < r.ks.size(); ++k) {
      out << fmt::format("{:<14} {:>5} {:>9.4f} {:>9.4f}\n", r.variant, r.ks[k], r.hr[k], r.ndcg[k]);
    }
  }
}

TripletDots triplet_dot_report(const ModelParams& params, const std::vector<SequenceRecord>& sequences,
                               const StrongIndex& strong_index, const SimilarityIndex& sim_index,
                               std::size_t samples, Rng& rng) {
  TripletDots dots;
  if (sequences.size() < 2) return dots;
  std::vector<Vector> cache(sequences.size());
  std::vector<char> cached(sequences.size(), 0);
  auto rep = [&](std::size_t u) -> const Vector& {
    if (!cached[u]) {
      std::span<const ItemId> items(sequences[u].items);
      if (items.size() > params.shape.max_len) items = items.last(params.shape.max_len);
      cache[u] = encode_sequence(items, params, {}, nullptr);
      cached[u] = 1;
    }
    return cache[u];
  };

  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t u = uniform_index(rng, sequences.size());
    const Vector& hu = rep(u);
    if (const auto a = sample_strong(u, strong_index, rng)) {
      dots.strong += hu.dot(rep(*a));
      ++dots.strong_pairs;
    }
    const auto b = sample_weak(u, sim_index, rng);
    dots.weak += hu.dot(rep(b.id));
    ++dots.weak_pairs;
    std::size_t n = uniform_index(rng, sequences.size() - 1);
    if (n >= u) ++n;
    dots.negative += hu.dot(rep(n));
    ++dots.negative_pairs;
  }
  if (dots.strong_pairs) dots.strong /= static_cast<double>(dots.strong_pairs);
  if (dots.weak_pairs) dots.weak /= static_cast<double>(dots.weak_pairs);
  if (dots.negative_pairs) dots.negative /= static_cast<double>(dots.negative_pairs);
  return dots;
}

void write_triplet_csv(std::ostream& out, const TripletDots& dots) {
  out << "pair,mean_dot,count\n";
  out << fmt::format("strong,{:.9g},{}\n", dots.strong, dots.strong_pairs);
  out << fmt::format("weak,{:.9g},{}\n", dots.weak, dots.weak_pairs);
  out << fmt::format("negative,{:.9g},{}\n", dots.negative, dots.negative_pairs);
}

}  // namespace rcl
