#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rcl/eval.hpp"
#include "rcl/synth.hpp"
#include "rcl/topk_index.hpp"
#include "rcl/trainer.hpp"

using namespace rcl;

namespace {

std::vector<SequenceRecord> uniform_records(std::size_t n, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::as_records(oracle::random_sequences(n, 1, 15, vocab, rng), vocab, rng);
}

// Position of `target` after a stable descending sort by score, lowest id first on ties.
std::size_t sorted_rank(const Vector& scores, ItemId target) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), target - 1) - order.begin()) + 1;
}

}  // namespace

TEST(TargetRank, HandCases) {
  Vector s(5);
  s << 0.1, 0.9, 0.3, 0.5, 0.2;
  EXPECT_EQ(target_rank(s, 2), 1u);
  EXPECT_EQ(target_rank(s, 3), 3u);
  EXPECT_EQ(target_rank(s, 1), 5u);
  Vector tie(4);
  tie << 0.5, 0.5, 0.5, 0.1;
  EXPECT_EQ(target_rank(tie, 1), 1u);
  EXPECT_EQ(target_rank(tie, 3), 3u);
  EXPECT_THROW(target_rank(tie, 5), std::out_of_range);
}

TEST(TargetRank, MatchesStableSort) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    Vector s(30);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = coarse(g) / 6.0;
    const ItemId t = 1 + static_cast<ItemId>(trial % 30);
    EXPECT_EQ(target_rank(s, t), sorted_rank(s, t));
  }
}

TEST(Evaluate, MatchesRankOracle) {
  const auto recs = uniform_records(300, 40, 5);
  const ModelParams p = ModelParams::initialize({40, 10, 8, 1, 2, 8}, 7);
  const std::vector<std::size_t> ks{20, 1, 5, 10, 5};
  const auto report = evaluate(p, recs, ks, 1);
  EXPECT_EQ(report.ks, (std::vector<std::size_t>{1, 5, 10, 20}));
  EXPECT_EQ(report.count, recs.size());
  std::vector<double> hr(4, 0.0), ndcg(4, 0.0);
  for (const auto& r : recs) {
    std::span<const ItemId> items(r.items);
    if (items.size() > 10) items = items.last(10);
    const auto rank = sorted_rank(item_logits(encode_sequence(items, p, {}, nullptr), p), r.target);
    for (std::size_t k = 0; k < 4; ++k) {
      if (rank <= report.ks[k]) {
        hr[k] += 1.0;
        ndcg[k] += 1.0 / std::log2(rank + 1.0);
      }
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(report.hr[k], hr[k] / 300, 1e-12);
    EXPECT_NEAR(report.ndcg[k], ndcg[k] / 300, 1e-12);
  }
}

TEST(Evaluate, RankOneAndRankThree) {
  // zero parameters score every item 0, so ties put item 1 first and item 3 third
  const ModelParams p = ModelParams::zeros({10, 5, 4, 1, 2, 4});
  const std::vector<std::size_t> ks{5, 10};
  const auto first = evaluate(p, {{1, {4, 5}, 1}}, ks);
  EXPECT_EQ(first.hr_at(5), 1.0);
  EXPECT_EQ(first.ndcg_at(5), 1.0);
  const auto third = evaluate(p, {{1, {4, 5}, 3}}, ks);
  EXPECT_EQ(third.hr_at(10), 1.0);
  EXPECT_DOUBLE_EQ(third.ndcg_at(10), 0.5);
  const auto last = evaluate(p, {{1, {4, 5}, 10}}, ks);
  EXPECT_EQ(last.hr_at(5), 0.0);
  EXPECT_EQ(last.ndcg_at(5), 0.0);
  EXPECT_THROW(last.hr_at(7), std::out_of_range);
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  const auto recs = uniform_records(2000, 100, 11);
  const ModelParams p = ModelParams::initialize({100, 20, 16, 1, 2, 16}, 1);
  const std::vector<std::size_t> ks{10};
  EXPECT_NEAR(evaluate(p, recs, ks).hr_at(10), 0.10, 0.02);
}

TEST(Evaluate, MonotoneInKAndBoundedByHr) {
  const auto recs = uniform_records(400, 30, 2);
  const ModelParams p = ModelParams::initialize({30, 10, 8, 1, 2, 8}, 3);
  const std::vector<std::size_t> ks{1, 2, 3, 5, 10, 20, 30};
  const auto r = evaluate(p, recs, ks);
  for (std::size_t k = 0; k < r.ks.size(); ++k) {
    EXPECT_LE(r.ndcg[k], r.hr[k]);
    EXPECT_GE(r.ndcg[k], 0.0);
    if (k > 0) {
      EXPECT_GE(r.hr[k], r.hr[k - 1]);
      EXPECT_GE(r.ndcg[k], r.ndcg[k - 1]);
    }
  }
  EXPECT_EQ(r.hr_at(30), 1.0);
}

TEST(Evaluate, WorkerCountInvariant) {
  const auto recs = uniform_records(200, 30, 4);
  const ModelParams p = ModelParams::initialize({30, 10, 8, 1, 2, 8}, 3);
  const std::vector<std::size_t> ks{5, 10};
  const auto one = evaluate(p, recs, ks, 1);
  for (std::size_t w : {2u, 4u}) {
    const auto many = evaluate(p, recs, ks, w);
    EXPECT_EQ(many.hr, one.hr);
    EXPECT_EQ(many.ndcg, one.ndcg);
  }
}

TEST(Evaluate, RejectsEmptyInputs) {
  const ModelParams p = ModelParams::zeros({10, 5, 4, 1, 2, 4});
  const std::vector<std::size_t> ks{5};
  EXPECT_THROW(evaluate(p, {}, ks), std::invalid_argument);
  EXPECT_THROW(evaluate(p, {{1, {2}, 3}}, std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(EvalOutput, CsvAndTable) {
  EvalReport r{"wrcl", {5, 10}, {0.25, 0.5}, {0.125, 0.2}, 4};
  const std::vector<EvalReport> reports{r};
  std::ostringstream csv;
  write_eval_csv(csv, reports);
  EXPECT_EQ(csv.str(), "variant,K,HR,NDCG\nwrcl,5,0.250000,0.125000\nwrcl,10,0.500000,0.200000\n");
  std::ostringstream table;
  write_eval_table(table, reports);
  EXPECT_NE(table.str().find("0.5000"), std::string::npos);
}

TEST(TripletDots, IdenticalRepresentationsGiveEqualMeans) {
  const auto recs = uniform_records(50, 20, 6);
  ModelParams p = ModelParams::zeros({20, 15, 4, 1, 2, 4});
  // zero layer-norm gains with a constant offset: every sequence maps to the same vector
  p.blocks[0].ln2_bias.setConstant(0.5);
  const auto strong = build_strong_index(recs);
  const auto sim = build_topk_index(recs, Metric::parse("jaccard"), 0.1, 1);
  Rng rng(1);
  const auto d = triplet_dot_report(p, recs, strong, sim, 200, rng);
  EXPECT_DOUBLE_EQ(d.strong, 1.0);
  EXPECT_DOUBLE_EQ(d.weak, 1.0);
  EXPECT_DOUBLE_EQ(d.negative, 1.0);
  EXPECT_EQ(d.weak_pairs, 200u);
  EXPECT_EQ(d.negative_pairs, 200u);
  std::ostringstream out;
  write_triplet_csv(out, d);
  EXPECT_EQ(out.str().substr(0, 20), "pair,mean_dot,count\n");
}

TEST(TripletDots, TrainedWrclOrdersStrongWeakNegative) {
  SynthConfig sc;
  sc.users = 1000;
  sc.items = 200;
  sc.intents = 10;
  sc.seed = 5;
  const auto data = build_sequences(generate_synthetic(sc), 20);
  TrainConfig c;
  c.dim = 32;
  c.blocks = 1;
  c.ffn_dim = 32;
  c.max_len = 20;
  c.batch_size = 128;
  c.epochs = 15;
  c.patience = 0;
  c.lambda = 0.5;
  c.metric = Metric::parse("jaccard");
  const auto trained = train(c, data);
  const auto strong = build_strong_index(data.train);
  const auto sim = build_topk_index(data.train, c.metric, c.alpha, 1);
  Rng rng(3);
  const auto d = triplet_dot_report(trained.params, data.train, strong, sim, 3000, rng);
  EXPECT_GT(d.strong, d.weak);
  EXPECT_GT(d.weak, d.negative);
}
