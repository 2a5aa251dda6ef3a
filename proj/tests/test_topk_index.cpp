#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rcl/topk_index.hpp"

using namespace rcl;

namespace {

std::vector<SequenceRecord> random_records(std::size_t n, std::uint64_t seed, int vocab = 30) {
  std::mt19937_64 rng(seed);
  return oracle::as_records(oracle::random_sequences(n, 1, 15, vocab, rng), 20, rng);
}

void expect_matches_oracle(const SimilarityIndex& index, const std::vector<oracle::Seq>& seqs, std::size_t k) {
  std::vector<std::vector<double>> sim(seqs.size(), std::vector<double>(seqs.size()));
  for (std::size_t u = 0; u < seqs.size(); ++u)
    for (std::size_t v = 0; v < seqs.size(); ++v) sim[u][v] = oracle::jaccard(seqs[u], seqs[v]);
  const auto expected = oracle::topk(sim, k);
  ASSERT_EQ(index.neighbors.size(), seqs.size());
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    ASSERT_EQ(index.neighbors[u].size(), expected[u].size());
    for (std::size_t r = 0; r < expected[u].size(); ++r) {
      EXPECT_EQ(index.neighbors[u][r].id, expected[u][r].id);
      EXPECT_EQ(index.neighbors[u][r].score, expected[u][r].score);
    }
  }
}

}  // namespace

TEST(NeighborCount, CeilAndClamp) {
  EXPECT_EQ(neighbor_count(1000, 0.05), 50u);
  EXPECT_EQ(neighbor_count(100, 0.025), 3u);
  EXPECT_EQ(neighbor_count(4, 0.5), 2u);
  EXPECT_EQ(neighbor_count(3, 0.99), 2u);
  EXPECT_EQ(neighbor_count(1, 0.5), 0u);
  // exact integer products that round a few ulps high in binary
  EXPECT_EQ(neighbor_count(100, 0.07), 7u);
  EXPECT_EQ(neighbor_count(3000, 0.07), 210u);
  EXPECT_EQ(neighbor_count(1000, 0.0701), 71u);
}

TEST(TopK, FourSequencesHalfAlpha) {
  const std::vector<SequenceRecord> recs{{1, {1, 2, 3}, 9}, {2, {1, 2}, 9}, {3, {3, 4}, 9}, {4, {1, 2, 3, 4}, 9}};
  const auto index = build_topk_index(recs, Metric::parse("jaccard"), 0.5, 1);
  EXPECT_EQ(index.k, 2u);
  std::vector<oracle::Seq> seqs;
  for (const auto& r : recs) seqs.push_back(r.items);
  expect_matches_oracle(index, seqs, 2);
}

TEST(TopK, IdenticalSequencesTieByLowestId) {
  std::vector<SequenceRecord> recs(6, SequenceRecord{1, {4, 5, 6}, 2});
  const auto index = build_topk_index(recs, Metric::parse("jaccard"), 0.5, 2);
  ASSERT_EQ(index.k, 3u);
  EXPECT_EQ(index.neighbors[0][0].id, 1u);
  EXPECT_EQ(index.neighbors[0][2].id, 3u);
  EXPECT_EQ(index.neighbors[4][0].id, 0u);
  EXPECT_EQ(index.neighbors[4][2].id, 2u);
  for (const auto& row : index.neighbors)
    for (const auto& nb : row) EXPECT_EQ(nb.score, 1.0);
}

TEST(TopK, MatchesOracleAndWorkerCountInvariant) {
  const auto recs = random_records(300, 21);
  std::vector<oracle::Seq> seqs;
  for (const auto& r : recs) seqs.push_back(r.items);
  const auto one = build_topk_index(recs, Metric::parse("jaccard"), 0.1, 1);
  expect_matches_oracle(one, seqs, 30);
  for (std::size_t w : {2u, 4u, 8u}) EXPECT_EQ(build_topk_index(recs, Metric::parse("jaccard"), 0.1, w), one);
}

TEST(TopK, NoSelfNeighborsAndDescendingScores) {
  const auto recs = random_records(120, 4);
  for (const char* tag : {"ngram2", "tfidf", "levenshtein"}) {
    const auto index = build_topk_index(recs, Metric::parse(tag), 0.05, 3);
    for (std::size_t u = 0; u < index.size(); ++u) {
      ASSERT_EQ(index.neighbors[u].size(), index.k);
      for (std::size_t r = 0; r < index.k; ++r) {
        EXPECT_NE(index.neighbors[u][r].id, u);
        if (r > 0) EXPECT_TRUE(ranks_before(index.neighbors[u][r - 1], index.neighbors[u][r]));
      }
    }
  }
}

TEST(TopK, RejectsAlphaOutsideUnitInterval) {
  const auto recs = random_records(10, 1);
  EXPECT_THROW(build_topk_index(recs, Metric::parse("jaccard"), 0.0, 1), std::invalid_argument);
  EXPECT_THROW(build_topk_index(recs, Metric::parse("jaccard"), 1.0, 1), std::invalid_argument);
}

TEST(TopK, LookupReturnsZeroOutsideList) {
  const auto recs = random_records(50, 8);
  const auto index = build_topk_index(recs, Metric::parse("jaccard"), 0.1, 1);
  const auto& nb = index.neighbors[3][0];
  EXPECT_EQ(index.lookup(3, nb.id), nb.score);
  EXPECT_EQ(index.lookup(3, 3), 0.0);
}

TEST(IndexIo, BinaryRoundTripAndLayout) {
  const auto recs = random_records(40, 2);
  const auto index = build_topk_index(recs, Metric::parse("ngram2"), 0.1, 1);
  std::stringstream ss;
  write_index(ss, index);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "RSIX");
  // header: magic, version, tag length, tag, alpha, N, K; then 12 bytes per neighbor
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + 6 + 8 + 8 + 8 + 40 * index.k * 12);
  EXPECT_EQ(read_index(ss), index);
}

TEST(IndexIo, RejectsForeignFile) {
  std::stringstream ss("NOPE1234");
  EXPECT_THROW(read_index(ss), std::runtime_error);
}

TEST(IndexIo, CsvHasOneLinePerNeighbor) {
  const auto recs = random_records(10, 3);
  const auto index = build_topk_index(recs, Metric::parse("jaccard"), 0.2, 1);
  std::stringstream ss;
  write_index_csv(ss, index);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "sequence,rank,neighbor,score");
  std::size_t rows = 0;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 10 * index.k);
}

TEST(Histogram, SameTargetPairsAreSkipped) {
  const std::vector<SequenceRecord> recs{{1, {1, 2}, 5}, {2, {1, 2}, 5}};
  const auto h = similarity_histogram(recs, Metric::parse("jaccard"), 10);
  EXPECT_EQ(h.pairs, 0u);
}

TEST(Histogram, HandBinning) {
  // pairwise Jaccard: (0,1)=0.5, (0,2)=0.5, (1,2)=1.0
  const std::vector<SequenceRecord> recs{{1, {1, 2}, 7}, {2, {1}, 8}, {3, {1}, 9}};
  const auto h = similarity_histogram(recs, Metric::parse("jaccard"), 2);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{0, 3}));
  const std::vector<SequenceRecord> recs2{{1, {1, 2}, 7}, {2, {1}, 8}, {3, {3}, 9}};
  const auto h2 = similarity_histogram(recs2, Metric::parse("jaccard"), 2);
  // pairs: 0.5, 0.0, 0.0
  EXPECT_EQ(h2.counts, (std::vector<std::uint64_t>{2, 1}));
  EXPECT_EQ(h2.above_threshold, 0u);
}

TEST(Histogram, IdenticalCorpusFillsTopBin) {
  std::vector<SequenceRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back({i + 1, {3, 4}, i + 1});
  const auto h = similarity_histogram(recs, Metric::parse("jaccard"), 4);
  EXPECT_EQ(h.counts.back(), 10u);
  EXPECT_EQ(h.above_threshold, 10u);
  EXPECT_DOUBLE_EQ(h.share_above(), 1.0);
}
