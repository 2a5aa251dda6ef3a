#include <benchmark/benchmark.h>

#include <random>

#include "rcl/topk_index.hpp"

namespace {

std::vector<rcl::SequenceRecord> random_records(std::size_t n, std::size_t len, int vocab, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> item(1, vocab);
  std::vector<rcl::SequenceRecord> out(n);
  for (std::size_t u = 0; u < n; ++u) {
    out[u].user = static_cast<rcl::UserId>(u + 1);
    for (std::size_t i = 0; i < len; ++i) out[u].items.push_back(item(g));
    out[u].target = item(g);
  }
  return out;
}

void BM_PairScore(benchmark::State& state, const char* metric) {
  const auto recs = random_records(2, static_cast<std::size_t>(state.range(0)), 200, 1);
  const auto scorer = rcl::PairScorer::for_sequences(recs, rcl::Metric::parse(metric));
  for (auto _ : state) benchmark::DoNotOptimize(scorer.score(0, 1));
}
BENCHMARK_CAPTURE(BM_PairScore, jaccard, "jaccard")->Arg(20)->Arg(50);
BENCHMARK_CAPTURE(BM_PairScore, ngram2, "ngram2")->Arg(20)->Arg(50);
BENCHMARK_CAPTURE(BM_PairScore, tfidf, "tfidf")->Arg(20)->Arg(50);
BENCHMARK_CAPTURE(BM_PairScore, levenshtein, "levenshtein")->Arg(20)->Arg(50);

void BM_TopKIndex(benchmark::State& state) {
  const auto recs = random_records(static_cast<std::size_t>(state.range(0)), 20, 500, 2);
  const auto workers = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rcl::build_topk_index(recs, rcl::Metric::parse("jaccard"), 0.05, workers));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TopKIndex)->Args({500, 1})->Args({1000, 1})->Args({2000, 1})->Args({2000, 4})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
