#include <benchmark/benchmark.h>

#include "rcl/synth.hpp"
#include "rcl/topk_index.hpp"
#include "rcl/trainer.hpp"

namespace {

struct Fixture {
  rcl::SequenceSet data;
  rcl::TrainConfig config;
  rcl::StrongIndex strong;
  rcl::PairScorer scorer;
  rcl::SimilarityIndex sim;

  Fixture()
      : data(rcl::build_sequences(rcl::generate_synthetic(rcl::SynthConfig{}), 50)),
        strong(rcl::build_strong_index(data.train)),
        scorer(rcl::PairScorer::for_sequences(data.train, rcl::Metric::parse("jaccard"))),
        sim(rcl::build_topk_index(scorer, 0.05, 1)) {
    config.dim = 32;
    config.blocks = 1;
    config.ffn_dim = 32;
    config.max_len = 20;
    config.metric = rcl::Metric::parse("jaccard");
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_ComputeStep(benchmark::State& state, rcl::LossVariant variant) {
  const auto& f = fixture();
  rcl::TrainConfig c = f.config;
  c.variant = variant;
  const auto params = rcl::ModelParams::initialize(c.shape(f.data.item_count), 1);
  std::vector<std::size_t> centers(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = i;
  rcl::Rng rng(5);
  const auto batch = rcl::make_batch(centers, f.strong, f.sim, rcl::BatchScorer(&f.scorer, &f.sim), rng);
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(rcl::compute_step(c, params, f.data.train, batch, ++step));
}
BENCHMARK_CAPTURE(BM_ComputeStep, base, rcl::LossVariant::base)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ComputeStep, wrcl, rcl::LossVariant::wrcl)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ComputeStep, three_pairs, rcl::LossVariant::three_pairs)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_MakeBatch(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<std::size_t> centers(256);
  for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = i * 7 % f.data.train.size();
  rcl::Rng rng(5);
  for (auto _ : state)
    benchmark::DoNotOptimize(rcl::make_batch(centers, f.strong, f.sim, rcl::BatchScorer(&f.scorer, &f.sim), rng));
}
BENCHMARK(BM_MakeBatch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
