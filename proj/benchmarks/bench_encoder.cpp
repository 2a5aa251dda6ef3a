#include <benchmark/benchmark.h>

#include "rcl/model.hpp"

namespace {

rcl::ModelShape shape(std::size_t dim, std::size_t blocks) { return {1000, 50, dim, blocks, 2, dim}; }

std::vector<rcl::ItemId> history(std::size_t len) {
  std::vector<rcl::ItemId> items(len);
  for (std::size_t i = 0; i < len; ++i) items[i] = static_cast<rcl::ItemId>(1 + (i * 37) % 1000);
  return items;
}

void BM_EncodeEval(benchmark::State& state) {
  const auto params = rcl::ModelParams::initialize(shape(static_cast<std::size_t>(state.range(0)), 2), 1);
  const auto items = history(static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(rcl::encode_sequence(items, params, {}, nullptr));
}
BENCHMARK(BM_EncodeEval)->Args({32, 20})->Args({64, 20})->Args({64, 50});

void BM_EncodeBackward(benchmark::State& state) {
  const auto params = rcl::ModelParams::initialize(shape(static_cast<std::size_t>(state.range(0)), 2), 1);
  const auto items = history(static_cast<std::size_t>(state.range(1)));
  auto grads = rcl::ModelParams::zeros(params.shape);
  rcl::Rng rng(3);
  const rcl::EncodeOptions train{0.2, true};
  for (auto _ : state) {
    rcl::EncoderTrace trace;
    const rcl::Vector h = rcl::encode_sequence(items, params, train, &rng, &trace);
    rcl::backward(trace, h, params, grads);
  }
}
BENCHMARK(BM_EncodeBackward)->Args({32, 20})->Args({64, 20})->Args({64, 50});

void BM_ItemScores(benchmark::State& state) {
  const auto params = rcl::ModelParams::initialize(shape(64, 1), 1);
  const rcl::Vector h = rcl::encode_sequence(history(20), params, {}, nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(rcl::item_logits(h, params));
}
BENCHMARK(BM_ItemScores);

}  // namespace

BENCHMARK_MAIN();
