#include <benchmark/benchmark.h>

#include "sltgen/extractor.hpp"
#include "sltgen/generator.hpp"
#include "sltgen/metrics.hpp"
#include "sltgen/mmd.hpp"
#include "sltgen/ops.hpp"
#include "sltgen/prune.hpp"
#include "sltgen/rng.hpp"
#include "sltgen/search.hpp"

using namespace sltgen;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = uniform({n, n}, 1), b = uniform({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({16, c, 16, 16}, 1), w = uniform({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, 1, 1));
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32);

void BM_SelectMask(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<PrunableParam> params(1);
  params[0].name = "fc.weight";
  params[0].layer_id = "fc";
  params[0].weight = Tensor({n});
  params[0].score = uniform({n}, 3);
  MaskPolicy policy;
  policy.k_percent = 10;
  for (auto _ : state) benchmark::DoNotOptimize(select_mask(params, policy));
}
BENCHMARK(BM_SelectMask)->Arg(1 << 12)->Arg(1 << 16);

void BM_Mmd2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({n, 2}, 4), y = uniform({n, 2}, 5);
  const KernelSpec k = median_mixture_kernel(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(mmd2_kernel(x, y, k));
}
BENCHMARK(BM_Mmd2)->Arg(256)->Arg(2048);

void BM_PrecisionRecall(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({n, 2}, 6), y = uniform({n, 2}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(precision_recall(x, y, 3));
}
BENCHMARK(BM_PrecisionRecall)->Arg(512)->Arg(2048);

void BM_SearchStep(benchmark::State& state) {
  GeneratorSpec spec;
  spec.channel_multiplier = static_cast<double>(state.range(0)) / 2.0;
  Generator gen(spec);
  init_all_scores(gen.params(), 1);
  FeatureExtractorSpec ex;
  ex.kind = ExtractorKind::dense;
  ex.channels = {64, 64};
  ex.taps = {0, 1, 2};
  ex.input_shape = {2};
  Objective objective(FeatureExtractor(ex), {});
  auto opt = ParamOptimizer::for_params(gen.params(), {1e-3}, 1000000);
  MaskPolicy policy;
  policy.k_percent = 10;
  const Tensor real = uniform({64, 2}, 8);
  std::uint64_t t = 0;
  for (auto _ : state) slt_search_step(gen, objective, real, sample_latents(64, spec.latent_dim, ++t), policy, opt);
}
BENCHMARK(BM_SearchStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
