#include <benchmark/benchmark.h>

#include "bpa/augment.hpp"
#include "bpa/metrics.hpp"
#include "bpa/nn/ops.hpp"
#include "bpa/rng.hpp"
#include "bpa/toy.hpp"

namespace {

bpa::nn::Tensor random_tensor(bpa::nn::Shape shape, bpa::Rng& rng) {
  bpa::nn::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int64_t side = state.range(0);
  bpa::Rng rng(1);
  const bpa::nn::Var x = bpa::nn::Var::constant(random_tensor({16, 16, side, side}, rng));
  const bpa::nn::Var w = bpa::nn::Var::leaf(random_tensor({32, 16, 3, 3}, rng));
  for (auto _ : state) {
    const bpa::nn::Var y = bpa::nn::sum(bpa::nn::conv2d(x, w, {1, 1}));
    benchmark::DoNotOptimize(bpa::nn::grad(y, {w}));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(32);

void BM_Auc(benchmark::State& state) {
  bpa::Rng rng(2);
  std::vector<double> scores(static_cast<size_t>(state.range(0)));
  std::vector<int> labels(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform();
    labels[i] = i % 5 == 0 ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(bpa::eval::auc(scores, labels));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_Augment(benchmark::State& state) {
  bpa::Rng rng(3);
  const bpa::ImageTensor img = bpa::toy::render(bpa::toy::LesionKind::kMesh, rng, {64, false});
  bpa::eval::AugmentPolicy policy;
  policy.input_size = 32;
  for (auto _ : state) benchmark::DoNotOptimize(bpa::eval::augment(img, policy, rng));
}
BENCHMARK(BM_Augment);

void BM_ToyRender(benchmark::State& state) {
  bpa::Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(bpa::toy::render(bpa::toy::LesionKind::kMesh, rng, {32, false}));
}
BENCHMARK(BM_ToyRender);

}  // namespace

BENCHMARK_MAIN();
