// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "dfseg/common.hpp"
#include "dfseg/losses.hpp"
#include "dfseg/models.hpp"
#include "dfseg/shapesdata.hpp"
#include "dfseg/training.hpp"

namespace {

using namespace dfseg;

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

void BM_SegNetForward(benchmark::State& state) {
  ModelConfig cfg = default_model_config(ModelKind::teacher_seg);
  cfg.width = static_cast<int>(state.range(0));
  SegNet net(cfg);
  Tensor x = random_tensor({16, 3, 32, 32}, 1, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x, false));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_SegNetForward)->Arg(8)->Arg(32);

void BM_SegNetTrainStep(benchmark::State& state) {
  ModelConfig cfg = default_model_config(ModelKind::teacher_seg);
  cfg.width = static_cast<int>(state.range(0));
  SegNet net(cfg);
  TrainPolicy policy;
  Optimizer opt(policy, net.parameters());
  Tensor x = random_tensor({16, 3, 32, 32}, 1, 0.5);
  std::vector<int> labels(16 * 32 * 32, 1);
  for (auto _ : state) {
    const Tensor probs = net.forward(x, true);
    Tensor dprobs;
    benchmark::DoNotOptimize(cross_entropy_loss(probs, labels, &dprobs));
    zero_grads(net.parameters());
    net.backward(dprobs);
    opt.step(1e-3);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_SegNetTrainStep)->Arg(8)->Arg(32);

void BM_GeneratorForward(benchmark::State& state) {
  ModelConfig cfg = default_model_config(ModelKind::generator);
  cfg.width = static_cast<int>(state.range(0));
  Generator gen(cfg);
  Tensor z = random_tensor({16, cfg.latent_dim}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen.forward(z, false));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_GeneratorForward)->Arg(8)->Arg(16);

void BM_EntropyLoss(benchmark::State& state) {
  Rng rng(3);
  Tensor logits = random_tensor({16, 6, 32, 32}, 3);
  nn::SoftmaxChannel softmax;
  const Tensor s = softmax.forward(logits);
  Tensor grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(entropy_loss(s, &grad));
  }
}
BENCHMARK(BM_EntropyLoss);

void BM_RenderScene(benchmark::State& state) {
  DatasetConfig cfg;
  cfg.n_images = 1;
  cfg.seed = 5;
  for (auto _ : state) {
    cfg.seed += 1;
    benchmark::DoNotOptimize(generate_dataset(cfg));
  }
}
BENCHMARK(BM_RenderScene);

}  // namespace

BENCHMARK_MAIN();
