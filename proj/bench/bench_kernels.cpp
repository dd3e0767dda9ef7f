#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "bmr/data.hpp"
#include "bmr/kernels.hpp"
#include "bmr/model.hpp"
#include "bmr/optim.hpp"

namespace {

using bmr::kernels::GemmShape;

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  GemmShape s{n, n, n, false, false};
  auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (kParallel) bmr::kernels::gemm(s, a, b, c, false);
    else bmr::kernels::gemm_reference(s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Gemm<false>)->Name("gemm_reference")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm")->Arg(32)->Arg(128)->Arg(256);

template <bool kParallel>
void BM_Bgemm(benchmark::State& state) {
  // attention-shaped: batch of [tokens x d] * [d x tokens]
  const std::size_t batch = 24, t = 12, d = static_cast<std::size_t>(state.range(0));
  GemmShape s{t, t, d, false, true};
  auto a = random_vec(batch * t * d, 3), b = random_vec(batch * t * d, 4);
  std::vector<double> c(batch * t * t);
  for (auto _ : state) {
    if constexpr (kParallel) bmr::kernels::bgemm(batch, s, a, b, c, false);
    else bmr::kernels::bgemm_reference(batch, s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_Bgemm<false>)->Name("bgemm_reference")->Arg(32)->Arg(256);
BENCHMARK(BM_Bgemm<true>)->Name("bgemm")->Arg(32)->Arg(256);

// One main training step of the desk-scale model (forward + backward + Adam).
void BM_TrainStep(benchmark::State& state) {
  bmr::BmrConfig cfg;
  cfg.encoder.d = static_cast<std::size_t>(state.range(0));
  cfg.encoder.vocab = bmr::SignalSpec::vocab_size();
  cfg.encoder.patch = 8;
  cfg.encoder.max_len = 8;
  bmr::BmrModel model(cfg, 0);
  auto corpus = bmr::synth_corpus(30, {}, 1);
  auto batch = bmr::Batch::from(std::span<const bmr::RawNews>(corpus.train), cfg.encoder);
  auto params = model.parameters();
  bmr::AdamState adam;
  for (auto _ : state) {
    auto out = model.forward(batch, bmr::NormMode::kTrain);
    auto loss = model.total_loss(out, batch.labels);
    bmr::clear_grads(params);
    bmr::backward(loss.total);
    bmr::adam_step(params, adam, 1e-3);
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
