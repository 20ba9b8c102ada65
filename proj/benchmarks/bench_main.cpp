#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "kspdiff/data_consistency.hpp"
#include "kspdiff/encoding.hpp"
#include "kspdiff/fft.hpp"
#include "kspdiff/networks.hpp"
#include "kspdiff/pipeline.hpp"
#include "kspdiff/rng.hpp"

namespace {

using namespace kspdiff;

ComplexTensor noise(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  ComplexTensor t(s);
  for (auto& v : t.data()) {
    const double re = g(rng);
    v = cplx(re, g(rng));
  }
  return t;
}

void BM_Fft2c(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = noise({n, n}, 1);
  for (auto _ : st) benchmark::DoNotOptimize(fft2c(x));
}
BENCHMARK(BM_Fft2c)->Arg(64)->Arg(128)->Arg(256);

void BM_EncodeAdjoint(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const EncodingOperator op(generate_sensitivities(4, n, n, 2), make_random_mask(n, 4.0, 0.04, 3));
  const auto x = noise({n, n}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(encode_adjoint(encode(x, op), op));
}
BENCHMARK(BM_EncodeAdjoint)->Arg(64)->Arg(128);

void BM_DcBuild(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto sens = generate_sensitivities(4, n, n, 2);
  const auto mask = make_random_mask(n, 4.0, 0.04, 3);
  for (auto _ : st) benchmark::DoNotOptimize(DcProjector(sens, mask));
}
BENCHMARK(BM_DcBuild)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DcProject(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto sens = generate_sensitivities(4, n, n, 2);
  const auto mask = make_random_mask(n, 4.0, 0.04, 3);
  const auto truth = generate_phantom(n, n, 10, 5);
  const auto slice = make_slice(0, truth, sens, mask);
  const DcProjector dc(sens, mask);
  const auto x = noise({n, n}, 6);
  for (auto _ : st) benchmark::DoNotOptimize(dc.project(x, slice.measured));
}
BENCHMARK(BM_DcProject)->Arg(64);

void BM_DenoiserForward(benchmark::State& st) {
  Denoiser d(DenoiserSpec{}, 1);
  const auto y = noise({64, 64}, 7), c = noise({64, 64}, 8);
  for (auto _ : st) benchmark::DoNotOptimize(d.forward(y, 0.5, &c, nn::Mode::kEval, false));
}
BENCHMARK(BM_DenoiserForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
  const auto sens = generate_sensitivities(4, 64, 64, 2);
  TrainConfig cfg;
  std::vector<SliceData> batch;
  for (std::uint64_t i = 0; i < cfg.batch_size; ++i)
    batch.push_back(make_slice(i, generate_phantom(64, 64, 10, 10 + i), sens, make_random_mask(64, 4.0, 0.04, 20 + i)));
  Trainer tr(cfg, sens);
  for (auto _ : st) benchmark::DoNotOptimize(tr.train_step(batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
