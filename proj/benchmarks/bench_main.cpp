#include <benchmark/benchmark.h>

#include "lumamba/costmodel.hpp"
#include "lumamba/model.hpp"
#include "lumamba/ops.hpp"
#include "lumamba/scan.hpp"
#include "lumamba/ssl.hpp"

using namespace lumamba;

namespace {

Array filled(Shape shape, Rng& rng, double lo, double hi) {
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return a;
}

void BM_Scan(benchmark::State& state, ScanKernel kernel) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64, n = 16;
  Rng rng(1);
  const Array u = filled({1, len, d}, rng, -1, 1), delta = filled({1, len, d}, rng, 0.001, 0.5),
              a = filled({d, n}, rng, -4, -0.1), b = filled({1, len, n}, rng, -1, 1),
              c = filled({1, len, n}, rng, -1, 1), skip = filled({d}, rng, -1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(scan_forward(u, delta, a, b, c, skip, kernel));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK_CAPTURE(BM_Scan, sequential, ScanKernel::sequential)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK_CAPTURE(BM_Scan, associative, ScanKernel::associative)->RangeMultiplier(4)->Range(64, 4096);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Array a = filled({n, n}, rng, -1, 1), b = filled({n, n}, rng, -1, 1);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(matmul(t.constant(a), t.constant(b)).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(64, 512);

void BM_Forward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  Model model(ModelConfig{}, 3, {.decoder = false, .head = true});
  Rng rng(4);
  const Array windows = filled({8, channels, 1280}, rng, -1, 1);
  const Montage montage = montage_template(static_cast<int>(channels));
  for (auto _ : state) {
    Tape t;
    auto enc = model.encode(t, windows, montage);
    benchmark::DoNotOptimize(model.classify(t, enc.features).value());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(20)->Arg(26)->Unit(benchmark::kMillisecond);

void BM_PretrainStep(benchmark::State& state) {
  Model model(ModelConfig{}, 5);
  Rng rng(6);
  const Array windows = filled({8, 20, 1280}, rng, -1, 1);
  const Montage montage = montage_template(20);
  auto params = model.params().all();
  SslConfig cfg;
  std::uint64_t step = 0;
  for (auto _ : state) {
    Tape t;
    SslStep s = ssl_objective(t, model, windows, montage, cfg, Rng(7).stream(step++));
    backward(t, s.total, params);
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_PretrainStep)->Unit(benchmark::kMillisecond);

void BM_CostSweep(benchmark::State& state) {
  const ArchSpec ssm = lumamba_spec(ModelConfig{}, 20);
  const std::vector<ArchSpec> specs{ssm, attention_per_token_spec(ssm), attention_flattened_spec(ssm)};
  const auto sweep = log_sweep(64, 65536);
  for (auto _ : state) benchmark::DoNotOptimize(scaling_sweep_csv(specs, sweep));
}
BENCHMARK(BM_CostSweep);

}  // namespace

BENCHMARK_MAIN();
