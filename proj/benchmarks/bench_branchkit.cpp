#include <benchmark/benchmark.h>

#include "branchkit/cf_density.hpp"
#include "branchkit/coalescence.hpp"
#include "branchkit/model.hpp"
#include "branchkit/simulate.hpp"
#include "branchkit/wmoments.hpp"

namespace {

using namespace branchkit;

ModelSpec two_type_poisson(double a, double b, double c, double d) {
  std::vector<OffspringLaw> laws;
  laws.push_back(ProductForm{{Poisson{a}, Poisson{b}}});
  laws.push_back(ProductForm{{Poisson{c}, Poisson{d}}});
  return ModelSpec(2, std::move(laws), 0);
}

const ModelSpec& slightly() {
  static const ModelSpec m = two_type_poisson(1.0, 0.5, 0.5, 1.5);
  return m;
}

void BM_spectral(benchmark::State& state) {
  const MeanMatrix m = mean_matrix(slightly());
  for (auto _ : state) benchmark::DoNotOptimize(spectral(m));
}
BENCHMARK(BM_spectral);

void BM_extinction(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(extinction(slightly()));
}
BENCHMARK(BM_extinction);

void BM_wmoments_order4(benchmark::State& state) {
  const SpectralData spec = spectral(mean_matrix(slightly()));
  for (auto _ : state) benchmark::DoNotOptimize(w_moments(slightly(), spec, 4));
}
BENCHMARK(BM_wmoments_order4);

void BM_density_build(benchmark::State& state) {
  const SpectralData spec = spectral(mean_matrix(slightly()));
  const ExtinctionVector q = extinction(slightly());
  const WMomentTable table = w_moments(slightly(), spec, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(build_densities(slightly(), spec, table, q));
}
BENCHMARK(BM_density_build);

void BM_theorem_estimate(benchmark::State& state) {
  const SpectralData spec = spectral(mean_matrix(slightly()));
  const ExtinctionVector q = extinction(slightly());
  const WMomentTable table = w_moments(slightly(), spec, 4);
  const auto densities = build_densities(slightly(), spec, table, q);
  std::vector<WSampler> samplers(densities.begin(), densities.end());
  const int t = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        theorem_estimate(slightly(), std::span<const WSampler>(samplers), t, 2, 200, 7, 1));
}
BENCHMARK(BM_theorem_estimate)->Arg(3)->Arg(8);

void BM_mrca_direct(benchmark::State& state) {
  const int t = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(mrca_direct_estimate(slightly(), t, t + 10, 2, 200, 7, 1));
}
BENCHMARK(BM_mrca_direct)->Arg(3)->Arg(8);

void BM_harmonic_moment(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(harmonic_moment_gamma(slightly(), 5, 1));
}
BENCHMARK(BM_harmonic_moment);

}  // namespace

BENCHMARK_MAIN();
