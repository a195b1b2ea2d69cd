#include <benchmark/benchmark.h>

#include "adopt/bass.hpp"
#include "adopt/lccm.hpp"
#include "adopt/synthgen.hpp"

using namespace adopt;

namespace {

struct City {
  SynthData data;
  AccessibilityField field;
  AdoptionPanel panel;
};

const City& city() {
  static const City c = [] {
    auto cfg = SynthConfig::defaults();
    auto data = generate(cfg);
    auto field = accessibility_field(data.dc, data.persons, data.network, cfg.truth.phi);
    auto y = cumulative_adopters(data.persons, cfg.horizon);
    AdoptionPanel panel(data.persons, field, y, cfg.horizon, data.weights);
    return City{std::move(data), std::move(field), std::move(panel)};
  }();
  return c;
}

void BM_WeightedLoglik(benchmark::State& state) {
  const auto& c = city();
  for (auto _ : state) benchmark::DoNotOptimize(weighted_loglik(c.data.config.truth, c.panel));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.panel.observation_count()));
}
BENCHMARK(BM_WeightedLoglik)->Unit(benchmark::kMillisecond);

void BM_EmSingleStart(benchmark::State& state) {
  const auto& c = city();
  EmConfig cfg;
  cfg.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(em_estimate(c.panel, cfg).loglik);
}
BENCHMARK(BM_EmSingleStart)->Unit(benchmark::kSecond)->Iterations(1);

void BM_Logsum(benchmark::State& state) {
  const auto& c = city();
  const auto& p = c.data.persons.front();
  const int month = c.data.config.horizon;
  for (auto _ : state) {
    benchmark::DoNotOptimize(accessibility_logsum(c.data.dc, c.data.network, p, p.home_zone, month));
  }
}
BENCHMARK(BM_Logsum);

void BM_AccessibilityField(benchmark::State& state) {
  const auto& c = city();
  for (auto _ : state) {
    benchmark::DoNotOptimize(accessibility_field(c.data.dc, c.data.persons, c.data.network, 1.0).zone_count());
  }
}
BENCHMARK(BM_AccessibilityField)->Unit(benchmark::kMillisecond);

void BM_BassFit(benchmark::State& state) {
  const auto s = bass_simulate({0.0051, 0.2108, 2200.0}, 30);
  for (auto _ : state) benchmark::DoNotOptimize(bass_fit_ols(s).params.M);
}
BENCHMARK(BM_BassFit);

}  // namespace

BENCHMARK_MAIN();
