#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "vaudit/imaging.hpp"
#include "vaudit/retrieval.hpp"
#include "vaudit/scoring.hpp"
#include "vaudit/simulation.hpp"

using namespace vaudit;

namespace {

constexpr std::size_t kDim = 128;

// Unit vectors scattered around 64 cluster centres, so partitions are meaningful.
std::vector<float> clustered_vectors(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> centres(64 * kDim);
  for (auto& v : centres) v = g(rng);
  std::vector<float> out(n * kDim);
  for (std::size_t i = 0; i < n; ++i) {
    const float* c = &centres[(i % 64) * kDim];
    double norm = 0.0;
    for (std::size_t d = 0; d < kDim; ++d) {
      out[i * kDim + d] = c[d] + 0.35f * g(rng);
      norm += double(out[i * kDim + d]) * out[i * kDim + d];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (std::size_t d = 0; d < kDim; ++d) out[i * kDim + d] *= inv;
  }
  return out;
}

const EmbeddingIndex& shared_index(std::size_t n) {
  static std::size_t built_for = 0;
  static EmbeddingIndex index(kDim);
  if (built_for != n) {
    index = EmbeddingIndex(kDim);
    const auto data = clustered_vectors(n, 11);
    for (std::size_t i = 0; i < n; ++i) index.add(i, {data.data() + i * kDim, kDim});
    index.build_partitions();
    built_for = n;
  }
  return index;
}

void BM_ExactSearch(benchmark::State& state) {
  const auto& index = shared_index(static_cast<std::size_t>(state.range(0)));
  const auto queries = clustered_vectors(64, 99);
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.search({queries.data() + (q++ % 64) * kDim, kDim}, 10));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExactSearch)->Arg(10000)->Arg(50000);

void BM_ProbedSearch(benchmark::State& state) {
  const auto& index = shared_index(static_cast<std::size_t>(state.range(0)));
  const auto queries = clustered_vectors(64, 99);
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        index.search_probed({queries.data() + (q++ % 64) * kDim, kDim}, 10, index.default_probes()));
  }
  state.counters["probes"] = static_cast<double>(index.default_probes());
  state.counters["lists"] = static_cast<double>(index.partition_count());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ProbedSearch)->Arg(10000)->Arg(50000);

void BM_EdgeMap(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> px(side * side * 3);
  for (auto& v : px) v = u(rng);
  const Image img(side, side, 3, std::move(px));
  for (auto _ : state) benchmark::DoNotOptimize(edge_map(img));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_EdgeMap)->Arg(64)->Arg(256)->Arg(512);

void BM_Dcs(benchmark::State& state) {
  SimulationConfig cfg;
  cfg.corpus_size = 200;
  Simulation sim(cfg);
  const auto& caption = sim.captions().front();
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(dcs_score(sim, caption, 14.6, seed++));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Dcs);

}  // namespace
BENCHMARK_MAIN();
