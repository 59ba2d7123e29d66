#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "biasengine/biasconnect.hpp"
#include "biasengine/biasgraph.hpp"
#include "biasengine/occupation.hpp"
#include "biasengine/providers.hpp"
#include "biasengine/rng.hpp"
#include "biasengine/stats.hpp"

using namespace biasengine;

namespace {

std::vector<double> random_normalized(std::uint64_t& state, std::size_t k) {
  std::vector<double> w(k);
  double total = 0.0;
  for (double& v : w) {
    v = next_unit(state);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

PromptData collect(const SyntheticModel& model, std::size_t n) {
  PromptData data;
  data.init = model.generate({model.prompt_key(), {}, n});
  for (const auto& axis : model.axes()) {
    for (const auto& value : axis.values) {
      data.cf_sets[{axis.name, value}] =
          model.generate({model.prompt_key(), {{axis.name, value}}, n});
    }
  }
  return data;
}

void BM_Wasserstein1(benchmark::State& state) {
  std::uint64_t rng = 1;
  std::size_t k = static_cast<std::size_t>(state.range(0));
  CategoricalDistribution a("x", random_normalized(rng, k), 1.0);
  CategoricalDistribution b("x", random_normalized(rng, k), 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(wasserstein1_categorical(a, b));
  }
}
BENCHMARK(BM_Wasserstein1)->Arg(2)->Arg(6)->Arg(32);

void BM_ChiSquareP(benchmark::State& state) {
  ContingencyTable t;
  t.row_labels = {"a", "b", "c"};
  t.col_labels = {"x", "y", "z", "w"};
  t.counts = {{40, 12, 9, 3}, {7, 31, 8, 2}, {5, 6, 28, 9}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(chi_square_p(t));
  }
}
BENCHMARK(BM_ChiSquareP);

void BM_SyntheticGenerate(benchmark::State& state) {
  SyntheticModel model = make_occupation_model("chef", 7);
  GenerationRequest req{"chef", {{"gender", "male"}}, 48};
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.generate(req));
  }
}
BENCHMARK(BM_SyntheticGenerate);

void BM_BuildMatrix8Axes(benchmark::State& state) {
  SyntheticModel model = make_occupation_model("chef", 7);
  PromptData data = collect(model, 48);
  IdealSet ideals = IdealSet::uniform(model.axes());
  std::vector<std::string> measured = model.axes().names();
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_matrix(data, model.axes(), measured, ideals));
  }
}
BENCHMARK(BM_BuildMatrix8Axes);

void BM_DiscoverEdges(benchmark::State& state) {
  SyntheticModel model = make_occupation_model("chef", 7);
  PromptData data = collect(model, 48);
  IdealSet ideals = IdealSet::uniform(model.axes());
  for (auto _ : state) {
    benchmark::DoNotOptimize(discover_edges(data, model.axes(), 1e-4, ideals));
  }
}
BENCHMARK(BM_DiscoverEdges);

}  // namespace

BENCHMARK_MAIN();
