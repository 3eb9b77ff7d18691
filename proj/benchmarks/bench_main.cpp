#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "moncirc/architectures.hpp"
#include "moncirc/inference.hpp"
#include "moncirc/monarch.hpp"
#include "moncirc/random.hpp"

using namespace moncirc;

namespace {

std::vector<double> random_input(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform();
  return x;
}

MonarchFactorization random_monarch(std::size_t h, std::size_t depth, std::uint64_t seed) {
  auto fact = make_monarch(plan_schedule(h, depth));
  Rng rng(seed);
  for (std::size_t t = 0; t < fact.depth(); ++t) {
    for (double& v : fact.layer(t)) v = rng.uniform();
  }
  return fact;
}

// Dense h x h matvec as the baseline for the structured variants below.
void BM_DenseApply(benchmark::State& state) {
  const auto h = static_cast<Eigen::Index>(state.range(0));
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(h, h).cwiseAbs();
  const auto x = random_input(static_cast<std::size_t>(h), 1);
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), h);
  Eigen::VectorXd y(h);
  for (auto _ : state) {
    y.noalias() = w * xv;
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["flops"] = static_cast<double>(dense_flops(static_cast<std::size_t>(h), static_cast<std::size_t>(h)));
}
BENCHMARK(BM_DenseApply)->RangeMultiplier(4)->Range(64, 4096);

void BM_MonarchApply(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto fact = random_monarch(h, static_cast<std::size_t>(state.range(1)), 2);
  const auto x = random_input(h, 3);
  for (auto _ : state) benchmark::DoNotOptimize(monarch_apply(fact, x));
  state.counters["flops"] = static_cast<double>(flops_per_apply(fact));
}
BENCHMARK(BM_MonarchApply)->ArgsProduct({{64, 256, 1024, 4096}, {2, 3}});

void BM_MonarchApplyLogspace(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto fact = random_monarch(h, 2, 4);
  auto x = random_input(h, 5);
  for (double& v : x) v = std::log(v);
  for (auto _ : state) benchmark::DoNotOptimize(monarch_apply_logspace(fact, x));
}
BENCHMARK(BM_MonarchApplyLogspace)->RangeMultiplier(4)->Range(64, 4096);

DatasetShard random_text(std::size_t items, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  DatasetShard data;
  data.items = items;
  data.variables = length;
  data.vocab = kTextVocab;
  data.values.resize(items * length);
  for (auto& v : data.values) v = static_cast<std::int32_t>(rng.below(kTextVocab));
  return data;
}

// Batched HMM likelihood over 64 sequences of length 64, dense vs Monarch-2 transitions.
void BM_HmmForward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const SumSpec sum = state.range(1) ? SumSpec::monarch(plan_schedule(h, 2)) : SumSpec::dense();
  const auto g = build_hmm({64, h, kTextVocab, sum, true}, 6);
  const auto data = random_text(64, 64, 7);
  for (auto _ : state) benchmark::DoNotOptimize(total_log_likelihood(g, data));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * data.items * data.variables));
}
BENCHMARK(BM_HmmForward)->ArgsProduct({{16, 64, 256}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_HmmFlows(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto g = build_hmm({64, h, kTextVocab, SumSpec::monarch(plan_schedule(h, 2)), true}, 8);
  const auto data = random_text(64, 64, 9);
  for (auto _ : state) benchmark::DoNotOptimize(flows(g, data));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * data.items * data.variables));
}
BENCHMARK(BM_HmmFlows)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
