#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "cosdpo/eval.hpp"
#include "cosdpo/train.hpp"

using namespace cosdpo;

namespace {

struct Fixture {
  MoftDataset data = synth_conflicting(200, 8, 16, 2, 0.8, 1);
  std::shared_ptr<const ScoreModel> base;
  ScoreModel cos_init, ls_init;

  static ModelConfig config(bool conditioned) {
    ModelConfig c;
    c.d = 16;
    c.m = conditioned ? 2 : 0;
    c.condition_weight = conditioned;
    return c;
  }

  Fixture()
      : base(std::make_shared<const ScoreModel>(init_params(config(false), ModelKind::Base))),
        cos_init(init_params(config(true), ModelKind::Augmentation, base)),
        ls_init(init_params(config(false), ModelKind::Augmentation, base)) {}
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Each iteration is a 100-step training run; divide by 100 for the per-step cost.
void BM_WeightCosSteps(benchmark::State& state) {
  const auto& f = fixture();
  TrainConfig cfg;
  cfg.steps = 100;
  for (auto _ : state) benchmark::DoNotOptimize(train_weight_cos(*f.base, f.cos_init, f.data, cfg));
}
BENCHMARK(BM_WeightCosSteps)->Unit(benchmark::kMillisecond);

void BM_DpoLsSteps(benchmark::State& state) {
  const auto& f = fixture();
  TrainConfig cfg;
  cfg.steps = 100;
  const SimplexPoint w({0.5, 0.5});
  for (auto _ : state) benchmark::DoNotOptimize(train_dpo_ls(*f.base, f.ls_init, f.data, w, cfg));
}
BENCHMARK(BM_DpoLsSteps)->Unit(benchmark::kMillisecond);

void BM_Hypervolume(benchmark::State& state) {
  const std::size_t m = state.range(0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> pts(state.range(1), std::vector<double>(m));
  for (auto& p : pts) {
    // points near the unit sphere are mostly mutually nondominated
    double s = 0;
    for (auto& x : p) s += (x = u(rng) + 1e-3) * x;
    for (auto& x : p) x /= std::sqrt(s);
  }
  const ReferencePoint ref{std::vector<double>(m, 0.0), Direction::Maximize};
  for (auto _ : state) benchmark::DoNotOptimize(hypervolume(pts, ref));
}
BENCHMARK(BM_Hypervolume)->Args({2, 100})->Args({3, 50})->Args({4, 30})->Args({5, 20});

void BM_NdcgAt10(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 4);
  std::vector<double> s(state.range(0)), z(state.range(0));
  for (auto& x : s) x = u(rng);
  for (auto& x : z) x = std::floor(u(rng));
  for (auto _ : state) benchmark::DoNotOptimize(ndcg_at_k(s, z, 10));
}
BENCHMARK(BM_NdcgAt10)->Arg(8)->Arg(128);

}  // namespace
BENCHMARK_MAIN();
