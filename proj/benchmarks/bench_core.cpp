#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "refrec/eval.hpp"
#include "refrec/grpo.hpp"
#include "refrec/response.hpp"
#include "refrec/rewards.hpp"
#include "refrec/toytrainer.hpp"

using namespace refrec;

namespace {

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 500.0);
  const double x = u(rng), y = u(rng);
  return Box{x, y, x + 1.0 + u(rng), y + 1.0 + u(rng)};
}

void BM_Iou(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<Box> boxes;
  for (int i = 0; i < 1024; ++i) boxes.push_back(random_box(rng));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(iou(boxes[i & 1023], boxes[(i + 1) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Iou);

void BM_Parse(benchmark::State& state) {
  const std::string text = render_box_response(Box{12.5, 40, 388.25, 511}, "the mug left of the kettle");
  for (auto _ : state) benchmark::DoNotOptimize(parse(text));
}
BENCHMARK(BM_Parse);

void BM_ParseAbstain(benchmark::State& state) {
  const std::string text = render_abstain_response("nothing matches");
  for (auto _ : state) benchmark::DoNotOptimize(parse(text));
}
BENCHMARK(BM_ParseAbstain);

void BM_ScoreGroup(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  const Box gt{100, 100, 300, 260};
  std::vector<ParsedResponse> group;
  for (int i = 0; i < n; ++i) group.push_back(parse(render_box_response(i % 3 ? random_box(rng) : gt, "t")));
  const RewardConfig cfg = RewardConfig::with_group_size(n);
  for (auto _ : state) benchmark::DoNotOptimize(score_group(group, gt, ImageDims{1024, 768}, 1200, cfg));
}
BENCHMARK(BM_ScoreGroup)->Arg(8)->Arg(32);

void BM_Advantages(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.5);
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  for (auto& r : rewards) r = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(advantages(rewards));
}
BENCHMARK(BM_Advantages)->Arg(8)->Arg(64);

void BM_TrainSteps(benchmark::State& state) {
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.reward.total_steps = 10;
  cfg.eval_scenes = 1;
  cfg.levels = {Level::kEasy, Level::kHard};
  cfg.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train(cfg));
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_TrainSteps)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Macc(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::vector<GroundingOutcome> outcomes;
  for (int i = 0; i < state.range(0); ++i) outcomes.push_back(GroundingOutcome{random_box(rng), random_box(rng)});
  for (auto _ : state) benchmark::DoNotOptimize(macc(outcomes));
}
BENCHMARK(BM_Macc)->Arg(100)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
