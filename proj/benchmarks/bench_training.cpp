#include <benchmark/benchmark.h>

#include "agb/io.hpp"

using namespace agb;

namespace {

struct Fixture {
  TrainConfig cfg;
  Dataset data;
  Batch<float> batch;

  Fixture() {
    ExperimentConfig c;
    c.data.count = 4;
    c.resolve();
    cfg = c.train;
    data = generate_dataset(c.data);
    batch = make_batch<float>(std::span<const TrainingSample>(data.samples));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_GeneratorStep(benchmark::State& state) {
  const auto& f = fixture();
  auto st = init_train_state<float>(f.cfg);
  for (auto _ : state) benchmark::DoNotOptimize(generator_step(f.batch, st.params, f.cfg, st.agb, st.gen_opt));
}
BENCHMARK(BM_GeneratorStep)->Unit(benchmark::kMillisecond);

void BM_CriticStep(benchmark::State& state) {
  const auto& f = fixture();
  auto st = init_train_state<float>(f.cfg);
  for (auto _ : state) benchmark::DoNotOptimize(critic_step(f.batch, st.params, f.cfg, st.agb, st.critic_opt));
}
BENCHMARK(BM_CriticStep)->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& state) {
  const auto& f = fixture();
  const auto st = init_train_state<float>(f.cfg);
  for (auto _ : state) benchmark::DoNotOptimize(run_generator(st.params.generator, f.cfg.generator, f.data.samples));
}
BENCHMARK(BM_Inference)->Unit(benchmark::kMillisecond);

}  // namespace
