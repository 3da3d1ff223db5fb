#include <benchmark/benchmark.h>

#include "prosdd/corpus.hpp"
#include "prosdd/eval.hpp"
#include "prosdd/model.hpp"
#include "prosdd/prosody.hpp"

using namespace prosdd;

namespace {

std::vector<float> bench_utterance() {
  SpeakerProfile p;
  p.speaker_id = "bench";
  p.base_f0 = 140.0;
  p.f0_variability = 0.07;
  p.resonance_centers = {500.0, 1400.0, 2600.0};
  p.speaking_rate = 3.0;
  return synth_utterance(p, AttackFamily::none, 1);
}

void BM_Synthesis(benchmark::State& state) {
  SpeakerProfile p;
  p.speaker_id = "bench";
  p.base_f0 = 140.0;
  p.f0_variability = 0.07;
  p.resonance_centers = {500.0, 1400.0, 2600.0};
  p.speaking_rate = 3.0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(synth_utterance(p, AttackFamily::none, ++seed));
  }
}
BENCHMARK(BM_Synthesis)->Unit(benchmark::kMillisecond);

void BM_F0Estimation(benchmark::State& state) {
  const auto samples = bench_utterance();
  const auto frames = frame_signal(samples);
  for (auto _ : state) {
    for (const auto& f : frames) benchmark::DoNotOptimize(estimate_f0(f));
  }
}
BENCHMARK(BM_F0Estimation)->Unit(benchmark::kMillisecond);

void BM_ProsodicAnalysis(benchmark::State& state) {
  const auto samples = bench_utterance();
  for (auto _ : state) {
    benchmark::DoNotOptimize(analyze_utterance(samples));
  }
}
BENCHMARK(BM_ProsodicAnalysis)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.hidden_dim = int(state.range(0));
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  const Model model(cfg, 1);
  const auto samples = bench_utterance();
  for (auto _ : state) {
    ForwardCache cache;
    const Mat z = model.encode_latents(samples, cache);
    const Mat h = model.contextualize(z, cache);
    benchmark::DoNotOptimize(model.classify(h, cache));
  }
}
BENCHMARK(BM_ModelForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ComputeEER(benchmark::State& state) {
  Rng rng(3);
  std::vector<TrialScore> trials;
  for (int i = 0; i < int(state.range(0)); ++i) {
    const bool bona = i % 2 == 0;
    trials.push_back({"t", bona ? Label::bonafide : Label::spoof,
                      bona ? AttackFamily::none : AttackFamily::A_flat_pitch,
                      rng.normal() + (bona ? 0.5 : -0.5)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_eer(trials));
  }
}
BENCHMARK(BM_ComputeEER)->Arg(400)->Arg(4000);

}  // namespace

BENCHMARK_MAIN();
