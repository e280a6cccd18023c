// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "diamoe/augment.hpp"
#include "diamoe/cfm.hpp"
#include "diamoe/lexicon.hpp"
#include "diamoe/metrics.hpp"
#include "diamoe/moe_embed.hpp"

using namespace diamoe;

namespace {

PhonemeInventory bench_inventory() {
    return PhonemeInventory::parse("p\tconsonant\nt\tconsonant\ntʰ\tconsonant\nts\tconsonant\n"
                                   "tsʰ\tconsonant\na\tvowel\nai\tvowel\ni\tvowel\n˥\ttone\n˥˩\ttone\n");
}

void BM_TokenizeIpa(benchmark::State& state) {
    const auto inv = bench_inventory();
    std::string text;
    for (int i = 0; i < 64; ++i) text += "tsʰai˥˩ tʰa˥ pi";
    for (auto _ : state) {
        benchmark::DoNotOptimize(tokenize_ipa(text, inv));
    }
}
BENCHMARK(BM_TokenizeIpa);

void BM_G2p(benchmark::State& state) {
    const auto inv = bench_inventory();
    const auto lex = Lexicon::parse("甲\t0\tp a ˥\n乙\t0\ttsʰ ai ˥˩\n甲乙\t0\tt i ˥\n", inv, 1);
    std::string text;
    for (int i = 0; i < 128; ++i) text += "甲乙甲";
    for (auto _ : state) {
        benchmark::DoNotOptimize(g2p(text, 0, lex, inv));
    }
}
BENCHMARK(BM_G2p);

void BM_MoeForward(benchmark::State& state) {
    Rng rng(1);
    const auto width = static_cast<std::size_t>(state.range(0));
    MoeLayer layer(width, 8, 2, rng);
    for (auto& e : layer.experts) e.w2.value = gaussian(e.w2.rows(), e.w2.cols(), 0.1, rng);
    const Mat h = gaussian(32, static_cast<Eigen::Index>(width), 1.0, rng);
    for (auto _ : state) {
        MoeLayer::Cache cache;
        benchmark::DoNotOptimize(layer.forward(EmbeddingSequence{h, 32}, cache));
    }
}
BENCHMARK(BM_MoeForward)->Arg(16)->Arg(64);

void BM_TrainSteps(benchmark::State& state) {
    const auto data = make_toy_dataset(3, 40, 5);
    ModelConfig cfg;
    cfg.vocab = data.inventory.size();
    cfg.experts = 3;
    StageConfig stage;
    stage.stage = 2;
    stage.steps = 10;
    stage.warmup = 1;
    for (auto _ : state) {
        ToyTtsModel model(cfg);
        model.enable_moe();
        benchmark::DoNotOptimize(train_stage(data.examples, stage, model));
    }
}
BENCHMARK(BM_TrainSteps)->Unit(benchmark::kMillisecond);

void BM_TimeStretch(benchmark::State& state) {
    AudioBuffer audio;
    audio.samples.resize(16000);
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        audio.samples[i] = 8000.0 * std::sin(0.17 * static_cast<double>(i));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(time_stretch(audio, 1.1));
    }
}
BENCHMARK(BM_TimeStretch)->Unit(benchmark::kMillisecond);

void BM_Wer(benchmark::State& state) {
    std::vector<std::string> ref;
    std::vector<std::string> hyp;
    for (int i = 0; i < state.range(0); ++i) {
        ref.push_back("w" + std::to_string(i % 17));
        hyp.push_back("w" + std::to_string((i * 7) % 19));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(wer(ref, hyp));
    }
}
BENCHMARK(BM_Wer)->Arg(20)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
