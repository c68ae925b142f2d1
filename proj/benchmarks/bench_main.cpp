#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "curator/audio.hpp"
#include "curator/dialect.hpp"
#include "curator/pipeline.hpp"
#include "curator/text_metrics.hpp"

using namespace curator;

static std::vector<std::string> random_words(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::string> w(n);
    for (auto& s : w) s = "w" + std::to_string(rng() % 50);
    return w;
}

static void BM_WordEditDistance(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto ref = random_words(static_cast<std::size_t>(state.range(0)), rng);
    const auto hyp = random_words(static_cast<std::size_t>(state.range(0)), rng);
    for (auto _ : state) benchmark::DoNotOptimize(word_edit_distance(ref, hyp));
}
BENCHMARK(BM_WordEditDistance)->Arg(16)->Arg(64)->Arg(256);

static void BM_WerNormalized(benchmark::State& state) {
    const std::string ref = "ذهبت إلى السوق صباحا واشتريت الخبز والحليب";
    const std::string hyp = "ذهبت الى السوق صباحاً واشتريت خبز والحليب";
    for (auto _ : state) benchmark::DoNotOptimize(wer(ref, hyp));
}
BENCHMARK(BM_WerNormalized);

static void BM_LogMel(benchmark::State& state) {
    AudioBuffer a;
    a.samples.resize(static_cast<std::size_t>(16000 * state.range(0)));
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        a.samples[i] = static_cast<float>(0.3 * std::sin(2 * 3.14159265358979 * 180 * i / 16000.0));
    }
    const MelConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(log_mel_spectrogram(a, cfg));
}
BENCHMARK(BM_LogMel)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_Voting(benchmark::State& state) {
    const auto catalog = DialectCatalog::default_catalog();
    nlohmann::json j = nlohmann::json::object();
    std::vector<ClassifierVerdict> verdicts;
    std::mt19937_64 rng(3);
    for (int c = 0; c < state.range(0); ++c) {
        const auto name = "c" + std::to_string(c);
        ClassifierVerdict v{name, {}};
        for (const auto& l : catalog.labels()) {
            j[name][l.code()] = l.code();
            v.scores[l.code()] = (rng() % 1000) / 1000.0;
        }
        verdicts.push_back(v);
    }
    const auto mapping = LabelMapping::from_json(j, catalog);
    for (auto _ : state) benchmark::DoNotOptimize(aggregate_dialect_votes(verdicts, mapping));
}
BENCHMARK(BM_Voting)->Arg(3)->Arg(10);
BENCHMARK_MAIN();
