#include "claimbench/mitigate.hpp"
#include "claimbench/textops.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace claimbench;

namespace {

const std::string kClaim =
    "The World Health Organization confirmed that eating raw garlic every morning protects against COVID-19 "
    "and that 5G towers in Lagos spread the virus faster than anywhere else in Nigeria.";
const std::string kRewrite =
    "Da World Helth Organisation confirm seh eating raw garlic evry mornin protec against covid "
    "an dat 5G tower dem inna Lagos spread di virus fasta dan anywhere else inna Nigeria, yuh know.";

void BM_LevenshteinWords(benchmark::State& state) {
    const auto a = textops::tokenize_words(kClaim);
    const auto b = textops::tokenize_words(kRewrite);
    for (auto _ : state) {
        benchmark::DoNotOptimize(textops::levenshtein(a, b));
    }
}
BENCHMARK(BM_LevenshteinWords);

void BM_LevenshteinChars(benchmark::State& state) {
    const auto a = textops::tokenize_chars(kClaim);
    const auto b = textops::tokenize_chars(kRewrite);
    for (auto _ : state) {
        benchmark::DoNotOptimize(textops::levenshtein(a, b));
    }
}
BENCHMARK(BM_LevenshteinChars);

void BM_RougeL(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(textops::rouge_f1(kClaim, kRewrite, textops::RougeVariant::RL));
    }
}
BENCHMARK(BM_RougeL);

void BM_MnrLoss(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    mitigate::Matrix s(n, std::vector<double>(n));
    for (auto& row : s) {
        for (auto& x : row) {
            x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(mitigate::mnr_loss(s, 0.05));
    }
}
BENCHMARK(BM_MnrLoss)->Arg(32)->Arg(128);

}  // namespace
