#include "claimbench/common.hpp"
#include "claimbench/metrics.hpp"
#include "claimbench/mock_transport.hpp"
#include "claimbench/retrieve.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace claimbench;

namespace {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = [] {
        std::vector<std::string> w;
        for (int i = 0; i < 5000; ++i) {
            w.push_back("w" + std::to_string(i));
        }
        return w;
    }();
    return words;
}

std::string random_text(std::mt19937_64& rng, std::size_t words) {
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        // Squaring skews draws toward low ids, roughly Zipf-like.
        const auto a = uniform_below(rng, vocabulary().size());
        const auto b = uniform_below(rng, vocabulary().size());
        out += vocabulary()[a * b / vocabulary().size()] + " ";
    }
    return out;
}

std::vector<corpus::FactCheck> random_corpus(std::size_t n) {
    std::mt19937_64 rng(7);
    std::vector<corpus::FactCheck> fcs;
    for (std::size_t i = 0; i < n; ++i) {
        fcs.push_back(corpus::make_fact_check("f" + std::to_string(i), random_text(rng, 200)));
    }
    return fcs;
}

void BM_Bm25Build(benchmark::State& state) {
    const auto fcs = random_corpus(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(retrieve::build_bm25(fcs));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bm25Build)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_Bm25Search(benchmark::State& state) {
    const auto index = retrieve::build_bm25(random_corpus(static_cast<std::size_t>(state.range(0))));
    std::mt19937_64 rng(11);
    std::vector<std::string> queries;
    for (int i = 0; i < 64; ++i) {
        queries.push_back(random_text(rng, 12));
    }
    std::size_t q = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(retrieve::bm25_search(index, queries[q++ % queries.size()], 50));
    }
}
BENCHMARK(BM_Bm25Search)->Arg(1000)->Arg(5000)->Unit(benchmark::kMicrosecond);

void BM_DenseSearch(benchmark::State& state) {
    const auto passages = static_cast<std::size_t>(state.range(0));
    const std::size_t dim = 384;
    std::mt19937_64 rng(13);
    retrieve::VectorIndex index(dim, "bench", retrieve::Granularity::paragraph);
    for (std::size_t p = 0; p < passages; ++p) {
        std::vector<double> v(dim);
        for (auto& x : v) {
            x = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
        }
        index.add({"f" + std::to_string(p / 4), static_cast<std::uint32_t>(p % 4), std::move(v)});
    }
    std::vector<double> query(dim);
    for (auto& x : query) {
        x = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(retrieve::dense_search(index, query, 50));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenseSearch)->Arg(10000)->Arg(60000)->Unit(benchmark::kMillisecond);

void BM_MapAtK(benchmark::State& state) {
    std::mt19937_64 rng(17);
    retrieve::RankedRun run{retrieve::Stage::first_stage, "bench", 50, {}};
    corpus::RelevanceJudgments qrels;
    for (int c = 0; c < 10000; ++c) {
        const auto id = "c" + std::to_string(c);
        retrieve::Ranking r;
        for (int d = 0; d < 50; ++d) {
            r.push_back({"f" + std::to_string(uniform_below(rng, 100000)), 50.0 - d});
        }
        qrels.add(id, r[uniform_below(rng, 50)].id);
        run.rankings[id] = std::move(r);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::map_at_k(run, qrels, static_cast<std::size_t>(state.range(0))));
    }
}
BENCHMARK(BM_MapAtK)->Arg(5)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace
