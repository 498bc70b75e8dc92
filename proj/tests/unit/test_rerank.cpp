#include "claimbench/common.hpp"
#include "claimbench/metrics.hpp"
#include "claimbench/mock_transport.hpp"
#include "claimbench/rerank.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

using namespace claimbench;
using namespace claimbench::rerank;
using retrieve::RankedRun;
using retrieve::Stage;

namespace {

/// Scores a document by a fixed per-text table; throws for listed queries.
class TableScorer : public RerankScorer {
  public:
    std::map<std::string, double> table;
    std::set<std::string> failing;

    std::vector<double> score(std::string_view query, std::span<const std::string> documents) const override {
        if (failing.contains(std::string(query))) {
            throw ProviderError("scripted failure", 503);
        }
        std::vector<double> out;
        for (const auto& d : documents) {
            out.push_back(table.at(d));
        }
        return out;
    }
    std::string model_tag() const override { return "table"; }
};

corpus::Dataset make_dataset(std::size_t n) {
    std::vector<corpus::FactCheck> fcs;
    for (std::size_t i = 0; i < n; ++i) {
        fcs.push_back(corpus::make_fact_check("f" + std::to_string(i), "text " + std::to_string(i)));
    }
    return corpus::Dataset({{"c0", "claim zero", {}}, {"c1", "claim one", {}}}, std::move(fcs));
}

}  // namespace

TEST(Rerank, SortsHeadAndKeepsTail) {
    const auto dataset = make_dataset(5);
    TableScorer scorer;
    scorer.table = {{"text 0", 0.1}, {"text 1", 0.9}, {"text 2", 0.9}, {"text 3", 5.0}, {"text 4", 7.0}};
    RankedRun run{Stage::first_stage, "bm25", 5, {}};
    run.rankings["c0"] = {{"f0", 10}, {"f1", 9}, {"f2", 8}, {"f3", 7}, {"f4", 6}};
    const std::map<std::string, std::string, std::less<>> queries = {{"c0", "claim zero"}};
    const auto result = rerank_run(run, queries, dataset, scorer, 3, 2);
    EXPECT_TRUE(result.failed_claims.empty());
    EXPECT_EQ(result.run.stage, Stage::reranked);
    EXPECT_EQ(result.run.run_tag(), "reranked:table");
    const auto& r = result.run.rankings.at("c0");
    const retrieve::Ranking expected = {{"f1", 0.9}, {"f2", 0.9}, {"f0", 0.1}, {"f3", 7}, {"f4", 6}};
    EXPECT_EQ(r, expected);
}

TEST(Rerank, FailedClaimKeepsFirstStageOrder) {
    const auto dataset = make_dataset(3);
    TableScorer scorer;
    scorer.table = {{"text 0", 0.0}, {"text 1", 1.0}, {"text 2", 2.0}};
    scorer.failing = {"claim one"};
    RankedRun run{Stage::first_stage, "bm25", 3, {}};
    run.rankings["c0"] = {{"f0", 3}, {"f1", 2}, {"f2", 1}};
    run.rankings["c1"] = {{"f0", 3}, {"f1", 2}, {"f2", 1}};
    const std::map<std::string, std::string, std::less<>> queries = {{"c0", "claim zero"}, {"c1", "claim one"}};
    auto previous = set_log_sink([](std::string_view, std::string_view) {});
    const auto result = rerank_run(run, queries, dataset, scorer, 3);
    set_log_sink(previous);
    EXPECT_EQ(result.failed_claims, std::vector<std::string>{"c1"});
    EXPECT_EQ(result.run.rankings.at("c1"), run.rankings.at("c1"));
    EXPECT_EQ(result.run.rankings.at("c0").front().id, "f2");
}

TEST(Rerank, RejectsBadInputs) {
    const auto dataset = make_dataset(1);
    TableScorer scorer;
    RankedRun run{Stage::first_stage, "bm25", 1, {}};
    run.rankings["c0"] = {{"f0", 1}};
    const std::map<std::string, std::string, std::less<>> none;
    const std::map<std::string, std::string, std::less<>> queries = {{"c0", "q"}};
    EXPECT_THROW(rerank_run(run, none, dataset, scorer, 1), DataError);
    EXPECT_THROW(rerank_run(run, queries, dataset, scorer, 0), std::invalid_argument);
    run.stage = Stage::reranked;
    EXPECT_THROW(rerank_run(run, queries, dataset, scorer, 1), std::invalid_argument);
}

TEST(Rerank, InvariantsOnRandomRuns) {
    const auto dataset = make_dataset(60);
    TableScorer scorer;
    std::mt19937_64 rng(3);
    for (std::size_t i = 0; i < 60; ++i) {
        scorer.table["text " + std::to_string(i)] = static_cast<double>(uniform_below(rng, 10));
    }
    const std::map<std::string, std::string, std::less<>> queries = {{"c0", "a"}, {"c1", "b"}};
    for (int trial = 0; trial < 100; ++trial) {
        RankedRun run{Stage::first_stage, "x", 0, {}};
        for (const auto* claim : {"c0", "c1"}) {
            std::vector<std::size_t> ids(60);
            std::iota(ids.begin(), ids.end(), 0);
            seeded_shuffle(ids, rng);
            const auto len = 1 + uniform_below(rng, 50);
            retrieve::Ranking ranking;
            for (std::size_t r = 0; r < len; ++r) {
                ranking.push_back({"f" + std::to_string(ids[r]), static_cast<double>(len - r)});
            }
            run.depth = std::max<std::size_t>(run.depth, len);
            run.rankings[claim] = ranking;
        }
        for (std::size_t j : {3u, 5u, 50u}) {
            const auto result = rerank_run(run, queries, dataset, scorer, j, 2);
            for (const auto& [claim, before] : run.rankings) {
                const auto& after = result.run.rankings.at(claim);
                ASSERT_EQ(after.size(), before.size());
                const auto head = std::min(j, before.size());
                std::multiset<std::string> a, b;
                for (std::size_t r = 0; r < head; ++r) {
                    a.insert(before[r].id);
                    b.insert(after[r].id);
                    if (r > 0) {
                        EXPECT_GE(after[r - 1].score, after[r].score);
                    }
                }
                EXPECT_EQ(a, b);
                for (std::size_t r = head; r < before.size(); ++r) {
                    EXPECT_EQ(after[r], before[r]);
                }
            }
        }
    }
}

TEST(Rerank, ClientScorerWithMock) {
    auto mock = std::make_shared<provider::MockTransport>();
    provider::ProviderClient client(provider::ProviderConfig{}, mock);
    ClientScorer scorer(client, "mock-rerank");
    const std::vector<std::string> docs = {"garlic does not cure covid", "moon landing"};
    const auto scores = scorer.score("garlic cures covid", docs);
    ASSERT_EQ(scores.size(), 2u);
    EXPECT_GT(scores[0], scores[1]);
}

TEST(Sweep, OneValuePerJ) {
    const auto dataset = make_dataset(4);
    TableScorer scorer;
    scorer.table = {{"text 0", 0.0}, {"text 1", 0.0}, {"text 2", 0.0}, {"text 3", 1.0}};
    RankedRun run{Stage::first_stage, "bm25", 4, {}};
    run.rankings["c0"] = {{"f0", 4}, {"f1", 3}, {"f2", 2}, {"f3", 1}};
    corpus::RelevanceJudgments qrels;
    qrels.add("c0", "f3");
    const std::map<std::string, std::string, std::less<>> queries = {{"c0", "q"}};
    const std::vector<std::size_t> js = {1, 2, 4};
    const auto table = sweep_j(run, queries, dataset, scorer, js,
                               [&](const RankedRun& r) { return metrics::map_at_k(r, qrels, 4); });
    ASSERT_EQ(table.size(), 3u);
    EXPECT_DOUBLE_EQ(table[0].value, 0.25);
    EXPECT_DOUBLE_EQ(table[1].value, 0.25);
    EXPECT_DOUBLE_EQ(table[2].value, 1.0);
}
