#include "claimbench/rerank.hpp"

#include "claimbench/common.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace claimbench::rerank {

ClientScorer::ClientScorer(provider::ProviderClient& client, std::string model)
    : client_(client), model_(std::move(model)) {}

std::vector<double> ClientScorer::score(std::string_view query, std::span<const std::string> documents) const {
    return client_.rerank_scores({model_, std::string(query), std::vector<std::string>(documents.begin(), documents.end())});
}

RerankResult rerank_run(const retrieve::RankedRun& run, const std::map<std::string, std::string, std::less<>>& queries,
                        const corpus::Dataset& dataset, const RerankScorer& scorer, std::size_t j,
                        std::size_t parallelism) {
    if (run.stage != retrieve::Stage::first_stage) {
        throw std::invalid_argument("rerank_run expects a first-stage run");
    }
    if (j == 0) {
        throw std::invalid_argument("rerank_run: j must be at least 1");
    }
    std::vector<const std::pair<const std::string, retrieve::Ranking>*> items;
    for (const auto& entry : run.rankings) {
        if (!queries.contains(entry.first)) {
            throw DataError("no query text for claim " + entry.first);
        }
        items.push_back(&entry);
    }
    std::vector<retrieve::Ranking> reranked(items.size());
    std::vector<char> failed(items.size(), 0);

    parallel_for(items.size(), parallelism, [&](std::size_t i) {
        const auto& [claim_id, ranking] = *items[i];
        const auto head = std::min(j, ranking.size());
        std::vector<std::string> documents;
        documents.reserve(head);
        for (std::size_t r = 0; r < head; ++r) {
            documents.push_back(dataset.fact_check(ranking[r].id).text);
        }
        std::vector<double> scores;
        try {
            scores = head == 0 ? std::vector<double>{} : scorer.score(queries.find(claim_id)->second, documents);
            if (scores.size() != head) {
                throw ProviderError("reranker returned " + std::to_string(scores.size()) + " scores for " +
                                    std::to_string(head) + " candidates");
            }
        } catch (const ProviderError& e) {
            log_warning("rerank failed for claim " + claim_id + ": " + e.what());
            failed[i] = 1;
            reranked[i] = ranking;
            return;
        }
        std::vector<std::size_t> order(head);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        auto& out = reranked[i];
        out.reserve(ranking.size());
        for (const auto r : order) {
            out.push_back({ranking[r].id, scores[r]});
        }
        out.insert(out.end(), ranking.begin() + static_cast<std::ptrdiff_t>(head), ranking.end());
    });

    RerankResult result;
    result.run.stage = retrieve::Stage::reranked;
    result.run.model_tag = scorer.model_tag();
    result.run.depth = run.depth;
    for (std::size_t i = 0; i < items.size(); ++i) {
        result.run.rankings.emplace(items[i]->first, std::move(reranked[i]));
        if (failed[i]) {
            result.failed_claims.push_back(items[i]->first);
        }
    }
    return result;
}

std::vector<SweepPoint> sweep_j(const retrieve::RankedRun& run,
                                const std::map<std::string, std::string, std::less<>>& queries,
                                const corpus::Dataset& dataset, const RerankScorer& scorer,
                                std::span<const std::size_t> j_values, const RunMetric& metric,
                                std::size_t parallelism) {
    std::vector<SweepPoint> table;
    for (const auto j : j_values) {
        table.push_back({j, metric(rerank_run(run, queries, dataset, scorer, j, parallelism).run)});
    }
    return table;
}

}  // namespace claimbench::rerank
