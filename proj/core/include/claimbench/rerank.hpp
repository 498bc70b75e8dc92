#pragma once

#include "claimbench/corpus.hpp"
#include "claimbench/provider.hpp"
#include "claimbench/retrieve.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::rerank {

/// Pairwise relevance scorer. Must be safe to call from several threads.
class RerankScorer {
  public:
    virtual ~RerankScorer() = default;
    /// One score per document, higher is more relevant.
    virtual std::vector<double> score(std::string_view query, std::span<const std::string> documents) const = 0;
    virtual std::string model_tag() const = 0;
};

/// Scores through a provider's rerank endpoint.
class ClientScorer : public RerankScorer {
  public:
    ClientScorer(provider::ProviderClient& client, std::string model);
    std::vector<double> score(std::string_view query, std::span<const std::string> documents) const override;
    std::string model_tag() const override { return model_; }

  private:
    provider::ProviderClient& client_;
    std::string model_;
};

struct RerankResult {
    retrieve::RankedRun run;
    /// Claims whose scorer call failed; they keep first-stage order.
    std::vector<std::string> failed_claims;
};

/// Rescores each claim's top-j candidates against the full fact-check text
/// and sorts them by (score desc, first-stage rank asc). Candidates past j
/// follow in first-stage order with their first-stage scores. `queries` maps
/// claim id to the text that was retrieved with.
RerankResult rerank_run(const retrieve::RankedRun& run, const std::map<std::string, std::string, std::less<>>& queries,
                        const corpus::Dataset& dataset, const RerankScorer& scorer, std::size_t j,
                        std::size_t parallelism = 8);

using RunMetric = std::function<double(const retrieve::RankedRun&)>;

struct SweepPoint {
    std::size_t j = 0;
    double value = 0.0;
};

/// Reranks at each j and evaluates `metric` on the result.
std::vector<SweepPoint> sweep_j(const retrieve::RankedRun& run,
                                const std::map<std::string, std::string, std::less<>>& queries,
                                const corpus::Dataset& dataset, const RerankScorer& scorer,
                                std::span<const std::size_t> j_values, const RunMetric& metric,
                                std::size_t parallelism = 8);

}  // namespace claimbench::rerank
