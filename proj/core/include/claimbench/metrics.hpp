#pragma once

#include "claimbench/corpus.hpp"
#include "claimbench/perturb.hpp"
#include "claimbench/retrieve.hpp"

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::metrics {

using ClaimSet = std::set<std::string, std::less<>>;

/// (sum of precision@i over relevant hits in the top k) / min(|relevant|, k).
/// Throws std::invalid_argument for an empty relevant set or k == 0.
double average_precision_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                              std::size_t k);
double average_precision_at_k(const retrieve::Ranking& ranking, const std::set<std::string>& relevant, std::size_t k);

/// Mean AP@k over claims present in the run and in qrels, optionally
/// restricted to `subset`. Throws DataError if no claim qualifies.
double map_at_k(const retrieve::RankedRun& run, const corpus::RelevanceJudgments& qrels, std::size_t k,
                const ClaimSet* subset = nullptr);

/// Claims with a valid perturbation that were also evaluated unperturbed.
ClaimSet aligned_subset(const retrieve::RankedRun& unperturbed, const perturb::PerturbationSet& perturbations);

/// `subset` narrowed to claims present in both runs and judged in qrels.
/// Throws DataError, naming the runs, when nothing is left.
ClaimSet effective_subset(const retrieve::RankedRun& a, const retrieve::RankedRun& b,
                          const corpus::RelevanceJudgments& qrels, const ClaimSet& subset);

struct GapValue {
    double map_before = 0.0;
    double map_after = 0.0;
    double delta_pp = 0.0;
    std::size_t subset_size = 0;
};

/// 100 * (MAP@k(after) - MAP@k(before)) over the effective subset. The three
/// gaps differ only in which runs are compared.
GapValue map_gap(const retrieve::RankedRun& before, const retrieve::RankedRun& after,
                 const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k);

/// Perturbed vs unperturbed first-stage runs.
double retrieval_gap(const retrieve::RankedRun& u_run, const retrieve::RankedRun& p_run,
                     const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k);
/// Perturbed reranked vs perturbed first-stage runs.
double recovery_gap(const retrieve::RankedRun& p_first, const retrieve::RankedRun& p_reranked,
                    const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k);
/// Perturbed reranked vs unperturbed reranked runs.
double overall_gap(const retrieve::RankedRun& u_reranked, const retrieve::RankedRun& p_reranked,
                   const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k);

enum class GapStage { first_stage, rerank_recovery, overall };

std::string_view gap_stage_name(GapStage s) noexcept;
GapStage parse_gap_stage(std::string_view name);

/// For rerank_recovery rows, map_unperturbed holds the perturbed first-stage
/// MAP and map_perturbed the perturbed reranked MAP.
struct GapRow {
    std::string variant;
    GapStage stage = GapStage::first_stage;
    std::size_t k = 0;
    std::size_t subset_size = 0;
    double map_unperturbed = 0.0;
    double map_perturbed = 0.0;
    double delta_pp = 0.0;

    friend bool operator==(const GapRow&, const GapRow&) = default;
};

struct GapReport {
    std::vector<GapRow> rows;

    friend bool operator==(const GapReport&, const GapReport&) = default;
};

/// Runs for one perturbation variant. Reranked runs may be null, in which
/// case only first-stage rows are produced.
struct VariantRuns {
    std::string variant;
    ClaimSet subset;
    const retrieve::RankedRun* perturbed_first = nullptr;
    const retrieve::RankedRun* perturbed_reranked = nullptr;
};

/// Rows ordered by variant (input order), stage, then k. All three blocks use
/// the same aligned subset.
GapReport compute_gap_report(const retrieve::RankedRun& u_first, const retrieve::RankedRun* u_reranked,
                             std::span<const VariantRuns> variants, const corpus::RelevanceJudgments& qrels,
                             std::span<const std::size_t> ks);

/// report.csv: variant,stage,k,subset_size,map_unperturbed,map_perturbed,delta_pp
std::string render_report_csv(const GapReport& report);
/// Three blocks (first-stage, recovery, overall), one row per variant, one
/// delta column per k.
std::string render_report_markdown(const GapReport& report);
GapReport parse_report_csv(std::string_view csv);

}  // namespace claimbench::metrics
