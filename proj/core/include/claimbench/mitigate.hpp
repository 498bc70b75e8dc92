#pragma once

#include "claimbench/corpus.hpp"
#include "claimbench/perturb.hpp"
#include "claimbench/provider.hpp"
#include "claimbench/retrieve.hpp"

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::mitigate {

enum class NormalizationFlag { normalized, unchanged, refused, parse_failed };

std::string_view flag_name(NormalizationFlag f) noexcept;

struct NormalizationResult {
    std::string text;
    NormalizationFlag flag = NormalizationFlag::normalized;
    std::string prompt_tag;

    friend bool operator==(const NormalizationResult&, const NormalizationResult&) = default;
};

/// Reads the last "Normalised Claim:" line, quotes stripped. nullopt when
/// there is none or it is empty.
std::optional<std::string> parse_normalized(std::string_view response);

/// True when a response without a usable answer reads like a refusal.
bool looks_like_refusal(std::string_view response);

/// One temperature-0 chat call. Unparseable responses and refusals pass the
/// input through with the matching flag.
NormalizationResult normalize_claim(std::string_view text, provider::ProviderClient& client,
                                    const std::string& model);

std::vector<NormalizationResult> normalize_claims(std::span<const std::string> texts,
                                                  provider::ProviderClient& client, const std::string& model,
                                                  std::size_t parallelism = 8);

/// Highest BM25-ranked fact-check outside `relevant`. Throws DataError when
/// every fact-check is relevant.
std::string mine_hard_negative(std::string_view claim_text, const retrieve::Bm25Index& index,
                               const std::set<std::string>& relevant);

inline constexpr std::string_view kUnperturbedTag = "unperturbed";

struct TextPair {
    std::string claim_id;
    std::string source;
    std::string target;
    std::string source_tag;
    std::string target_tag;

    friend bool operator==(const TextPair&, const TextPair&) = default;
};

struct PairCorpus {
    std::vector<TextPair> pairs;
};

/// For each claim with m valid perturbations: m (unperturbed, perturbed)
/// pairs, then the C(m, 2) unordered pairs between its perturbations. Pairs
/// whose two texts are identical are dropped. Sorted by claim id, then
/// (source_tag, target_tag). Claims missing from `originals` are skipped.
PairCorpus build_parallel_pairs(std::span<const perturb::PerturbationSet> sets,
                                const std::map<std::string, std::string, std::less<>>& originals);

struct Triple {
    std::string claim_id;
    std::string claim_text;
    std::string positive_id;
    std::string negative_id;

    friend bool operator==(const Triple&, const Triple&) = default;
};

/// One triple per (claim, relevant fact-check), all sharing the claim's
/// BM25 hard negative. Claims without judgments are skipped.
std::vector<Triple> build_triples(std::span<const std::string> claim_ids, const corpus::Dataset& dataset,
                                  const corpus::RelevanceJudgments& qrels, const retrieve::Bm25Index& index);

/// Tabs and line breaks inside fields become single spaces.
std::string render_pairs_tsv(const PairCorpus& corpus);
std::string render_triples_tsv(std::span<const Triple> triples);
void export_training_data(const PairCorpus& corpus, const std::string& path);
void export_training_data(std::span<const Triple> triples, const std::string& path);

using Matrix = std::vector<std::vector<double>>;

struct MnrResult {
    double loss = 0.0;
    Matrix gradient;
};

/// -(1/n) sum_i log softmax_i(S_i / t)[i] with the positives on the diagonal.
/// gradient[i][j] = (softmax_ij - [i == j]) / (n t). Throws
/// std::invalid_argument unless S is square, non-empty and t > 0.
MnrResult mnr_loss(const Matrix& similarity, double temperature = 1.0);

struct KdResult {
    double loss = 0.0;
    Matrix grad_student_src;
    Matrix grad_student_tgt;
};

/// (1/B) sum_j (|T_j - S_j|^2 + |T_j - U_j|^2), teacher T on source, student
/// S on source and U on target. Throws std::invalid_argument on shape
/// mismatch or an empty batch.
KdResult kd_mse_loss(const Matrix& teacher_src, const Matrix& student_src, const Matrix& student_tgt);

}  // namespace claimbench::mitigate
