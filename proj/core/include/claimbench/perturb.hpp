#pragma once

#include "claimbench/corpus.hpp"
#include "claimbench/provider.hpp"
#include "claimbench/textops.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::perturb {

enum class Family { casing, typos, negation, entity_replacement, llm_rewrite, dialect };

/// Every legal (family, budget) combination. Declaration order is the canonical
/// reporting order.
enum class Variant {
    casing_truecase,
    casing_upper,
    typos_least,
    typos_most,
    negation_shallow,
    negation_double,
    entity_at_least_one,
    entity_all,
    llm_rewrite_least,
    llm_rewrite_most,
    dialect_aae,
    dialect_jamaican,
    dialect_pidgin,
    dialect_singlish,
};

inline constexpr std::size_t kVariantCount = 14;

Family family_of(Variant v) noexcept;
std::string_view family_name(Family f) noexcept;
/// Budget part of the name: "truecase", "least", "at_least_one", "aae", ...
std::string_view variant_name(Variant v) noexcept;
/// "<family>.<variant>", e.g. "typos.least". Used in reports and pair tags.
std::string variant_tag(Variant v);

Family parse_family(std::string_view name);
Variant parse_variant(Family family, std::string_view name);
Variant parse_variant_tag(std::string_view tag);
std::vector<Variant> variants_of(Family f);
std::vector<Variant> all_variants();
std::vector<Family> all_families();

/// True for families whose budgets are chosen by edit distance.
bool is_distance_budgeted(Family f) noexcept;

struct PerturbedClaim {
    std::string claim_id;
    Variant variant = Variant::casing_truecase;
    std::string text;
    bool valid = false;
    std::optional<std::size_t> edit_distance;
    std::optional<double> normalized_distance;

    Family family() const noexcept { return family_of(variant); }
    friend bool operator==(const PerturbedClaim&, const PerturbedClaim&) = default;
};

struct Provenance {
    std::string prompt_version;
    std::string model;
    std::uint64_t seed = 0;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Valid perturbations of one variant, at most one per claim.
class PerturbationSet {
  public:
    PerturbationSet() = default;
    PerturbationSet(Variant variant, Provenance provenance);

    /// Throws std::invalid_argument for an invalid entry, a different variant
    /// or a second entry for the same claim.
    void add(PerturbedClaim entry);

    Variant variant() const noexcept { return variant_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    const std::vector<PerturbedClaim>& entries() const noexcept { return entries_; }
    const PerturbedClaim* find(std::string_view claim_id) const;
    std::size_t size() const noexcept { return entries_.size(); }

    friend bool operator==(const PerturbationSet&, const PerturbationSet&) = default;

  private:
    Variant variant_ = Variant::casing_truecase;
    Provenance provenance_;
    std::vector<PerturbedClaim> entries_;
};

/// Fills edit_distance / normalized_distance at character origin.
void annotate_distance(PerturbedClaim& perturbed, std::string_view original);

/// Extracts enumerated rewrites ("Rewritten Tweet 3: ...", "3. ...", "- 3) ...")
/// in order, stripping wrapping quotes and dropping empties, template
/// placeholders and duplicates. Returns at most `n`.
std::vector<std::string> parse_candidates(std::string_view response, std::size_t n);

/// Reads {"labels": [0|1, ...]} from the first JSON object in `response`.
/// nullopt when missing, malformed or not exactly `expected` long.
std::optional<std::vector<int>> parse_labels(std::string_view response, std::size_t expected);

struct PerturberOptions {
    std::string model = "mock-chat";
    std::size_t candidates = 5;
    double generation_temperature = 0.9;
    std::uint64_t seed = 0;
    std::size_t parallelism = 8;
};

struct GenerationResult {
    std::vector<std::string> candidates;
    bool failed = false;
    std::string prompt_tag;
};

/// Drives the perturber/verifier prompts through a provider.
class Perturber {
  public:
    Perturber(provider::ProviderClient& client, PerturberOptions options);

    /// One chat call with the family's prompt, plus one repair call if nothing
    /// parses. `variant` picks the prompt where a family has one per budget
    /// (negation, entity replacement, dialect). Throws std::invalid_argument for
    /// casing or n == 0.
    GenerationResult generate_candidates(const corpus::Claim& claim, const corpus::FactCheck& fact_check,
                                         Family family, std::size_t n,
                                         std::optional<Variant> variant = std::nullopt) const;

    /// One 0/1 label per candidate from a temperature-0 verifier call, with one
    /// retry; all zeros if both attempts fail to produce a usable answer.
    std::vector<int> verify_candidates(const corpus::Claim& claim, const corpus::FactCheck& fact_check,
                                       Family family, std::span<const std::string> candidates) const;

    const PerturberOptions& options() const noexcept { return options_; }

  private:
    provider::ProviderClient& client_;
    PerturberOptions options_;
};

/// Picks budgeted variants from the valid candidates of one generation unit,
/// in generation order. Typos / LLM rewrite: least = smallest edit distance,
/// most = largest, ties to the earliest. Other families: the earliest valid
/// candidate per variant.
std::map<Variant, PerturbedClaim> select_budget(std::span<const PerturbedClaim> valid_candidates, Family family);

struct CasingPair {
    std::string truecase;
    std::string upper;
};

/// Rule-based; no provider call.
CasingPair perturb_casing(const corpus::Claim& claim, const textops::CaseLexicon& lexicon);

struct PerturbationFailure {
    std::string claim_id;
    std::string scope;  ///< variant tag, or family name for family-wide failures
    std::string reason;  ///< generation_failed | no_valid_candidate | provider_error: ...

    friend bool operator==(const PerturbationFailure&, const PerturbationFailure&) = default;
};

struct VariantCount {
    Variant variant;
    std::size_t attempted = 0;
    std::size_t valid = 0;
};

struct PerturbationRun {
    std::vector<PerturbationSet> sets;  ///< canonical variant order
    std::vector<PerturbationFailure> failures;
    std::vector<VariantCount> counts;
};

/// Generate -> verify -> filter -> select for every claim and family. Claims
/// without a relevant fact-check are skipped. Per-claim failures are
/// collected, never thrown. Output order follows `claim_ids`.
PerturbationRun perturb_dataset(std::span<const std::string> claim_ids, const corpus::RelevanceJudgments& qrels,
                                const corpus::Dataset& dataset, std::span<const Family> families,
                                const Perturber& perturber, const textops::CaseLexicon& lexicon);

/// Means over one set; ROUGE values in percent, Levenshtein as a fraction.
struct OverlapStats {
    Variant variant;
    std::size_t pairs = 0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double levenshtein_word = 0.0;
    double levenshtein_char = 0.0;
};

/// `originals` maps claim id to unperturbed text; entries without an original
/// are skipped.
OverlapStats overlap_statistics(const PerturbationSet& set, const std::map<std::string, std::string, std::less<>>& originals);

/// perturbations.jsonl: one object per entry with keys claim_id, family,
/// variant, text, valid, edit_distance?, normalized_distance?, prompt_version,
/// model.
std::string serialize_perturbations(std::span<const PerturbationSet> sets);
/// Groups lines back into sets in canonical variant order. Throws DataError.
std::vector<PerturbationSet> parse_perturbations(std::string_view jsonl);

std::string render_counts_csv(std::span<const VariantCount> counts);
std::string render_overlap_csv(std::span<const OverlapStats> stats);

}  // namespace claimbench::perturb
