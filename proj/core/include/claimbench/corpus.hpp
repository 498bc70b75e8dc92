#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace claimbench::corpus {

struct Claim {
    std::string id;
    std::string text;
    std::map<std::string, std::string> meta;

    friend bool operator==(const Claim&, const Claim&) = default;
};

struct FactCheck {
    std::string id;
    std::string text;
    /// Derived from `text` by split_paragraphs; never empty.
    std::vector<std::string> paragraphs;

    friend bool operator==(const FactCheck&, const FactCheck&) = default;
};

/// Builds a FactCheck, deriving its paragraphs. Throws DataError on blank text.
FactCheck make_fact_check(std::string id, std::string text);

/// claim id -> relevant fact-check ids.
class RelevanceJudgments {
  public:
    void add(const std::string& claim_id, const std::string& fact_check_id);

    /// Empty set when the claim has no judgments.
    const std::set<std::string>& relevant(std::string_view claim_id) const;
    bool has_judgments(std::string_view claim_id) const;
    std::size_t size() const noexcept { return pairs_; }
    const std::map<std::string, std::set<std::string>, std::less<>>& entries() const noexcept {
        return by_claim_;
    }

    friend bool operator==(const RelevanceJudgments& a, const RelevanceJudgments& b) {
        return a.by_claim_ == b.by_claim_;
    }

  private:
    std::map<std::string, std::set<std::string>, std::less<>> by_claim_;
    std::size_t pairs_ = 0;
};

/// Immutable after loading; safe to share across threads.
class Dataset {
  public:
    Dataset() = default;
    /// Throws DataError on duplicate ids or blank texts.
    Dataset(std::vector<Claim> claims, std::vector<FactCheck> fact_checks);

    const std::vector<Claim>& claims() const noexcept { return claims_; }
    const std::vector<FactCheck>& fact_checks() const noexcept { return fact_checks_; }

    const Claim* find_claim(std::string_view id) const;
    const FactCheck* find_fact_check(std::string_view id) const;
    const Claim& claim(std::string_view id) const;
    const FactCheck& fact_check(std::string_view id) const;

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.claims_ == b.claims_ && a.fact_checks_ == b.fact_checks_;
    }

  private:
    std::vector<Claim> claims_;
    std::vector<FactCheck> fact_checks_;
    std::unordered_map<std::string, std::size_t> claim_index_;
    std::unordered_map<std::string, std::size_t> fact_check_index_;
};

struct LoadedDataset {
    Dataset dataset;
    RelevanceJudgments qrels;
};

/// Reads claims.jsonl, factchecks.jsonl and qrels.tsv. Errors carry the file
/// name and 1-based line number; qrels ids must resolve ("dangling id <id>").
LoadedDataset load_dataset(const std::string& claims_path, const std::string& factchecks_path,
                           const std::string& qrels_path);

/// Same checks as load_dataset, over in-memory file contents.
LoadedDataset parse_dataset(std::string_view claims_jsonl, std::string_view factchecks_jsonl,
                            std::string_view qrels_tsv);

std::string serialize_claims(const Dataset& dataset);
std::string serialize_fact_checks(const Dataset& dataset);
std::string serialize_qrels(const RelevanceJudgments& qrels);

/// Claims with at least one judgment, in dataset order. Claims without
/// judgments stay indexable but are never evaluated.
std::vector<std::string> evaluable_claims(const Dataset& dataset, const RelevanceJudgments& qrels);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> dev;
    std::vector<std::string> test;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Seeded shuffle, then dev = floor(n * ratios[1]), test = floor(n * ratios[2]),
/// train = the remainder. Throws std::invalid_argument on an empty list or ratios
/// not summing to 1 (within 1e-9).
DatasetSplit split_dataset(std::span<const std::string> claim_ids,
                           std::array<double, 3> ratios, std::uint64_t seed);

/// Split file: `claim_id<TAB>train|dev|test` per line.
DatasetSplit parse_split(std::string_view tsv, const Dataset& dataset);
DatasetSplit load_split(const std::string& path, const Dataset& dataset);
std::string serialize_split(const DatasetSplit& split);

/// Paragraphs are separated by one or more blank (whitespace-only) lines.
/// Lines inside a paragraph are kept verbatim; empty paragraphs are dropped.
std::vector<std::string> split_paragraphs(std::string_view text);

}  // namespace claimbench::corpus
