#include "claimbench/corpus.hpp"

#include "claimbench/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace claimbench::corpus {

using nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

/// Calls fn(line, line_number) for each line; a trailing newline does not
/// produce an extra empty line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        fn(line, ++line_no);
        pos = end + 1;
    }
}

[[noreturn]] void fail_at(std::string_view file, std::size_t line, const std::string& what) {
    throw DataError(std::string(file) + ":" + std::to_string(line) + ": " + what);
}

json parse_json_line(std::string_view file, std::size_t line_no, std::string_view line) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::parse_error& e) {
        fail_at(file, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) {
        fail_at(file, line_no, "expected a JSON object");
    }
    return obj;
}

std::string required_string(const json& obj, const char* key, std::string_view file, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        fail_at(file, line_no, std::string("missing string field `") + key + "`");
    }
    return it->get<std::string>();
}

std::vector<Claim> parse_claims(std::string_view text) {
    constexpr std::string_view file = "claims.jsonl";
    std::vector<Claim> claims;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line)) {
            return;
        }
        const json obj = parse_json_line(file, line_no, line);
        Claim claim;
        claim.id = required_string(obj, "id", file, line_no);
        claim.text = required_string(obj, "text", file, line_no);
        if (auto meta = obj.find("meta"); meta != obj.end() && !meta->is_null()) {
            if (!meta->is_object()) {
                fail_at(file, line_no, "`meta` must be an object of strings");
            }
            for (const auto& [key, value] : meta->items()) {
                if (!value.is_string()) {
                    fail_at(file, line_no, "`meta." + key + "` must be a string");
                }
                claim.meta.emplace(key, value.get<std::string>());
            }
        }
        if (claim.id.empty()) {
            fail_at(file, line_no, "empty claim id");
        }
        if (is_blank(claim.text)) {
            fail_at(file, line_no, "blank text for claim " + claim.id);
        }
        claims.push_back(std::move(claim));
    });
    return claims;
}

std::vector<FactCheck> parse_fact_checks(std::string_view text) {
    constexpr std::string_view file = "factchecks.jsonl";
    std::vector<FactCheck> fact_checks;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line)) {
            return;
        }
        const json obj = parse_json_line(file, line_no, line);
        auto id = required_string(obj, "id", file, line_no);
        auto body = required_string(obj, "text", file, line_no);
        if (id.empty()) {
            fail_at(file, line_no, "empty fact-check id");
        }
        if (is_blank(body)) {
            fail_at(file, line_no, "blank text for fact-check " + id);
        }
        fact_checks.push_back(make_fact_check(std::move(id), std::move(body)));
    });
    return fact_checks;
}

}  // namespace

FactCheck make_fact_check(std::string id, std::string text) {
    auto paragraphs = split_paragraphs(text);
    if (paragraphs.empty()) {
        throw DataError("fact-check " + id + " has no text");
    }
    return FactCheck{std::move(id), std::move(text), std::move(paragraphs)};
}

void RelevanceJudgments::add(const std::string& claim_id, const std::string& fact_check_id) {
    if (by_claim_[claim_id].insert(fact_check_id).second) {
        ++pairs_;
    }
}

const std::set<std::string>& RelevanceJudgments::relevant(std::string_view claim_id) const {
    static const std::set<std::string> none;
    auto it = by_claim_.find(claim_id);
    return it == by_claim_.end() ? none : it->second;
}

bool RelevanceJudgments::has_judgments(std::string_view claim_id) const {
    auto it = by_claim_.find(claim_id);
    return it != by_claim_.end() && !it->second.empty();
}

Dataset::Dataset(std::vector<Claim> claims, std::vector<FactCheck> fact_checks)
    : claims_(std::move(claims)), fact_checks_(std::move(fact_checks)) {
    for (std::size_t i = 0; i < claims_.size(); ++i) {
        if (claims_[i].id.empty() || is_blank(claims_[i].text)) {
            throw DataError("claim " + claims_[i].id + " has an empty id or blank text");
        }
        if (!claim_index_.emplace(claims_[i].id, i).second) {
            throw DataError("duplicate claim id " + claims_[i].id);
        }
    }
    for (std::size_t i = 0; i < fact_checks_.size(); ++i) {
        if (fact_checks_[i].id.empty() || fact_checks_[i].paragraphs.empty()) {
            throw DataError("fact-check " + fact_checks_[i].id + " has an empty id or no paragraphs");
        }
        if (!fact_check_index_.emplace(fact_checks_[i].id, i).second) {
            throw DataError("duplicate fact-check id " + fact_checks_[i].id);
        }
    }
}

const Claim* Dataset::find_claim(std::string_view id) const {
    auto it = claim_index_.find(std::string(id));
    return it == claim_index_.end() ? nullptr : &claims_[it->second];
}

const FactCheck* Dataset::find_fact_check(std::string_view id) const {
    auto it = fact_check_index_.find(std::string(id));
    return it == fact_check_index_.end() ? nullptr : &fact_checks_[it->second];
}

const Claim& Dataset::claim(std::string_view id) const {
    if (const auto* c = find_claim(id)) {
        return *c;
    }
    throw DataError("unknown claim id " + std::string(id));
}

const FactCheck& Dataset::fact_check(std::string_view id) const {
    if (const auto* f = find_fact_check(id)) {
        return *f;
    }
    throw DataError("unknown fact-check id " + std::string(id));
}

LoadedDataset parse_dataset(std::string_view claims_jsonl, std::string_view factchecks_jsonl,
                            std::string_view qrels_tsv) {
    LoadedDataset loaded{Dataset(parse_claims(claims_jsonl), parse_fact_checks(factchecks_jsonl)), {}};
    constexpr std::string_view file = "qrels.tsv";
    for_each_line(qrels_tsv, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line)) {
            return;
        }
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos) {
            fail_at(file, line_no, "expected `claim_id<TAB>factcheck_id`");
        }
        const std::string claim_id(line.substr(0, tab));
        const std::string fact_check_id(line.substr(tab + 1));
        if (!loaded.dataset.find_claim(claim_id)) {
            fail_at(file, line_no, "dangling id " + claim_id);
        }
        if (!loaded.dataset.find_fact_check(fact_check_id)) {
            fail_at(file, line_no, "dangling id " + fact_check_id);
        }
        loaded.qrels.add(claim_id, fact_check_id);
    });
    return loaded;
}

LoadedDataset load_dataset(const std::string& claims_path, const std::string& factchecks_path,
                           const std::string& qrels_path) {
    return parse_dataset(read_file(claims_path), read_file(factchecks_path), read_file(qrels_path));
}

std::string serialize_claims(const Dataset& dataset) {
    std::string out;
    for (const auto& claim : dataset.claims()) {
        json obj = {{"id", claim.id}, {"text", claim.text}};
        if (!claim.meta.empty()) {
            obj["meta"] = claim.meta;
        }
        out += obj.dump();
        out.push_back('\n');
    }
    return out;
}

std::string serialize_fact_checks(const Dataset& dataset) {
    std::string out;
    for (const auto& fc : dataset.fact_checks()) {
        out += json{{"id", fc.id}, {"text", fc.text}}.dump();
        out.push_back('\n');
    }
    return out;
}

std::string serialize_qrels(const RelevanceJudgments& qrels) {
    std::string out;
    for (const auto& [claim_id, ids] : qrels.entries()) {
        for (const auto& fc : ids) {
            out += claim_id + '\t' + fc + '\n';
        }
    }
    return out;
}

std::vector<std::string> evaluable_claims(const Dataset& dataset, const RelevanceJudgments& qrels) {
    std::vector<std::string> ids;
    for (const auto& claim : dataset.claims()) {
        if (qrels.has_judgments(claim.id)) {
            ids.push_back(claim.id);
        }
    }
    return ids;
}

DatasetSplit split_dataset(std::span<const std::string> claim_ids, std::array<double, 3> ratios,
                           std::uint64_t seed) {
    if (claim_ids.empty()) {
        throw std::invalid_argument("split_dataset: empty claim list");
    }
    if (std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0.0; }) ||
        std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split_dataset: ratios must be non-negative and sum to 1");
    }
    std::vector<std::string> ids(claim_ids.begin(), claim_ids.end());
    std::mt19937_64 rng(seed);
    seeded_shuffle(ids, rng);

    const auto n = static_cast<double>(ids.size());
    // A tiny epsilon keeps exact products such as 10 * 0.1 from flooring to 0.
    const auto dev = static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9));
    const auto test = static_cast<std::size_t>(std::floor(n * ratios[2] + 1e-9));
    const std::size_t train = ids.size() - dev - test;

    DatasetSplit split;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(train));
    split.dev.assign(ids.begin() + static_cast<std::ptrdiff_t>(train),
                     ids.begin() + static_cast<std::ptrdiff_t>(train + dev));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(train + dev), ids.end());
    return split;
}

DatasetSplit parse_split(std::string_view tsv, const Dataset& dataset) {
    constexpr std::string_view file = "split.tsv";
    DatasetSplit split;
    std::set<std::string, std::less<>> seen;
    for_each_line(tsv, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line)) {
            return;
        }
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            fail_at(file, line_no, "expected `claim_id<TAB>train|dev|test`");
        }
        std::string id(line.substr(0, tab));
        const auto part = trim(line.substr(tab + 1));
        if (!dataset.find_claim(id)) {
            fail_at(file, line_no, "dangling id " + id);
        }
        if (!seen.insert(id).second) {
            fail_at(file, line_no, "claim " + id + " assigned twice");
        }
        if (part == "train") {
            split.train.push_back(std::move(id));
        } else if (part == "dev") {
            split.dev.push_back(std::move(id));
        } else if (part == "test") {
            split.test.push_back(std::move(id));
        } else {
            fail_at(file, line_no, "unknown split `" + std::string(part) + "`");
        }
    });
    return split;
}

DatasetSplit load_split(const std::string& path, const Dataset& dataset) {
    return parse_split(read_file(path), dataset);
}

std::string serialize_split(const DatasetSplit& split) {
    std::string out;
    for (const auto& id : split.train) {
        out += id + "\ttrain\n";
    }
    for (const auto& id : split.dev) {
        out += id + "\tdev\n";
    }
    for (const auto& id : split.test) {
        out += id + "\ttest\n";
    }
    return out;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
    std::vector<std::string> paragraphs;
    std::string current;
    auto flush = [&] {
        const auto trimmed = trim(current);
        if (!trimmed.empty()) {
            paragraphs.emplace_back(trimmed);
        }
        current.clear();
    };
    for_each_line(text, [&](std::string_view line, std::size_t) {
        if (is_blank(line)) {
            flush();
            return;
        }
        if (!current.empty()) {
            current.push_back('\n');
        }
        current.append(line);
    });
    flush();
    return paragraphs;
}

}  // namespace claimbench::corpus
