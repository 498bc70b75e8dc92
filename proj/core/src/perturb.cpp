#include "claimbench/perturb.hpp"

#include "claimbench/common.hpp"
#include "claimbench/prompts.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <regex>
#include <set>
#include <stdexcept>

namespace claimbench::perturb {

using nlohmann::json;

namespace {

struct VariantInfo {
    Variant variant;
    Family family;
    std::string_view name;
};

constexpr std::array<VariantInfo, kVariantCount> kVariants = {{
    {Variant::casing_truecase, Family::casing, "truecase"},
    {Variant::casing_upper, Family::casing, "upper"},
    {Variant::typos_least, Family::typos, "least"},
    {Variant::typos_most, Family::typos, "most"},
    {Variant::negation_shallow, Family::negation, "shallow"},
    {Variant::negation_double, Family::negation, "double"},
    {Variant::entity_at_least_one, Family::entity_replacement, "at_least_one"},
    {Variant::entity_all, Family::entity_replacement, "all"},
    {Variant::llm_rewrite_least, Family::llm_rewrite, "least"},
    {Variant::llm_rewrite_most, Family::llm_rewrite, "most"},
    {Variant::dialect_aae, Family::dialect, "aae"},
    {Variant::dialect_jamaican, Family::dialect, "jamaican"},
    {Variant::dialect_pidgin, Family::dialect, "pidgin"},
    {Variant::dialect_singlish, Family::dialect, "singlish"},
}};

constexpr std::array<std::pair<Family, std::string_view>, 6> kFamilies = {{
    {Family::casing, "casing"},
    {Family::typos, "typos"},
    {Family::negation, "negation"},
    {Family::entity_replacement, "entity_replacement"},
    {Family::llm_rewrite, "llm_rewrite"},
    {Family::dialect, "dialect"},
}};

const VariantInfo& info(Variant v) { return kVariants[static_cast<std::size_t>(v)]; }

std::string_view dialect_label(Variant v) {
    switch (v) {
        case Variant::dialect_aae: return "African American Vernacular English";
        case Variant::dialect_jamaican: return "Jamaican Patois";
        case Variant::dialect_pidgin: return "Nigerian Pidgin English";
        case Variant::dialect_singlish: return "Singlish (Singapore English)";
        default: return "";
    }
}

/// Prompt used to generate candidates for a family (and budget, where the
/// family has one prompt per budget).
std::string perturb_prompt_id(Family family, std::optional<Variant> variant) {
    switch (family) {
        case Family::typos: return "perturb_typos";
        case Family::llm_rewrite: return "perturb_llm_rewrite";
        case Family::dialect: return "perturb_dialect";
        case Family::negation:
            return variant == Variant::negation_double ? "perturb_negation_double" : "perturb_negation_shallow";
        case Family::entity_replacement:
            return variant == Variant::entity_all ? "perturb_entity_all" : "perturb_entity_at_least_one";
        case Family::casing: break;
    }
    throw std::invalid_argument("casing perturbations are rule-based and have no prompt");
}

std::string verify_prompt_id(Family family) {
    switch (family) {
        case Family::typos: return "verify_typos";
        case Family::negation: return "verify_negation";
        case Family::entity_replacement: return "verify_entity";
        case Family::llm_rewrite: return "verify_llm_rewrite";
        case Family::dialect: return "verify_dialect";
        case Family::casing: break;
    }
    throw std::invalid_argument("casing perturbations are not verified");
}

/// A single prompt and the variants its candidates can fill.
struct GenerationUnit {
    std::optional<Variant> prompt_variant;
    std::vector<Variant> variants;
};

std::vector<GenerationUnit> units_for(Family family) {
    switch (family) {
        case Family::typos: return {{std::nullopt, {Variant::typos_least, Variant::typos_most}}};
        case Family::llm_rewrite: return {{std::nullopt, {Variant::llm_rewrite_least, Variant::llm_rewrite_most}}};
        case Family::casing: return {};
        default: break;
    }
    std::vector<GenerationUnit> units;
    for (auto v : variants_of(family)) {
        units.push_back({v, {v}});
    }
    return units;
}

std::string strip_quotes(std::string s) {
    auto trim = [](std::string& t) {
        const auto b = t.find_first_not_of(" \t\r\n");
        const auto e = t.find_last_not_of(" \t\r\n");
        t = b == std::string::npos ? std::string{} : t.substr(b, e - b + 1);
    };
    trim(s);
    static const std::array<std::pair<std::string_view, std::string_view>, 3> quotes = {{
        {"\"", "\""}, {"“", "”"}, {"**", "**"}}};
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& [open, close] : quotes) {
            if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
                s = s.substr(open.size(), s.size() - open.size() - close.size());
                trim(s);
                changed = true;
            }
        }
    }
    return s;
}

std::string render_rewrites(std::span<const std::string> candidates) {
    std::string out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out += "\nRewritten Tweet " + std::to_string(i + 1) + ": " + candidates[i];
    }
    return out;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

}  // namespace

Family family_of(Variant v) noexcept { return info(v).family; }

std::string_view family_name(Family f) noexcept { return kFamilies[static_cast<std::size_t>(f)].second; }

std::string_view variant_name(Variant v) noexcept { return info(v).name; }

std::string variant_tag(Variant v) {
    return std::string(family_name(family_of(v))) + "." + std::string(variant_name(v));
}

Family parse_family(std::string_view name) {
    for (const auto& [f, n] : kFamilies) {
        if (n == name) {
            return f;
        }
    }
    throw std::invalid_argument("unknown perturbation family: " + std::string(name));
}

Variant parse_variant(Family family, std::string_view name) {
    for (const auto& vi : kVariants) {
        if (vi.family == family && vi.name == name) {
            return vi.variant;
        }
    }
    throw std::invalid_argument("variant " + std::string(name) + " is not legal for family " +
                                std::string(family_name(family)));
}

Variant parse_variant_tag(std::string_view tag) {
    const auto dot = tag.find('.');
    if (dot == std::string_view::npos) {
        throw std::invalid_argument("variant tag must be <family>.<variant>: " + std::string(tag));
    }
    return parse_variant(parse_family(tag.substr(0, dot)), tag.substr(dot + 1));
}

std::vector<Variant> variants_of(Family f) {
    std::vector<Variant> out;
    for (const auto& vi : kVariants) {
        if (vi.family == f) {
            out.push_back(vi.variant);
        }
    }
    return out;
}

std::vector<Variant> all_variants() {
    std::vector<Variant> out;
    for (const auto& vi : kVariants) {
        out.push_back(vi.variant);
    }
    return out;
}

std::vector<Family> all_families() {
    std::vector<Family> out;
    for (const auto& [f, n] : kFamilies) {
        out.push_back(f);
    }
    return out;
}

bool is_distance_budgeted(Family f) noexcept { return f == Family::typos || f == Family::llm_rewrite; }

PerturbationSet::PerturbationSet(Variant variant, Provenance provenance)
    : variant_(variant), provenance_(std::move(provenance)) {}

void PerturbationSet::add(PerturbedClaim entry) {
    if (!entry.valid) {
        throw std::invalid_argument("perturbation set only holds valid entries (claim " + entry.claim_id + ")");
    }
    if (entry.variant != variant_) {
        throw std::invalid_argument("entry variant " + variant_tag(entry.variant) + " does not match set " +
                                    variant_tag(variant_));
    }
    if (find(entry.claim_id)) {
        throw std::invalid_argument("duplicate perturbation for claim " + entry.claim_id + " in " +
                                    variant_tag(variant_));
    }
    entries_.push_back(std::move(entry));
}

const PerturbedClaim* PerturbationSet::find(std::string_view claim_id) const {
    for (const auto& e : entries_) {
        if (e.claim_id == claim_id) {
            return &e;
        }
    }
    return nullptr;
}

void annotate_distance(PerturbedClaim& perturbed, std::string_view original) {
    const auto a = textops::tokenize_chars(original);
    const auto b = textops::tokenize_chars(perturbed.text);
    perturbed.edit_distance = textops::levenshtein(a, b);
    perturbed.normalized_distance = textops::normalized_levenshtein(a, b);
}

std::vector<std::string> parse_candidates(std::string_view response, std::size_t n) {
    static const std::regex enumerated(
        R"(^\s*(?:[-*•]\s*)?(?:\*\*)?(?:rewritten\s+tweet\s*)?#?(\d+)\s*(?:\*\*)?\s*[:.)\-]\s*(?:\*\*)?\s*(.*)$)",
        std::regex::icase | std::regex::ECMAScript);
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::size_t pos = 0;
    while (pos < response.size() && out.size() < n) {
        auto end = response.find('\n', pos);
        if (end == std::string_view::npos) {
            end = response.size();
        }
        const std::string line(response.substr(pos, end - pos));
        pos = end + 1;
        std::smatch m;
        if (!std::regex_match(line, m, enumerated)) {
            continue;
        }
        auto text = strip_quotes(m[2].str());
        if (text.empty() || (text.front() == '[' && text.back() == ']')) {
            continue;
        }
        if (seen.insert(text).second) {
            out.push_back(std::move(text));
        }
    }
    return out;
}

std::optional<std::vector<int>> parse_labels(std::string_view response, std::size_t expected) {
    const auto open = response.find('{');
    const auto close = response.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        return std::nullopt;
    }
    json obj;
    try {
        obj = json::parse(response.substr(open, close - open + 1));
    } catch (const json::parse_error&) {
        return std::nullopt;
    }
    if (!obj.is_object() || !obj.contains("labels") || !obj["labels"].is_array()) {
        return std::nullopt;
    }
    std::vector<int> labels;
    for (const auto& v : obj["labels"]) {
        if (v.is_boolean()) {
            labels.push_back(v.get<bool>() ? 1 : 0);
        } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
            labels.push_back(v.get<int>());
        } else {
            return std::nullopt;
        }
    }
    if (labels.size() != expected) {
        return std::nullopt;
    }
    return labels;
}

Perturber::Perturber(provider::ProviderClient& client, PerturberOptions options)
    : client_(client), options_(std::move(options)) {}

GenerationResult Perturber::generate_candidates(const corpus::Claim& claim, const corpus::FactCheck& fact_check,
                                                Family family, std::size_t n, std::optional<Variant> variant) const {
    if (n == 0) {
        throw std::invalid_argument("generate_candidates: n must be at least 1");
    }
    if (variant && family_of(*variant) != family) {
        throw std::invalid_argument("variant " + variant_tag(*variant) + " is not legal for family " +
                                    std::string(family_name(family)));
    }
    const auto& prompt = prompts::get(perturb_prompt_id(family, variant));
    std::map<std::string, std::string, std::less<>> values = {
        {"claim", claim.text}, {"fact_check", fact_check.text}, {"n", std::to_string(n)}};
    if (family == Family::dialect) {
        values["dialect"] = std::string(dialect_label(variant.value_or(Variant::dialect_aae)));
    }
    provider::ChatRequest request{options_.model, options_.generation_temperature,
                                  {{provider::Role::user, prompt.render(values)}}, std::nullopt};
    GenerationResult result;
    result.prompt_tag = prompt.tag();
    const auto first = client_.chat(request);
    result.candidates = parse_candidates(first.text, n);
    if (!result.candidates.empty()) {
        return result;
    }
    request.messages.push_back(
        {provider::Role::user,
         "Your previous response could not be parsed:\n" + first.text +
             "\n\nReply again with one line per rewrite, in the form \"Rewritten Tweet k: <rewritten tweet>\"."});
    result.candidates = parse_candidates(client_.chat(request).text, n);
    result.failed = result.candidates.empty();
    return result;
}

std::vector<int> Perturber::verify_candidates(const corpus::Claim& claim, const corpus::FactCheck& fact_check,
                                              Family family, std::span<const std::string> candidates) const {
    if (candidates.empty()) {
        throw std::invalid_argument("verify_candidates: no candidates");
    }
    const auto& prompt = prompts::get(verify_prompt_id(family));
    provider::ChatRequest request{
        options_.model,
        0.0,
        {{provider::Role::user, prompt.render({{"claim", claim.text},
                                               {"fact_check", fact_check.text},
                                               {"rewrites", render_rewrites(candidates)}})}},
        std::nullopt};
    const auto first = client_.chat(request);
    if (auto labels = parse_labels(first.text, candidates.size())) {
        return *labels;
    }
    request.messages.push_back(
        {provider::Role::user, "Your previous response was not usable:\n" + first.text +
                                   "\n\nRespond only with a JSON object {\"labels\": [...]} holding exactly " +
                                   std::to_string(candidates.size()) + " binary labels."});
    if (auto labels = parse_labels(client_.chat(request).text, candidates.size())) {
        return *labels;
    }
    return std::vector<int>(candidates.size(), 0);
}

std::map<Variant, PerturbedClaim> select_budget(std::span<const PerturbedClaim> valid_candidates, Family family) {
    std::map<Variant, PerturbedClaim> selected;
    if (valid_candidates.empty()) {
        return selected;
    }
    if (is_distance_budgeted(family)) {
        const auto least_variant = family == Family::typos ? Variant::typos_least : Variant::llm_rewrite_least;
        const auto most_variant = family == Family::typos ? Variant::typos_most : Variant::llm_rewrite_most;
        std::size_t least = 0, most = 0;
        for (std::size_t i = 1; i < valid_candidates.size(); ++i) {
            const auto d = valid_candidates[i].edit_distance.value();
            if (d < valid_candidates[least].edit_distance.value()) {
                least = i;
            }
            if (d > valid_candidates[most].edit_distance.value()) {
                most = i;
            }
        }
        auto pick = valid_candidates[least];
        pick.variant = least_variant;
        selected.emplace(least_variant, std::move(pick));
        pick = valid_candidates[most];
        pick.variant = most_variant;
        selected.emplace(most_variant, std::move(pick));
        return selected;
    }
    for (const auto& candidate : valid_candidates) {
        if (family_of(candidate.variant) != family) {
            throw std::invalid_argument("candidate variant does not belong to family " +
                                        std::string(family_name(family)));
        }
        selected.emplace(candidate.variant, candidate);  // keeps the earliest
    }
    return selected;
}

CasingPair perturb_casing(const corpus::Claim& claim, const textops::CaseLexicon& lexicon) {
    return CasingPair{textops::truecase(claim.text, lexicon), textops::uppercase(claim.text)};
}

PerturbationRun perturb_dataset(std::span<const std::string> claim_ids, const corpus::RelevanceJudgments& qrels,
                                const corpus::Dataset& dataset, std::span<const Family> families,
                                const Perturber& perturber, const textops::CaseLexicon& lexicon) {
    std::vector<Family> requested(families.begin(), families.end());
    std::sort(requested.begin(), requested.end());
    requested.erase(std::unique(requested.begin(), requested.end()), requested.end());

    struct ClaimOutcome {
        std::map<Variant, PerturbedClaim> selected;
        std::vector<PerturbationFailure> failures;
        bool attempted = false;
    };
    std::vector<ClaimOutcome> outcomes(claim_ids.size());

    parallel_for(claim_ids.size(), perturber.options().parallelism, [&](std::size_t i) {
        auto& outcome = outcomes[i];
        const auto& claim = dataset.claim(claim_ids[i]);
        const auto& relevant = qrels.relevant(claim.id);
        if (relevant.empty()) {
            return;
        }
        outcome.attempted = true;
        const auto& fact_check = dataset.fact_check(*relevant.begin());
        for (const auto family : requested) {
            if (family == Family::casing) {
                const auto pair = perturb_casing(claim, lexicon);
                for (auto [variant, text] : {std::pair{Variant::casing_truecase, pair.truecase},
                                             std::pair{Variant::casing_upper, pair.upper}}) {
                    PerturbedClaim p{claim.id, variant, text, true, std::nullopt, std::nullopt};
                    annotate_distance(p, claim.text);
                    outcome.selected.emplace(variant, std::move(p));
                }
                continue;
            }
            for (const auto& unit : units_for(family)) {
                const std::string scope = unit.prompt_variant ? variant_tag(*unit.prompt_variant)
                                                              : std::string(family_name(family));
                try {
                    const auto generated = perturber.generate_candidates(
                        claim, fact_check, family, perturber.options().candidates, unit.prompt_variant);
                    if (generated.failed) {
                        outcome.failures.push_back({claim.id, scope, "generation_failed"});
                        continue;
                    }
                    const auto labels = perturber.verify_candidates(claim, fact_check, family, generated.candidates);
                    std::vector<PerturbedClaim> valid;
                    for (std::size_t c = 0; c < generated.candidates.size(); ++c) {
                        if (labels[c] != 1) {
                            continue;
                        }
                        PerturbedClaim p{claim.id, unit.variants.front(), generated.candidates[c], true,
                                         std::nullopt, std::nullopt};
                        annotate_distance(p, claim.text);
                        valid.push_back(std::move(p));
                    }
                    if (valid.empty()) {
                        outcome.failures.push_back({claim.id, scope, "no_valid_candidate"});
                        continue;
                    }
                    for (auto& [variant, chosen] : select_budget(valid, family)) {
                        outcome.selected.emplace(variant, std::move(chosen));
                    }
                } catch (const ProviderError& e) {
                    outcome.failures.push_back({claim.id, scope, std::string("provider_error: ") + e.what()});
                }
            }
        }
    });

    PerturbationRun run;
    std::map<Variant, PerturbationSet> sets;
    std::map<Variant, VariantCount> counts;
    for (const auto family : requested) {
        for (const auto variant : variants_of(family)) {
            std::string prompt_version;
            if (family == Family::casing) {
                prompt_version = variant == Variant::casing_upper ? "rule:uppercase" : "rule:truecase";
            } else {
                prompt_version = prompts::get(perturb_prompt_id(family, variant)).tag() + "+" +
                                 prompts::get(verify_prompt_id(family)).tag();
            }
            const auto model = family == Family::casing ? std::string("none") : perturber.options().model;
            sets.emplace(variant, PerturbationSet(variant, {prompt_version, model, perturber.options().seed}));
            counts.emplace(variant, VariantCount{variant, 0, 0});
        }
    }
    for (auto& outcome : outcomes) {
        if (!outcome.attempted) {
            continue;
        }
        for (auto& [variant, count] : counts) {
            ++count.attempted;
        }
        for (auto& [variant, chosen] : outcome.selected) {
            sets.at(variant).add(std::move(chosen));
            ++counts.at(variant).valid;
        }
        for (auto& f : outcome.failures) {
            run.failures.push_back(std::move(f));
        }
    }
    for (auto& [variant, set] : sets) {
        run.sets.push_back(std::move(set));
        run.counts.push_back(counts.at(variant));
    }
    return run;
}

OverlapStats overlap_statistics(const PerturbationSet& set,
                                const std::map<std::string, std::string, std::less<>>& originals) {
    OverlapStats stats{set.variant()};
    for (const auto& entry : set.entries()) {
        const auto it = originals.find(entry.claim_id);
        if (it == originals.end()) {
            continue;
        }
        const auto& original = it->second;
        stats.rouge1 += textops::rouge_f1(original, entry.text, textops::RougeVariant::R1);
        stats.rouge2 += textops::rouge_f1(original, entry.text, textops::RougeVariant::R2);
        stats.rougeL += textops::rouge_f1(original, entry.text, textops::RougeVariant::RL);
        stats.levenshtein_word +=
            textops::normalized_levenshtein(textops::tokenize_words(original), textops::tokenize_words(entry.text));
        stats.levenshtein_char +=
            textops::normalized_levenshtein(textops::tokenize_chars(original), textops::tokenize_chars(entry.text));
        ++stats.pairs;
    }
    if (stats.pairs > 0) {
        const auto n = static_cast<double>(stats.pairs);
        stats.rouge1 = 100.0 * stats.rouge1 / n;
        stats.rouge2 = 100.0 * stats.rouge2 / n;
        stats.rougeL = 100.0 * stats.rougeL / n;
        stats.levenshtein_word /= n;
        stats.levenshtein_char /= n;
    }
    return stats;
}

std::string serialize_perturbations(std::span<const PerturbationSet> sets) {
    std::string out;
    for (const auto& set : sets) {
        for (const auto& e : set.entries()) {
            json obj = {{"claim_id", e.claim_id},
                        {"family", family_name(e.family())},
                        {"variant", variant_name(e.variant)},
                        {"text", e.text},
                        {"valid", e.valid},
                        {"prompt_version", set.provenance().prompt_version},
                        {"model", set.provenance().model},
                        {"seed", set.provenance().seed}};
            if (e.edit_distance) {
                obj["edit_distance"] = *e.edit_distance;
            }
            if (e.normalized_distance) {
                // Fixed precision keeps the file byte-stable across platforms.
                obj["normalized_distance"] = std::stod(format_double(*e.normalized_distance));
            }
            out += obj.dump();
            out.push_back('\n');
        }
    }
    return out;
}

std::vector<PerturbationSet> parse_perturbations(std::string_view jsonl) {
    std::map<Variant, PerturbationSet> sets;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) {
            end = jsonl.size();
        }
        const auto line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        try {
            const auto obj = json::parse(line);
            const auto family = parse_family(obj.at("family").get<std::string>());
            PerturbedClaim e;
            e.claim_id = obj.at("claim_id").get<std::string>();
            e.variant = parse_variant(family, obj.at("variant").get<std::string>());
            e.text = obj.at("text").get<std::string>();
            e.valid = obj.at("valid").get<bool>();
            if (obj.contains("edit_distance")) {
                e.edit_distance = obj["edit_distance"].get<std::size_t>();
            }
            if (obj.contains("normalized_distance")) {
                e.normalized_distance = obj["normalized_distance"].get<double>();
            }
            Provenance prov{obj.at("prompt_version").get<std::string>(), obj.at("model").get<std::string>(),
                            obj.value("seed", std::uint64_t{0})};
            auto [it, inserted] = sets.try_emplace(e.variant, e.variant, prov);
            it->second.add(std::move(e));
        } catch (const std::exception& ex) {
            throw DataError("perturbations.jsonl:" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    std::vector<PerturbationSet> out;
    for (auto& [variant, set] : sets) {
        out.push_back(std::move(set));
    }
    return out;
}

std::string render_counts_csv(std::span<const VariantCount> counts) {
    std::string out = "variant,attempted,valid\n";
    for (const auto& c : counts) {
        out += variant_tag(c.variant) + "," + std::to_string(c.attempted) + "," + std::to_string(c.valid) + "\n";
    }
    return out;
}

std::string render_overlap_csv(std::span<const OverlapStats> stats) {
    std::string out = "variant,pairs,r1,r2,rl,lev_word,lev_char\n";
    for (const auto& s : stats) {
        out += variant_tag(s.variant) + "," + std::to_string(s.pairs) + "," + format_double(s.rouge1) + "," +
               format_double(s.rouge2) + "," + format_double(s.rougeL) + "," + format_double(s.levenshtein_word) +
               "," + format_double(s.levenshtein_char) + "\n";
    }
    return out;
}

}  // namespace claimbench::perturb
