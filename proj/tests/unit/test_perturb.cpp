#include "claimbench/common.hpp"
#include "claimbench/mock_transport.hpp"
#include "claimbench/perturb.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace claimbench;
using namespace claimbench::perturb;

namespace {

struct World {
    corpus::Dataset dataset;
    corpus::RelevanceJudgments qrels;
    textops::CaseLexicon lexicon;
    std::shared_ptr<provider::MockTransport> mock = std::make_shared<provider::MockTransport>();
    std::unique_ptr<provider::ProviderClient> client;

    World() {
        dataset = corpus::Dataset(
            {{"c1", "The WHO says garlic cures COVID-19 in Nigeria", {}},
             {"c2", "Bill Gates put microchips in vaccines", {}},
             {"c3", "an unjudged claim about nothing", {}}},
            {corpus::make_fact_check("f1", "Garlic does not cure COVID-19, the WHO says."),
             corpus::make_fact_check("f2", "There are no microchips in vaccines.")});
        qrels.add("c1", "f1");
        qrels.add("c2", "f2");
        std::vector<std::string> texts;
        for (const auto& c : dataset.claims()) {
            texts.push_back(c.text);
        }
        lexicon = textops::build_case_lexicon(texts);
        provider::ProviderConfig config;
        config.parallelism = 4;
        client = std::make_unique<provider::ProviderClient>(config, mock);
        client->set_sleeper([](std::chrono::milliseconds) {});
    }

    Perturber perturber() { return Perturber(*client, PerturberOptions{"mock-chat", 5, 0.9, 7, 2}); }
};

const PerturbationSet& set_for(const PerturbationRun& run, Variant v) {
    for (const auto& s : run.sets) {
        if (s.variant() == v) {
            return s;
        }
    }
    throw std::out_of_range("no set");
}

}  // namespace

TEST(Variants, NamesRoundTrip) {
    EXPECT_EQ(all_variants().size(), kVariantCount);
    for (const auto v : all_variants()) {
        EXPECT_EQ(parse_variant_tag(variant_tag(v)), v);
        EXPECT_EQ(parse_variant(family_of(v), variant_name(v)), v);
    }
    EXPECT_EQ(variant_tag(Variant::typos_least), "typos.least");
    EXPECT_EQ(variant_tag(Variant::entity_at_least_one), "entity_replacement.at_least_one");
    EXPECT_THROW(parse_variant(Family::typos, "shallow"), std::invalid_argument);
    EXPECT_THROW(parse_family("spelling"), std::invalid_argument);
    EXPECT_EQ(variants_of(Family::dialect).size(), 4u);
    EXPECT_TRUE(is_distance_budgeted(Family::typos));
    EXPECT_TRUE(is_distance_budgeted(Family::llm_rewrite));
    EXPECT_FALSE(is_distance_budgeted(Family::negation));
}

TEST(PerturbationSetTest, RejectsInvalidEntries) {
    PerturbationSet set(Variant::typos_least, {"p@v1", "m", 1});
    set.add({"c1", Variant::typos_least, "x", true, std::nullopt, std::nullopt});
    EXPECT_THROW(set.add({"c1", Variant::typos_least, "y", true, std::nullopt, std::nullopt}),
                 std::invalid_argument);
    EXPECT_THROW(set.add({"c2", Variant::typos_most, "y", true, std::nullopt, std::nullopt}),
                 std::invalid_argument);
    EXPECT_THROW(set.add({"c3", Variant::typos_least, "y", false, std::nullopt, std::nullopt}),
                 std::invalid_argument);
    ASSERT_NE(set.find("c1"), nullptr);
    EXPECT_EQ(set.find("c2"), nullptr);
}

TEST(ParseCandidates, AcceptsCommonFormats) {
    const std::string response =
        "Sure! Here you go:\n"
        "Rewritten Tweet 1: \"Garlic cures covid\"\n"
        "- **Rewritten Tweet 2:** Garlic curez covid\n"
        "3. Garlik cures covid\n"
        "4) [rewritten tweet]\n"
        "Rewritten Tweet 5: Garlic curez covid\n"
        "Rewritten Tweet 6:   \n"
        "Rewritten Tweet 7: extra\n";
    EXPECT_EQ(parse_candidates(response, 10),
              (std::vector<std::string>{"Garlic cures covid", "Garlic curez covid", "Garlik cures covid", "extra"}));
    EXPECT_EQ(parse_candidates(response, 2).size(), 2u);
    EXPECT_TRUE(parse_candidates("I cannot help with that.", 5).empty());
}

TEST(ParseLabels, StrictLengthAndValues) {
    EXPECT_EQ(parse_labels("ok {\"labels\": [1, 0, true]} done", 3), (std::vector<int>{1, 0, 1}));
    EXPECT_FALSE(parse_labels("{\"labels\": [1, 0]}", 3));
    EXPECT_FALSE(parse_labels("{\"labels\": [1, 2, 0]}", 3));
    EXPECT_FALSE(parse_labels("{\"label\": [1]}", 1));
    EXPECT_FALSE(parse_labels("no json here", 1));
}

TEST(SelectBudget, LeastAndMostByDistanceTiesToEarliest) {
    std::vector<PerturbedClaim> valid;
    for (std::size_t d : {3u, 1u, 5u, 1u, 5u}) {
        valid.push_back({"c", Variant::typos_least, "t" + std::to_string(valid.size()), true, d, 0.1});
    }
    const auto chosen = select_budget(valid, Family::typos);
    EXPECT_EQ(chosen.at(Variant::typos_least).text, "t1");
    EXPECT_EQ(chosen.at(Variant::typos_most).text, "t2");
    EXPECT_EQ(chosen.at(Variant::typos_most).variant, Variant::typos_most);
}

TEST(SelectBudget, LeastNeverExceedsMostProperty) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<PerturbedClaim> valid;
        const auto n = 1 + uniform_below(rng, 6);
        for (std::uint64_t i = 0; i < n; ++i) {
            valid.push_back({"c", Variant::llm_rewrite_least, std::to_string(i), true, uniform_below(rng, 20), 0.0});
        }
        const auto chosen = select_budget(valid, Family::llm_rewrite);
        EXPECT_LE(chosen.at(Variant::llm_rewrite_least).edit_distance.value(),
                  chosen.at(Variant::llm_rewrite_most).edit_distance.value());
    }
}

TEST(SelectBudget, EarliestPerVariantForOtherFamilies) {
    std::vector<PerturbedClaim> valid = {{"c", Variant::negation_double, "a", true, 1, 0.1},
                                         {"c", Variant::negation_shallow, "b", true, 1, 0.1},
                                         {"c", Variant::negation_double, "c", true, 1, 0.1}};
    const auto chosen = select_budget(valid, Family::negation);
    EXPECT_EQ(chosen.at(Variant::negation_double).text, "a");
    EXPECT_EQ(chosen.at(Variant::negation_shallow).text, "b");
    EXPECT_THROW(select_budget(valid, Family::entity_replacement), std::invalid_argument);
    EXPECT_TRUE(select_budget({}, Family::typos).empty());
}

TEST(Casing, UpperHasZeroWordDistance) {
    World w;
    const auto pair = perturb_casing(w.dataset.claim("c1"), w.lexicon);
    EXPECT_EQ(pair.upper, "THE WHO SAYS GARLIC CURES COVID-19 IN NIGERIA");
    const auto orig = textops::tokenize_words(w.dataset.claim("c1").text);
    EXPECT_EQ(textops::levenshtein(orig, textops::tokenize_words(pair.upper)), 0u);
    EXPECT_EQ(textops::levenshtein(orig, textops::tokenize_words(pair.truecase)), 0u);
}

TEST(Perturber, GenerateRepairsUnparseableOutput) {
    World w;
    int calls = 0;
    w.mock->set_handler([&](std::string_view, const std::string& body) -> std::optional<provider::HttpResponse> {
        ++calls;
        if (body.find("could not be parsed") == std::string::npos) {
            return provider::HttpResponse{200, R"({"choices":[{"message":{"content":"nope"}}]})"};
        }
        return std::nullopt;
    });
    const auto p = w.perturber();
    const auto result = p.generate_candidates(w.dataset.claim("c1"), w.dataset.fact_check("f1"), Family::typos, 5);
    EXPECT_FALSE(result.failed);
    EXPECT_EQ(result.candidates.size(), 5u);
    EXPECT_EQ(calls, 2);
    EXPECT_EQ(result.prompt_tag, "perturb_typos@v1");
}

TEST(Perturber, GenerateRejectsBadArguments) {
    World w;
    const auto p = w.perturber();
    const auto& c = w.dataset.claim("c1");
    const auto& f = w.dataset.fact_check("f1");
    EXPECT_THROW(p.generate_candidates(c, f, Family::typos, 0), std::invalid_argument);
    EXPECT_THROW(p.generate_candidates(c, f, Family::casing, 5), std::invalid_argument);
    EXPECT_THROW(p.generate_candidates(c, f, Family::negation, 5, Variant::typos_least), std::invalid_argument);
}

TEST(Perturber, VerifierFallsBackToZerosAfterRetry) {
    World w;
    int verifier_calls = 0;
    w.mock->set_handler([&](std::string_view, const std::string& body) -> std::optional<provider::HttpResponse> {
        if (body.find("labels") == std::string::npos) {
            return std::nullopt;
        }
        ++verifier_calls;
        return provider::HttpResponse{200, R"({"choices":[{"message":{"content":"{\"labels\": [1]}"}}]})"};
    });
    const auto p = w.perturber();
    const std::vector<std::string> candidates = {"a", "b", "c"};
    EXPECT_EQ(p.verify_candidates(w.dataset.claim("c1"), w.dataset.fact_check("f1"), Family::typos, candidates),
              (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(verifier_calls, 2);
}

TEST(PerturbDataset, MockRunProducesValidDeterministicSets) {
    World a;
    World b;
    const std::vector<std::string> ids = {"c1", "c2", "c3"};
    const auto families = all_families();
    const auto run_a = perturb_dataset(ids, a.qrels, a.dataset, families, a.perturber(), a.lexicon);
    const auto run_b = perturb_dataset(ids, b.qrels, b.dataset, families, b.perturber(), b.lexicon);
    EXPECT_EQ(serialize_perturbations(run_a.sets), serialize_perturbations(run_b.sets));
    ASSERT_EQ(run_a.sets.size(), kVariantCount);
    for (std::size_t i = 0; i < run_a.sets.size(); ++i) {
        EXPECT_EQ(run_a.sets[i].variant(), all_variants()[i]);
        EXPECT_EQ(run_a.counts[i].attempted, 2u);  // c3 has no judgments
        EXPECT_EQ(run_a.counts[i].valid, run_a.sets[i].size());
        for (const auto& e : run_a.sets[i].entries()) {
            EXPECT_TRUE(e.valid);
            EXPECT_NE(e.claim_id, "c3");
            EXPECT_TRUE(e.edit_distance.has_value());
        }
    }
    const auto& upper = set_for(run_a, Variant::casing_upper);
    EXPECT_EQ(upper.provenance().prompt_version, "rule:uppercase");
    EXPECT_EQ(upper.provenance().model, "none");
    EXPECT_EQ(set_for(run_a, Variant::typos_most).provenance().prompt_version,
              "perturb_typos@v1+verify_typos@v1");
    for (const auto& least : set_for(run_a, Variant::typos_least).entries()) {
        const auto* most = set_for(run_a, Variant::typos_most).find(least.claim_id);
        ASSERT_NE(most, nullptr);
        EXPECT_LE(*least.edit_distance, *most->edit_distance);
    }
}

TEST(PerturbDataset, VerifierRejectionBecomesFailureNotError) {
    World w;
    w.mock->set_handler([&](std::string_view, const std::string& body) -> std::optional<provider::HttpResponse> {
        if (body.find("labels") == std::string::npos) {
            return std::nullopt;
        }
        return provider::HttpResponse{200, R"({"choices":[{"message":{"content":"garbage"}}]})"};
    });
    const std::vector<std::string> ids = {"c1"};
    const std::vector<Family> families = {Family::typos, Family::casing};
    const auto run = perturb_dataset(ids, w.qrels, w.dataset, families, w.perturber(), w.lexicon);
    EXPECT_EQ(set_for(run, Variant::typos_least).size(), 0u);
    EXPECT_EQ(set_for(run, Variant::casing_upper).size(), 1u);
    ASSERT_EQ(run.failures.size(), 1u);
    EXPECT_EQ(run.failures[0], (PerturbationFailure{"c1", "typos", "no_valid_candidate"}));
}

TEST(PerturbDataset, ProviderErrorsAreCollected) {
    World w;
    w.mock->set_handler([](std::string_view, const std::string&) -> std::optional<provider::HttpResponse> {
        return provider::HttpResponse{400, "{}"};
    });
    const std::vector<std::string> ids = {"c1", "c2"};
    const std::vector<Family> families = {Family::negation};
    const auto run = perturb_dataset(ids, w.qrels, w.dataset, families, w.perturber(), w.lexicon);
    ASSERT_EQ(run.failures.size(), 4u);  // two budgets per claim
    for (const auto& f : run.failures) {
        EXPECT_EQ(f.reason.rfind("provider_error: ", 0), 0u);
    }
}

TEST(Overlap, UpperRowMatchesExpectations) {
    PerturbationSet set(Variant::casing_upper, {"rule:uppercase", "none", 0});
    set.add({"c1", Variant::casing_upper, "GARLIC CURES", true, std::nullopt, std::nullopt});
    set.add({"c9", Variant::casing_upper, "ORPHAN", true, std::nullopt, std::nullopt});
    const std::map<std::string, std::string, std::less<>> originals = {{"c1", "Garlic cures"}};
    const auto stats = overlap_statistics(set, originals);
    EXPECT_EQ(stats.pairs, 1u);
    EXPECT_DOUBLE_EQ(stats.levenshtein_word, 0.0);
    EXPECT_DOUBLE_EQ(stats.levenshtein_char, 10.0 / 12.0);
    EXPECT_DOUBLE_EQ(stats.rouge1, 100.0);
}

TEST(Serialization, RoundTripAndErrors) {
    PerturbationSet a(Variant::typos_least, {"perturb_typos@v1+verify_typos@v1", "mock-chat", 9});
    PerturbedClaim p{"c1", Variant::typos_least, "Garlik cures", true, std::nullopt, std::nullopt};
    annotate_distance(p, "Garlic cures");
    EXPECT_EQ(p.edit_distance, 1u);
    EXPECT_DOUBLE_EQ(*p.normalized_distance, 1.0 / 12.0);
    a.add(p);
    PerturbationSet b(Variant::casing_upper, {"rule:uppercase", "none", 9});
    b.add({"c2", Variant::casing_upper, "X\tY", true, std::nullopt, std::nullopt});
    const std::vector<PerturbationSet> sets = {b, a};
    const auto parsed = parse_perturbations(serialize_perturbations(sets));
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0], b);
    EXPECT_EQ(parsed[1].provenance(), a.provenance());
    EXPECT_EQ(parsed[1].entries()[0].edit_distance, 1u);
    EXPECT_NEAR(*parsed[1].entries()[0].normalized_distance, 1.0 / 12.0, 1e-6);  // stored at fixed precision
    EXPECT_EQ(serialize_perturbations(parsed), serialize_perturbations(sets));
    try {
        parse_perturbations(serialize_perturbations(sets) + "{oops\n");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("perturbations.jsonl:3:"), std::string::npos);
    }
}

TEST(Serialization, CsvHeaders) {
    const std::vector<VariantCount> counts = {{Variant::typos_least, 4, 3}};
    EXPECT_EQ(render_counts_csv(counts), "variant,attempted,valid\ntypos.least,4,3\n");
    EXPECT_EQ(render_overlap_csv({}).substr(0, 40), "variant,pairs,r1,r2,rl,lev_word,lev_char");
}
