#include "claimbench/common.hpp"
#include "claimbench/mitigate.hpp"
#include "claimbench/mock_transport.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <random>

using namespace claimbench;
using namespace claimbench::mitigate;
using perturb::PerturbationSet;
using perturb::Variant;

namespace {

std::unique_ptr<provider::ProviderClient> mock_client(std::shared_ptr<provider::MockTransport> mock) {
    auto client = std::make_unique<provider::ProviderClient>(provider::ProviderConfig{}, std::move(mock));
    client->set_sleeper([](std::chrono::milliseconds) {});
    return client;
}

provider::HttpResponse chat_reply(const std::string& text) {
    return {200, nlohmann::json{{"choices", {{{"message", {{"content", text}}}}}}}.dump()};
}

PerturbationSet make_set(Variant v, std::vector<std::pair<std::string, std::string>> entries) {
    PerturbationSet set(v, {"p", "m", 0});
    for (auto& [id, text] : entries) {
        set.add({id, v, text, true, std::nullopt, std::nullopt});
    }
    return set;
}

}  // namespace

TEST(ParseNormalized, LastMarkerWins) {
    EXPECT_EQ(parse_normalized("Normalised Claim: \"Garlic cures covid\""), "Garlic cures covid");
    EXPECT_EQ(parse_normalized("Example\nNormalised Claim: a\nNormalized Claim: 'b'\n"), "b");
    EXPECT_EQ(parse_normalized("Normalized Claim: c\nNormalised Claim: d"), "d");
    EXPECT_FALSE(parse_normalized("Normalised Claim: \"\""));
    EXPECT_FALSE(parse_normalized("Normalised Claim: [normalized claim]"));
    EXPECT_FALSE(parse_normalized("nothing here"));
}

TEST(Refusal, Cues) {
    EXPECT_TRUE(looks_like_refusal("I'm sorry, but I can't help with that."));
    EXPECT_TRUE(looks_like_refusal("I am unable to comply."));
    EXPECT_FALSE(looks_like_refusal("Here is some text."));
}

TEST(Normalize, FlagsEachOutcome) {
    auto mock = std::make_shared<provider::MockTransport>();
    auto client = mock_client(mock);
    const auto ok = normalize_claim("Y'all, garlic be curing covid", *client, "mock-chat");
    EXPECT_EQ(ok.flag, NormalizationFlag::normalized);
    EXPECT_EQ(ok.prompt_tag, "normalize_claim@v1");
    EXPECT_NE(ok.text, "Y'all, garlic be curing covid");

    const auto same = normalize_claim("Garlic cures covid", *client, "mock-chat");
    EXPECT_EQ(same.flag, NormalizationFlag::unchanged);
    EXPECT_EQ(same.text, "Garlic cures covid");

    mock->set_handler([](std::string_view, const std::string& body) -> std::optional<provider::HttpResponse> {
        if (body.find("refuse me") != std::string::npos) {
            return chat_reply("I'm sorry, I can't help with that.");
        }
        return chat_reply("Sure thing!");
    });
    const auto refused = normalize_claim("refuse me", *client, "mock-chat");
    EXPECT_EQ(refused, (NormalizationResult{"refuse me", NormalizationFlag::refused, "normalize_claim@v1"}));
    const auto failed = normalize_claim("other", *client, "mock-chat");
    EXPECT_EQ(failed.flag, NormalizationFlag::parse_failed);
    EXPECT_EQ(failed.text, "other");
    EXPECT_EQ(flag_name(NormalizationFlag::parse_failed), "parse_failed");
}

TEST(Normalize, BatchPreservesOrder) {
    auto client = mock_client(std::make_shared<provider::MockTransport>());
    const std::vector<std::string> texts = {"Breaking: a b", "Reports say c d", "e f"};
    const auto out = normalize_claims(texts, *client, "mock-chat", 3);
    ASSERT_EQ(out.size(), 3u);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        EXPECT_EQ(out[i], normalize_claim(texts[i], *client, "mock-chat"));
    }
}

TEST(HardNegative, TopNonRelevant) {
    const std::vector<corpus::FactCheck> fcs = {corpus::make_fact_check("f1", "garlic covid cure"),
                                                corpus::make_fact_check("f2", "garlic covid"),
                                                corpus::make_fact_check("f3", "moon")};
    const auto index = retrieve::build_bm25(fcs);
    EXPECT_EQ(mine_hard_negative("garlic covid cure", index, {"f1"}), "f2");
    EXPECT_EQ(mine_hard_negative("garlic covid cure", index, {"f1", "f2"}), "f3");
    EXPECT_THROW(mine_hard_negative("x", index, {"f1", "f2", "f3"}), DataError);
}

TEST(Pairs, CountsOrderAndDedup) {
    const std::map<std::string, std::string, std::less<>> originals = {{"c1", "orig one"}, {"c2", "orig two"}};
    const std::vector<PerturbationSet> sets = {
        make_set(Variant::casing_upper, {{"c1", "ORIG ONE"}, {"c2", "ORIG TWO"}, {"c9", "SKIPPED"}}),
        make_set(Variant::typos_least, {{"c1", "orig onr"}, {"c2", "orig two"}}),
        make_set(Variant::negation_shallow, {{"c1", "not orig one"}}),
    };
    const auto corpus = build_parallel_pairs(sets, originals);
    std::size_t c1 = 0, c2 = 0;
    for (const auto& p : corpus.pairs) {
        EXPECT_NE(p.source, p.target);
        EXPECT_NE(p.claim_id, "c9");
        (p.claim_id == "c1" ? c1 : c2)++;
    }
    EXPECT_EQ(c1, 3u + 3u);  // m = 3
    EXPECT_EQ(c2, 1u + 1u);  // the typos text equals the original, so that pair is dropped
    EXPECT_EQ(corpus.pairs.front().claim_id, "c1");
    for (std::size_t i = 1; i < corpus.pairs.size(); ++i) {
        const auto& a = corpus.pairs[i - 1];
        const auto& b = corpus.pairs[i];
        EXPECT_LE(std::tie(a.claim_id, a.source_tag, a.target_tag), std::tie(b.claim_id, b.source_tag, b.target_tag));
    }
    const auto tsv = render_pairs_tsv(corpus);
    EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 8);
}

TEST(Pairs, LawHoldsForDistinctTexts) {
    std::mt19937_64 rng(29);
    const auto variants = perturb::all_variants();
    for (int trial = 0; trial < 50; ++trial) {
        std::map<std::string, std::string, std::less<>> originals;
        std::vector<PerturbationSet> sets;
        std::map<std::string, std::size_t> m;
        for (const auto v : variants) {
            sets.emplace_back(v, perturb::Provenance{"p", "m", 0});
        }
        for (int c = 0; c < 8; ++c) {
            const auto id = "c" + std::to_string(c);
            originals[id] = "original " + id;
            for (auto& set : sets) {
                if (uniform_below(rng, 2)) {
                    set.add({id, set.variant(), perturb::variant_tag(set.variant()) + " " + id, true, std::nullopt,
                             std::nullopt});
                    ++m[id];
                }
            }
        }
        const auto corpus = build_parallel_pairs(sets, originals);
        std::map<std::string, std::size_t> got;
        for (const auto& p : corpus.pairs) {
            ++got[p.claim_id];
        }
        for (const auto& [id, count] : m) {
            EXPECT_EQ(got[id], count + count * (count - 1) / 2);
        }
    }
}

TEST(Triples, OnePerRelevantFactCheck) {
    const corpus::Dataset dataset({{"c1", "garlic\tcovid", {}}, {"c2", "moon", {}}, {"c3", "none", {}}},
                                  {corpus::make_fact_check("f1", "garlic covid"),
                                   corpus::make_fact_check("f2", "garlic covid myth"),
                                   corpus::make_fact_check("f3", "moon")});
    corpus::RelevanceJudgments qrels;
    qrels.add("c1", "f1");
    qrels.add("c1", "f3");
    qrels.add("c2", "f3");
    const auto index = retrieve::build_bm25(dataset.fact_checks());
    const std::vector<std::string> ids = {"c1", "c2", "c3"};
    const auto triples = build_triples(ids, dataset, qrels, index);
    ASSERT_EQ(triples.size(), 3u);
    EXPECT_EQ(triples[0], (Triple{"c1", "garlic\tcovid", "f1", "f2"}));
    EXPECT_EQ(triples[1], (Triple{"c1", "garlic\tcovid", "f3", "f2"}));
    EXPECT_EQ(triples[2].positive_id, "f3");
    EXPECT_EQ(render_triples_tsv(std::span(triples).first(1)), "garlic covid\tf1\tf2\n");
}

TEST(Mnr, ConstantMatrixGivesLogN) {
    for (std::size_t n : {1u, 2u, 7u, 32u}) {
        const Matrix s(n, std::vector<double>(n, 0.37));
        EXPECT_NEAR(mnr_loss(s).loss, std::log(static_cast<double>(n)), 1e-9);
    }
}

TEST(Mnr, StableForLargeScores) {
    const Matrix s = {{1000.0, 0.0}, {0.0, 1000.0}};
    const auto r = mnr_loss(s);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(Mnr, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    for (int batch = 0; batch < 20; ++batch) {
        const auto n = 2 + uniform_below(rng, 6);
        const double t = batch % 2 ? 1.0 : 0.5;
        const auto s = oracle::random_matrix(rng, n, n);
        const auto analytic = mnr_loss(s, t).gradient;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double fd = oracle::central_difference([&](const Matrix& x) { return mnr_loss(x, t).loss; }, s,
                                                             i, j, 1e-5);
                EXPECT_LT(oracle::relative_error(analytic[i][j], fd), 1e-5);
            }
        }
    }
}

TEST(Mnr, RejectsBadShapes) {
    EXPECT_THROW(mnr_loss({}), std::invalid_argument);
    EXPECT_THROW(mnr_loss({{1.0, 2.0}}), std::invalid_argument);
    EXPECT_THROW(mnr_loss({{1.0}}, 0.0), std::invalid_argument);
}

TEST(Kd, HandComputedAndGradients) {
    const Matrix t = {{1.0, 2.0}};
    const Matrix s = {{1.5, 2.0}};
    const Matrix u = {{1.0, 1.0}};
    const auto r = kd_mse_loss(t, s, u);
    EXPECT_DOUBLE_EQ(r.loss, 0.25 + 1.0);
    EXPECT_EQ(r.grad_student_src, (Matrix{{1.0, 0.0}}));
    EXPECT_EQ(r.grad_student_tgt, (Matrix{{0.0, -2.0}}));

    std::mt19937_64 rng(37);
    for (int batch = 0; batch < 20; ++batch) {
        const auto b = 1 + uniform_below(rng, 5);
        const auto d = 1 + uniform_below(rng, 8);
        const auto tt = oracle::random_matrix(rng, b, d);
        const auto ss = oracle::random_matrix(rng, b, d);
        const auto uu = oracle::random_matrix(rng, b, d);
        const auto g = kd_mse_loss(tt, ss, uu);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double fs = oracle::central_difference(
                    [&](const Matrix& x) { return kd_mse_loss(tt, x, uu).loss; }, ss, i, j, 1e-5);
                const double fu = oracle::central_difference(
                    [&](const Matrix& x) { return kd_mse_loss(tt, ss, x).loss; }, uu, i, j, 1e-5);
                EXPECT_LT(oracle::relative_error(g.grad_student_src[i][j], fs), 1e-5);
                EXPECT_LT(oracle::relative_error(g.grad_student_tgt[i][j], fu), 1e-5);
            }
        }
    }
    EXPECT_THROW(kd_mse_loss({}, {}, {}), std::invalid_argument);
    EXPECT_THROW(kd_mse_loss(t, Matrix{{1.0}}, u), std::invalid_argument);
}
