#include "claimbench/textops.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace claimbench::textops;

TEST(Tokenize, WordsAreLowercasedAndSplitOnPunctuation) {
    const auto t = tokenize_words("Biden's ORDER: no more 'China virus'!");
    EXPECT_EQ(t.origin, TokenOrigin::word);
    EXPECT_EQ(t.tokens, (std::vector<std::string>{"biden", "s", "order", "no", "more", "china", "virus"}));
}

TEST(Tokenize, WordsHandleNonAscii) {
    EXPECT_EQ(tokenize_words("Café ÜBER naïve").tokens, (std::vector<std::string>{"café", "über", "naïve"}));
}

TEST(Tokenize, CharsAreCodePoints) {
    const auto t = tokenize_chars("héllo");
    EXPECT_EQ(t.origin, TokenOrigin::character);
    EXPECT_EQ(t.size(), 5u);
    EXPECT_EQ(t.tokens[1], "é");
}

TEST(Tokenize, EmptyInput) {
    EXPECT_TRUE(tokenize_words("").empty());
    EXPECT_TRUE(tokenize_chars("").empty());
    EXPECT_TRUE(tokenize_words("  ...  ").empty());
}

TEST(Levenshtein, ClassicExample) {
    EXPECT_EQ(levenshtein(tokenize_chars("kitten"), tokenize_chars("sitting")), 3u);
}

TEST(Levenshtein, WordOrigin) {
    EXPECT_EQ(levenshtein(tokenize_words("the cat sat"), tokenize_words("the dog sat down")), 2u);
}

TEST(Levenshtein, OriginMismatchThrows) {
    EXPECT_THROW(levenshtein(tokenize_words("a"), tokenize_chars("a")), std::invalid_argument);
}

TEST(Levenshtein, NormalizedByLongerSide) {
    // |a| = 4, |b| = 8, distance 4.
    const auto a = tokenize_chars("abcd");
    const auto b = tokenize_chars("abcdwxyz");
    ASSERT_EQ(levenshtein(a, b), 4u);
    EXPECT_DOUBLE_EQ(normalized_levenshtein(a, b), 0.5);
}

TEST(Levenshtein, BothEmptyIsZero) {
    EXPECT_EQ(normalized_levenshtein(tokenize_chars(""), tokenize_chars("")), 0.0);
}

TEST(Levenshtein, UppercaseIsFreeAtWordOrigin) {
    const std::string s = "Pope Francis endorsed Donald Trump.";
    EXPECT_EQ(normalized_levenshtein(tokenize_words(s), tokenize_words(uppercase(s))), 0.0);
}

TEST(LevenshteinProperty, MatchesFullMatrixOracleAndIsAMetric) {
    std::mt19937_64 rng(7);
    const std::string alphabet = "abcé ";
    auto random_text = [&] {
        std::string s;
        const auto len = rng() % 9;
        for (std::size_t i = 0; i < len; ++i) {
            const auto c = rng() % 5;
            s += c == 3 ? std::string("é") : std::string(1, alphabet[c]);
        }
        return s;
    };
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = tokenize_chars(random_text());
        const auto b = tokenize_chars(random_text());
        const auto c = tokenize_chars(random_text());
        const auto ab = levenshtein(a, b);
        ASSERT_EQ(ab, oracle::levenshtein(a.tokens, b.tokens));
        ASSERT_EQ(ab, levenshtein(b, a));
        ASSERT_LE(levenshtein(a, c), ab + levenshtein(b, c));
        const auto n = normalized_levenshtein(a, b);
        ASSERT_GE(n, 0.0);
        ASSERT_LE(n, 1.0);
    }
}

TEST(Casing, Uppercase) {
    EXPECT_EQ(uppercase("abc"), "ABC");
    EXPECT_EQ(uppercase(""), "");
    EXPECT_EQ(uppercase("Covid-19"), "COVID-19");
    EXPECT_EQ(uppercase("straße"), "STRASSE");
}

TEST(Casing, UppercaseIsIdempotent) {
    const std::string s = "Wah, Biden just sign order today";
    EXPECT_EQ(uppercase(uppercase(s)), uppercase(s));
}

TEST(Casing, TruecaseKnownNames) {
    const CaseLexicon lex{{"barack", "Barack"}, {"obama", "Obama"}};
    EXPECT_EQ(truecase("i met barack obama", lex), "I met Barack Obama");
}

TEST(Casing, TruecaseUnknownMidSentenceIsLowercased) {
    EXPECT_EQ(truecase("Stop The Spread", CaseLexicon{}), "Stop the spread");
}

TEST(Casing, TruecaseAllCaps) {
    const CaseLexicon lex{{"nasa", "NASA"}};
    EXPECT_EQ(truecase("NASA SAID", lex), "NASA said");
}

TEST(Casing, TruecaseCapitalizesEachSentence) {
    const CaseLexicon lex{{"the", "the"}, {"who", "WHO"}};
    EXPECT_EQ(truecase("THE WHO agreed. the end", lex), "The WHO agreed. The end");
}

TEST(Casing, TruecaseKeepsNonLetters) {
    EXPECT_EQ(truecase("COVID-19 -- 5G!!", CaseLexicon{{"covid", "COVID"}}), "COVID-19 -- 5g!!");
}

TEST(Casing, TruecaseIsIdempotent) {
    const std::vector<std::string> corpus = {"Joe Biden met NASA staff.", "the staff met Biden", "NASA is big"};
    const auto lex = build_case_lexicon(corpus);
    const std::string s = "BIDEN MET THE NASA STAFF. NASA IS BIG";
    EXPECT_EQ(truecase(truecase(s, lex), lex), truecase(s, lex));
}

TEST(Casing, LexiconPrefersMostFrequentThenLowercase) {
    const std::vector<std::string> corpus = {"Apple apple APPLE Apple", "Pie pie", "NASA"};
    const auto lex = build_case_lexicon(corpus);
    EXPECT_EQ(lex.at("apple"), "Apple");
    EXPECT_EQ(lex.at("pie"), "pie");
    EXPECT_EQ(lex.at("nasa"), "NASA");
}

TEST(Rouge, IdenticalAndDisjoint) {
    for (auto v : {RougeVariant::R1, RougeVariant::R2, RougeVariant::RL}) {
        EXPECT_DOUBLE_EQ(rouge_f1("the cat sat", "the cat sat", v), 1.0);
        EXPECT_DOUBLE_EQ(rouge_f1("the cat", "a dog", v), 0.0);
        EXPECT_DOUBLE_EQ(rouge_f1("", "a dog", v), 0.0);
    }
}

TEST(Rouge, HandComputed) {
    // unigrams 2/3 each way; bigrams 1 of 2; LCS "the cat" = 2.
    EXPECT_NEAR(rouge_f1("the cat sat", "the cat ran", RougeVariant::R1), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(rouge_f1("the cat sat", "the cat ran", RougeVariant::R2), 0.5, 1e-12);
    EXPECT_NEAR(rouge_f1("the cat sat", "the cat ran", RougeVariant::RL), 2.0 / 3.0, 1e-12);
}

TEST(Rouge, AsymmetricLengths) {
    // a has 2 tokens, b has 4, overlap 2 -> R = 1, P = 0.5, F = 2/3.
    EXPECT_NEAR(rouge_f1("cat sat", "the cat sat down", RougeVariant::R1), 2.0 / 3.0, 1e-12);
    // LCS of "b a" and "a b c" is 1 -> R = 1/2, P = 1/3, F = 0.4.
    EXPECT_NEAR(rouge_f1("b a", "a b c", RougeVariant::RL), 0.4, 1e-12);
}

TEST(Rouge, ClippedCounts) {
    // "the the the" vs "the cat": overlap clipped at 1 -> R = 1/3, P = 1/2.
    EXPECT_NEAR(rouge_f1("the the the", "the cat", RougeVariant::R1), 0.4, 1e-12);
}

TEST(Tokenize, HyphenAndDigits) {
    EXPECT_EQ(tokenize_words("Covid-19 is DEADLY!").tokens, (std::vector<std::string>{"covid", "19", "is", "deadly"}));
}

TEST(Levenshtein, AgainstEmpty) {
    const auto a = tokenize_chars("abc");
    EXPECT_EQ(levenshtein(a, tokenize_chars("")), 3u);
    EXPECT_EQ(levenshtein(a, a), 0u);
}
