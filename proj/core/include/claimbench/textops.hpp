#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::textops {

enum class TokenOrigin { word, character };

/// Word tokens never contain whitespace; character tokens are one Unicode
/// scalar value each, UTF-8 encoded.
struct TokenSequence {
    std::vector<std::string> tokens;
    TokenOrigin origin = TokenOrigin::word;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Lowercased maximal runs of Unicode letters/digits. Everything else separates.
TokenSequence tokenize_words(std::string_view text);

/// One token per code point. Invalid UTF-8 bytes become U+FFFD.
TokenSequence tokenize_chars(std::string_view text);

TokenSequence tokenize(std::string_view text, TokenOrigin origin);

/// Unit-cost insert/delete/substitute distance. Throws std::invalid_argument
/// when the sequences have different origins.
std::size_t levenshtein(const TokenSequence& a, const TokenSequence& b);

/// levenshtein / max(|a|, |b|); 0 when both are empty.
double normalized_levenshtein(const TokenSequence& a, const TokenSequence& b);

std::string uppercase(std::string_view text);
std::string lowercase(std::string_view text);

/// Lowercased token -> dominant surface form observed in a corpus.
using CaseLexicon = std::map<std::string, std::string, std::less<>>;

/// Most frequent surface casing per token; ties go to the all-lowercase form,
/// then to the bytewise smallest surface form.
CaseLexicon build_case_lexicon(std::span<const std::string> texts);

/// Recases each word to its lexicon form. Unknown words are lowercased. At a
/// sentence start, unknown and lowercase-dominant words get an initial
/// capital. Non-word characters are copied through.
std::string truecase(std::string_view text, const CaseLexicon& lexicon);

enum class RougeVariant { R1, R2, RL };

/// ROUGE F1 over lowercased word tokens. Identical non-empty token sequences
/// score 1 for every variant; if either side has no n-grams the score is 0.
double rouge_f1(std::string_view a, std::string_view b, RougeVariant variant);

}  // namespace claimbench::textops
