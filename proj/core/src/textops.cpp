#include "claimbench/textops.hpp"

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace claimbench::textops {

namespace {

struct Span {
    std::size_t begin;
    std::size_t end;
};

bool is_word_char(UChar32 c) {
    if (u_isalpha(c) || u_isdigit(c)) {
        return true;
    }
    const auto type = u_charType(c);
    return type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK ||
           type == U_ENCLOSING_MARK;
}

/// Decodes one code point at `pos`, advancing it. Malformed input yields U+FFFD.
UChar32 next_code_point(std::string_view text, std::size_t& pos) {
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    auto i = static_cast<int32_t>(pos);
    UChar32 c = 0;
    U8_NEXT(s, i, length, c);
    pos = static_cast<std::size_t>(i);
    return c < 0 ? 0xFFFD : c;
}

std::vector<Span> word_spans(std::string_view text) {
    std::vector<Span> spans;
    std::size_t pos = 0;
    bool in_word = false;
    std::size_t start = 0;
    while (pos < text.size()) {
        const std::size_t before = pos;
        const UChar32 c = next_code_point(text, pos);
        const bool word = is_word_char(c);
        // A leading combining mark does not start a word.
        if (word && !in_word && !(u_isalpha(c) || u_isdigit(c))) {
            continue;
        }
        if (word && !in_word) {
            start = before;
            in_word = true;
        } else if (!word && in_word) {
            spans.push_back({start, before});
            in_word = false;
        }
    }
    if (in_word) {
        spans.push_back({start, text.size()});
    }
    return spans;
}

std::string to_utf8(const icu::UnicodeString& s) {
    std::string out;
    s.toUTF8String(out);
    return out;
}

icu::UnicodeString from_utf8(std::string_view text) {
    return icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
}

std::string capitalize(std::string_view lower_word) {
    if (lower_word.empty()) {
        return {};
    }
    std::size_t pos = 0;
    const UChar32 first = next_code_point(lower_word, pos);
    icu::UnicodeString head(u_totitle(first));
    std::string out = to_utf8(head);
    out.append(lower_word.substr(pos));
    return out;
}

bool ends_sentence(std::string_view separator) {
    return separator.find_first_of(".!?") != std::string_view::npos;
}

using NGramCounts = std::unordered_map<std::string, std::size_t>;

NGramCounts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    NGramCounts counts;
    if (tokens.size() < n) {
        return counts;
    }
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t j = 1; j < n; ++j) {
            key.push_back('\x1f');
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

double f1(double overlap, double count_a, double count_b) {
    if (count_a == 0.0 || count_b == 0.0 || overlap == 0.0) {
        return 0.0;
    }
    const double recall = overlap / count_a;
    const double precision = overlap / count_b;
    return 2.0 * precision * recall / (precision + recall);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

std::string uppercase(std::string_view text) {
    auto s = from_utf8(text);
    s.toUpper(icu::Locale::getRoot());
    return to_utf8(s);
}

std::string lowercase(std::string_view text) {
    auto s = from_utf8(text);
    s.toLower(icu::Locale::getRoot());
    return to_utf8(s);
}

TokenSequence tokenize_words(std::string_view text) {
    TokenSequence seq{{}, TokenOrigin::word};
    for (const auto& span : word_spans(text)) {
        seq.tokens.push_back(lowercase(text.substr(span.begin, span.end - span.begin)));
    }
    return seq;
}

TokenSequence tokenize_chars(std::string_view text) {
    TokenSequence seq{{}, TokenOrigin::character};
    std::size_t pos = 0;
    while (pos < text.size()) {
        const UChar32 c = next_code_point(text, pos);
        seq.tokens.push_back(to_utf8(icu::UnicodeString(c)));
    }
    return seq;
}

TokenSequence tokenize(std::string_view text, TokenOrigin origin) {
    return origin == TokenOrigin::word ? tokenize_words(text) : tokenize_chars(text);
}

std::size_t levenshtein(const TokenSequence& a, const TokenSequence& b) {
    if (a.origin != b.origin) {
        throw std::invalid_argument("levenshtein: token sequences have different origins");
    }
    const auto& x = a.tokens;
    const auto& y = b.tokens;
    std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
    for (std::size_t j = 0; j <= y.size(); ++j) {
        prev[j] = j;
    }
    for (std::size_t i = 1; i <= x.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            const std::size_t substitute = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, substitute});
        }
        std::swap(prev, cur);
    }
    return prev[y.size()];
}

double normalized_levenshtein(const TokenSequence& a, const TokenSequence& b) {
    const std::size_t longest = std::max(a.size(), b.size());
    const std::size_t distance = levenshtein(a, b);
    if (longest == 0) {
        return 0.0;
    }
    return static_cast<double>(distance) / static_cast<double>(longest);
}

CaseLexicon build_case_lexicon(std::span<const std::string> texts) {
    std::map<std::string, std::map<std::string, std::size_t>> surfaces;
    for (const auto& text : texts) {
        for (const auto& span : word_spans(text)) {
            std::string surface(text.substr(span.begin, span.end - span.begin));
            ++surfaces[lowercase(surface)][surface];
        }
    }
    CaseLexicon lexicon;
    for (const auto& [lower, counts] : surfaces) {
        const std::string* best = nullptr;
        std::size_t best_count = 0;
        // std::map iterates surfaces in bytewise order, so the first maximum is
        // the smallest; an exact-lowercase tie overrides it.
        for (const auto& [surface, count] : counts) {
            if (count > best_count ||
                (count == best_count && surface == lower && *best != lower)) {
                best = &surface;
                best_count = count;
            }
        }
        lexicon.emplace(lower, *best);
    }
    return lexicon;
}

std::string truecase(std::string_view text, const CaseLexicon& lexicon) {
    std::string out;
    out.reserve(text.size());
    std::size_t cursor = 0;
    bool sentence_start = true;
    for (const auto& span : word_spans(text)) {
        const auto separator = text.substr(cursor, span.begin - cursor);
        if (cursor > 0 && ends_sentence(separator)) {
            sentence_start = true;
        }
        out.append(separator);
        const std::string lower = lowercase(text.substr(span.begin, span.end - span.begin));
        if (auto it = lexicon.find(lower); it != lexicon.end()) {
            // A lowercase-dominant word still opens its sentence with a capital.
            out += sentence_start && it->second == lower ? capitalize(lower) : it->second;
        } else if (sentence_start) {
            out += capitalize(lower);
        } else {
            out += lower;
        }
        sentence_start = false;
        cursor = span.end;
    }
    out.append(text.substr(cursor));
    return out;
}

double rouge_f1(std::string_view a, std::string_view b, RougeVariant variant) {
    const auto ta = tokenize_words(a).tokens;
    const auto tb = tokenize_words(b).tokens;
    if (!ta.empty() && ta == tb) {
        return 1.0;
    }
    if (variant == RougeVariant::RL) {
        return f1(static_cast<double>(lcs_length(ta, tb)), static_cast<double>(ta.size()),
                  static_cast<double>(tb.size()));
    }
    const std::size_t n = variant == RougeVariant::R1 ? 1 : 2;
    const auto ca = ngram_counts(ta, n);
    const auto cb = ngram_counts(tb, n);
    std::size_t total_a = 0, total_b = 0, overlap = 0;
    for (const auto& [gram, count] : ca) {
        total_a += count;
        if (auto it = cb.find(gram); it != cb.end()) {
            overlap += std::min(count, it->second);
        }
    }
    for (const auto& [gram, count] : cb) {
        total_b += count;
    }
    return f1(static_cast<double>(overlap), static_cast<double>(total_a), static_cast<double>(total_b));
}

}  // namespace claimbench::textops
