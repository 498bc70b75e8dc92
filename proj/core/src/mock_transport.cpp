#include "claimbench/mock_transport.hpp"

#include "claimbench/common.hpp"
#include "claimbench/textops.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

namespace claimbench::provider {

using nlohmann::json;

namespace {

HttpResponse ok(json body) { return HttpResponse{200, body.dump()}; }

HttpResponse error(int status, std::string_view message) {
    return HttpResponse{status, json{{"error", {{"message", message}}}}.dump()};
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                words.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        words.push_back(std::move(cur));
    }
    return words;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

/// Splits "word," into ("word", ",") so substitutions keep punctuation.
std::pair<std::string, std::string> core_and_tail(const std::string& word) {
    std::size_t end = word.size();
    while (end > 0 && std::ispunct(static_cast<unsigned char>(word[end - 1])) && word[end - 1] != '\'') {
        --end;
    }
    return {word.substr(0, end), word.substr(end)};
}

std::string lower_ascii(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string lower_first(std::string s) {
    // Keep acronyms such as "NASA" intact.
    if (s.size() > 1 && std::isupper(static_cast<unsigned char>(s[0])) &&
        !std::isupper(static_cast<unsigned char>(s[1]))) {
        s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    }
    return s;
}

std::string upper_first(std::string s) {
    if (!s.empty()) {
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    }
    return s;
}

std::string strip_final_period(std::string s) {
    while (!s.empty() && (s.back() == '.' || std::isspace(static_cast<unsigned char>(s.back())))) {
        s.pop_back();
    }
    return s;
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
    return items[uniform_below(rng, items.size())];
}

std::string section_between(std::string_view text, std::string_view start, std::string_view end) {
    auto b = text.rfind(start);
    if (b == std::string_view::npos) {
        return {};
    }
    b += start.size();
    auto e = end.empty() ? std::string_view::npos : text.find(end, b);
    auto out = std::string(text.substr(b, e == std::string_view::npos ? std::string_view::npos : e - b));
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) {
        out.pop_back();
    }
    return out;
}

// ---- perturbation generators ---------------------------------------------

const std::vector<std::pair<std::string, std::string>>& slang_table() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"you", "u"},         {"are", "r"},       {"for", "4"},         {"to", "2"},
        {"today", "2day"},    {"people", "ppl"},  {"because", "bc"},    {"the", "da"},
        {"before", "b4"},     {"with", "w/"},     {"please", "pls"},    {"thanks", "thx"},
        {"tonight", "2nite"}, {"what", "wat"},    {"government", "govt"}, {"president", "prez"},
        {"really", "rly"},    {"about", "abt"},   {"though", "tho"},    {"and", "n"},
    };
    return table;
}

std::string apply_typos(std::mt19937_64& rng, const std::string& text, std::size_t edits) {
    auto words = split_words(text);
    if (words.empty()) {
        return text;
    }
    for (std::size_t e = 0; e < edits; ++e) {
        auto& word = words[uniform_below(rng, words.size())];
        auto [core, tail] = core_and_tail(word);
        const auto lower = lower_ascii(core);
        bool replaced = false;
        if (uniform_below(rng, 3) == 0) {
            for (const auto& [from, to] : slang_table()) {
                if (lower == from) {
                    core = to;
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced && core.size() >= 3) {
            const auto i = 1 + uniform_below(rng, core.size() - 2);
            switch (uniform_below(rng, 3)) {
                case 0:  // drop
                    core.erase(i, 1);
                    break;
                case 1:  // swap
                    std::swap(core[i], core[i - 1]);
                    break;
                default:  // duplicate
                    core.insert(i, 1, core[i]);
                    break;
            }
        }
        word = core + tail;
    }
    return join_words(words);
}

const std::set<std::string>& auxiliaries() {
    static const std::set<std::string> aux = {"is",   "are",  "was",   "were",   "can",   "will",  "does", "do",
                                              "did",  "has",  "have",  "had",    "should", "could", "would", "must"};
    return aux;
}

std::string negate_once(std::mt19937_64& rng, const std::string& text) {
    auto words = split_words(text);
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto [core, tail] = core_and_tail(words[i]);
        if (auxiliaries().count(lower_ascii(core)) && tail.empty()) {
            static const std::vector<std::string> negators = {"not", "never", "not really"};
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(i) + 1, pick(rng, negators));
            return join_words(words);
        }
    }
    static const std::vector<std::string> prefixes = {"It is false that ", "It is not the case that "};
    return pick(rng, prefixes) + lower_first(text);
}

std::string negate_twice(std::mt19937_64& rng, const std::string& text) {
    static const std::vector<std::string> prefixes = {"It is not true that ", "It is false that ",
                                                      "Nobody can deny that it is untrue that "};
    return pick(rng, prefixes) + lower_first(negate_once(rng, text));
}

const std::map<std::string, std::vector<std::string>>& entity_aliases() {
    static const std::map<std::string, std::vector<std::string>> aliases = {
        {"Biden", {"Sleepy Joe", "the President", "Uncle Joe"}},
        {"Trump", {"The Donald", "the former President", "DJT"}},
        {"Obama", {"Barry", "the 44th President"}},
        {"Harris", {"Kamala", "the VP"}},
        {"China", {"the PRC", "Beijing"}},
        {"Harvard", {"Oxford", "an Ivy League school"}},
        {"NASA", {"the space agency", "the agency"}},
        {"WHO", {"the World Health Organization", "the UN health agency"}},
        {"Gates", {"the Microsoft founder", "Billy G"}},
        {"Pfizer", {"Big Pharma", "the drugmaker"}},
        {"America", {"the States", "the USA"}},
        {"Congress", {"Capitol Hill", "lawmakers"}},
        {"Facebook", {"Meta", "FB"}},
        {"Twitter", {"X", "the bird app"}},
    };
    return aliases;
}

std::string entity_alias(std::mt19937_64& rng, const std::string& entity) {
    if (auto it = entity_aliases().find(entity); it != entity_aliases().end()) {
        return pick(rng, it->second);
    }
    static const std::vector<std::string> fallback = {"a well-known figure", "Oxford", "the authorities",
                                                      "Texas", "the group"};
    return pick(rng, fallback);
}

std::vector<std::size_t> entity_positions(const std::vector<std::string>& words) {
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto core = core_and_tail(words[i]).first;
        if (core.size() < 2 || !std::isupper(static_cast<unsigned char>(core[0]))) {
            continue;
        }
        const bool known = entity_aliases().count(core) > 0;
        if (i == 0 && !known) {
            continue;
        }
        positions.push_back(i);
    }
    return positions;
}

std::string replace_entities(std::mt19937_64& rng, const std::string& text, bool all) {
    auto words = split_words(text);
    const auto positions = entity_positions(words);
    if (positions.empty()) {
        return text;
    }
    auto replace_at = [&](std::size_t i) {
        auto [core, tail] = core_and_tail(words[i]);
        auto alias = entity_alias(rng, core);
        if (i == 0) {
            alias = upper_first(alias);
        }
        words[i] = alias + tail;
    };
    if (all) {
        for (auto i : positions) {
            replace_at(i);
        }
    } else {
        replace_at(positions[uniform_below(rng, positions.size())]);
    }
    return join_words(words);
}

const std::map<std::string, std::string>& synonyms() {
    static const std::map<std::string, std::string> table = {
        {"says", "claims"},     {"said", "claimed"},   {"shows", "reveals"},   {"people", "folks"},
        {"new", "recent"},      {"big", "huge"},        {"kills", "is killing"}, {"banned", "outlawed"},
        {"banning", "outlawing"}, {"signed", "put his name on"}, {"study", "research paper"},
        {"found", "discovered"}, {"causes", "leads to"}, {"vaccine", "jab"},     {"died", "passed away"},
        {"children", "kids"},   {"doctors", "medics"},  {"government", "administration"}, {"money", "cash"},
    };
    return table;
}

std::string llm_rewrite(std::mt19937_64& rng, const std::string& text, std::size_t intensity) {
    auto words = split_words(strip_final_period(text));
    for (auto& word : words) {
        auto [core, tail] = core_and_tail(word);
        if (auto it = synonyms().find(lower_ascii(core)); it != synonyms().end() &&
                                                           uniform_below(rng, 6) < intensity + 1) {
            word = it->second + tail;
        }
    }
    std::string out = join_words(words);
    static const std::vector<std::string> prefixes = {"Apparently ", "Reports say ", "Word is that ",
                                                      "Breaking: ", "So it turns out "};
    static const std::vector<std::string> suffixes = {", and nobody is talking about it.", ". Think about that.",
                                                      ", according to several posts.", ". Wow."};
    if (intensity >= 2) {
        out = pick(rng, prefixes) + lower_first(out);
    }
    if (intensity >= 4) {
        out += pick(rng, suffixes);
    } else {
        out += ".";
    }
    return out;
}

struct DialectStyle {
    std::vector<std::pair<std::string, std::string>> substitutions;
    std::vector<std::string> prefixes;
    std::vector<std::string> suffixes;
};

const DialectStyle* dialect_style(std::string_view dialect_name) {
    static const DialectStyle aae{{{"is", "be"}, {"going", "finna"}, {"isn't", "ain't"}, {"saying", "sayin'"},
                                   {"nothing", "nothin'"}, {"are", "be"}},
                                  {"Y'all, ", "Yo, ", ""},
                                  {", no cap", ", fr", ""}};
    static const DialectStyle pidgin{{{"is", "dey"}, {"the", "di"}, {"they", "dem"}, {"are", "dey"},
                                      {"said", "talk"}, {"says", "talk say"}},
                                     {"Na so ", "Dem say ", ""},
                                     {" o", " sha", ""}};
    static const DialectStyle singlish{{{"already", "liao"}, {"is", "is"}, {"very", "damn"}, {"really", "really sia"}},
                                       {"Wah, ", "Eh, ", ""},
                                       {" lah", " leh", " liao"}};
    static const DialectStyle jamaican{{{"the", "di"}, {"is", "a"}, {"they", "dem"}, {"that", "dat"},
                                        {"this", "dis"}, {"are", "a"}, {"them", "dem"}},
                                       {"Mi hear seh ", "Wah gwaan, ", ""},
                                       {", yuh know", ""}};
    const auto name = lower_ascii(std::string(dialect_name));
    if (name.find("african american") != std::string::npos) return &aae;
    if (name.find("pidgin") != std::string::npos) return &pidgin;
    if (name.find("singlish") != std::string::npos) return &singlish;
    if (name.find("jamaican") != std::string::npos) return &jamaican;
    return nullptr;
}

std::string dialect_rewrite(std::mt19937_64& rng, const std::string& text, const DialectStyle& style) {
    auto words = split_words(strip_final_period(text));
    for (auto& word : words) {
        auto [core, tail] = core_and_tail(word);
        for (const auto& [from, to] : style.substitutions) {
            if (lower_ascii(core) == from && uniform_below(rng, 4) != 0) {
                word = to + tail;
                break;
            }
        }
    }
    auto out = join_words(words);
    const auto& prefix = pick(rng, style.prefixes);
    if (!prefix.empty()) {
        out = prefix + lower_first(out);
    }
    return out + pick(rng, style.suffixes);
}

// ---- chat tasks ----------------------------------------------------------

std::string perturbation_response(std::mt19937_64& rng, const std::string& prompt) {
    const auto inputs = section_between(prompt, "\nInputs:\n", "");
    const auto claim = section_between(inputs, "Tweet: ", "\nFact Check: ");
    const auto task = section_between(prompt, "Your task: ", "\n");
    const auto task_lower = lower_ascii(task);
    constexpr std::size_t kCandidates = 5;
    std::vector<std::string> rewrites;
    for (std::size_t k = 1; k <= kCandidates; ++k) {
        std::string r;
        if (task_lower.find("typos") != std::string::npos) {
            r = apply_typos(rng, claim, k + uniform_below(rng, 2 * k));
        } else if (task_lower.find("double negation") != std::string::npos) {
            r = negate_twice(rng, claim);
        } else if (task_lower.find("single negation") != std::string::npos) {
            r = negate_once(rng, claim);
        } else if (task_lower.find("all named entities") != std::string::npos) {
            r = replace_entities(rng, claim, true);
        } else if (task_lower.find("named entity") != std::string::npos) {
            r = replace_entities(rng, claim, false);
        } else if (task_lower.find("dialects:") != std::string::npos) {
            const auto* style = dialect_style(section_between(task, "dialects: ", ""));
            r = style ? dialect_rewrite(rng, claim, *style) : claim;
        } else {
            r = llm_rewrite(rng, claim, k - 1);
        }
        rewrites.push_back(std::move(r));
    }
    std::string out = "Here are the rewritten tweets:\n";
    for (std::size_t k = 0; k < rewrites.size(); ++k) {
        out += "- Rewritten Tweet " + std::to_string(k + 1) + ": " + rewrites[k] + "\n";
    }
    return out;
}

std::string verification_response(const std::string& prompt) {
    const auto inputs = section_between(prompt, "\nInputs:\n", "");
    const auto original = section_between(inputs, "Original Tweet: ", "\nRewritten Tweets: ");
    const auto listing = section_between(inputs, "Rewritten Tweets: ", "\n\nGenerate your response");
    json labels = json::array();
    std::size_t pos = 0;
    while (pos <= listing.size()) {
        auto end = listing.find('\n', pos);
        if (end == std::string::npos) {
            end = listing.size();
        }
        std::string line = listing.substr(pos, end - pos);
        pos = end + 1;
        const auto colon = line.find(": ");
        if (line.rfind("Rewritten Tweet ", 0) != 0 || colon == std::string::npos) {
            continue;
        }
        const auto rewrite = line.substr(colon + 2);
        const bool unchanged = lower_ascii(rewrite) == lower_ascii(original);
        const bool rejected = fnv1a64(rewrite) % 6 == 0;
        labels.push_back(rewrite.empty() || unchanged || rejected ? 0 : 1);
    }
    return json{{"labels", labels}}.dump(4);
}

std::string normalization_response(const std::string& prompt) {
    const auto inputs = section_between(prompt, "\nInputs:\n", "");
    std::string claim = section_between(inputs, "Noisy Claim: ", "\n\nGenerate your response");
    static const std::vector<std::string> noise_prefixes = {
        "It is not true that ", "It is false that ", "Nobody can deny that it is untrue that ",
        "It is not the case that ", "Apparently ", "Reports say ", "Word is that ", "Breaking: ",
        "So it turns out ", "Y'all, ", "Yo, ", "Na so ", "Dem say ", "Wah, ", "Eh, ", "Mi hear seh ",
        "Wah gwaan, "};
    for (bool stripped = true; stripped;) {
        stripped = false;
        for (const auto& p : noise_prefixes) {
            if (claim.rfind(p, 0) == 0) {
                claim = claim.substr(p.size());
                stripped = true;
            }
        }
    }
    static const std::map<std::string, std::string> expansions = [] {
        std::map<std::string, std::string> m;
        for (const auto& [full, short_form] : slang_table()) {
            m.emplace(short_form, full);
        }
        for (const auto& [from, to] : std::vector<std::pair<std::string, std::string>>{
                 {"be", "is"}, {"finna", "going"}, {"ain't", "isn't"}, {"dey", "is"}, {"di", "the"},
                 {"dem", "they"}, {"dat", "that"}, {"dis", "this"}, {"liao", "already"}}) {
            m.emplace(from, to);
        }
        return m;
    }();
    auto words = split_words(claim);
    std::vector<std::string> kept;
    static const std::set<std::string> fillers = {"lah", "leh", "sha", "o", "fr", "sia"};
    for (auto& word : words) {
        auto [core, tail] = core_and_tail(word);
        const auto lower = lower_ascii(core);
        if (fillers.count(lower) && tail.empty() && &word == &words.back()) {
            continue;
        }
        if (auto it = expansions.find(lower); it != expansions.end()) {
            core = it->second;
        }
        kept.push_back(core + tail);
    }
    auto normalized = upper_first(join_words(kept));
    for (const std::string suffix : {", no cap", ", yuh know", ", fr"}) {
        if (normalized.size() > suffix.size() && normalized.ends_with(suffix)) {
            normalized.resize(normalized.size() - suffix.size());
        }
    }
    return "Normalised Claim: \"" + normalized + "\"";
}

std::mt19937_64 request_rng(std::uint64_t seed, bool seeded, const std::string& canonical) {
    const auto digest = sha256_hex((seeded ? std::to_string(seed) + ":" : std::string("t0:")) + canonical);
    return std::mt19937_64(std::stoull(digest.substr(0, 16), nullptr, 16));
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> mock_embedding(std::string_view text, std::size_t dim, bool case_sensitive) {
    std::vector<double> v(dim, 0.0);
    if (dim == 0) {
        return v;
    }
    auto add = [&](std::string_view feature, double weight) {
        const auto h = fnv1a64(feature);
        const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
        v[(h >> 1) % dim] += sign * weight;
    };
    const auto words = case_sensitive ? split_words(text) : textops::tokenize_words(text).tokens;
    for (const auto& word : words) {
        add("w:" + word, 1.0);
        const std::string padded = "#" + word + "#";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            add("c:" + padded.substr(i, 3), 0.5);
        }
    }
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) {
            x /= norm;
        }
    }
    return v;
}

double mock_rerank_score(std::string_view query, std::string_view document) {
    auto trigrams = [](std::string_view text) {
        std::unordered_set<std::string> grams;
        for (const auto& word : textops::tokenize_words(text).tokens) {
            const std::string padded = "#" + word + "#";
            for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
                grams.insert(padded.substr(i, 3));
            }
        }
        return grams;
    };
    const auto q = trigrams(query);
    if (q.empty()) {
        return 0.0;
    }
    const auto d = trigrams(document);
    std::size_t shared = 0;
    for (const auto& g : q) {
        shared += d.count(g);
    }
    return static_cast<double>(shared) / static_cast<double>(q.size());
}

MockTransport::MockTransport(MockOptions options) : options_(options) {}

void MockTransport::set_handler(Handler handler) {
    std::lock_guard lock(mutex_);
    handler_ = std::move(handler);
}

void MockTransport::script_statuses(std::deque<int> statuses) {
    std::lock_guard lock(mutex_);
    scripted_statuses_ = std::move(statuses);
}

void MockTransport::script_transport_failures(std::size_t n) {
    std::lock_guard lock(mutex_);
    scripted_failures_ = n;
}

std::size_t MockTransport::calls_to(std::string_view path) const {
    std::lock_guard lock(mutex_);
    auto it = per_path_.find(path);
    return it == per_path_.end() ? 0 : it->second;
}

void MockTransport::reset_counters() {
    std::lock_guard lock(mutex_);
    per_path_.clear();
    calls_ = 0;
}

HttpResponse MockTransport::post(std::string_view path, const std::string& body, const Headers&) {
    ++calls_;
    Handler handler;
    {
        std::lock_guard lock(mutex_);
        ++per_path_[std::string(path)];
        if (scripted_failures_ > 0) {
            --scripted_failures_;
            throw TransportError("scripted transport failure");
        }
        if (!scripted_statuses_.empty()) {
            const int status = scripted_statuses_.front();
            scripted_statuses_.pop_front();
            return error(status, "scripted status");
        }
        handler = handler_;
    }
    if (options_.latency.count() > 0) {
        std::this_thread::sleep_for(options_.latency);
    }
    if (handler) {
        if (auto response = handler(path, body)) {
            return *response;
        }
    }
    return builtin(path, body);
}

HttpResponse MockTransport::builtin(std::string_view path, const std::string& body) const {
    json request;
    try {
        request = json::parse(body);
    } catch (const json::parse_error&) {
        return error(400, "request body is not JSON");
    }
    if (path.ends_with("/embeddings")) {
        if (!request.contains("input") || !request["input"].is_array()) {
            return error(400, "missing input");
        }
        json data = json::array();
        std::size_t index = 0;
        for (const auto& input : request["input"]) {
            data.push_back({{"index", index++},
                            {"embedding", mock_embedding(input.get<std::string>(), options_.embedding_dim,
                                                         options_.case_sensitive_embeddings)}});
        }
        return ok({{"object", "list"}, {"data", data}, {"model", request.value("model", "")}});
    }
    if (path.ends_with("/rerank")) {
        const auto query = request.value("query", std::string{});
        std::vector<std::pair<double, std::size_t>> scored;
        const auto& docs = request.at("documents");
        for (std::size_t i = 0; i < docs.size(); ++i) {
            scored.emplace_back(mock_rerank_score(query, docs[i].get<std::string>()), i);
        }
        std::stable_sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
        json results = json::array();
        for (const auto& [score, index] : scored) {
            results.push_back({{"index", index}, {"relevance_score", score}});
        }
        return ok({{"results", results}});
    }
    if (path.ends_with("/chat/completions")) {
        if (!request.contains("messages") || !request["messages"].is_array() || request["messages"].empty()) {
            return error(400, "missing messages");
        }
        std::string prompt;
        for (const auto& m : request["messages"]) {
            prompt += m.value("content", std::string{});
            prompt += "\n";
        }
        const double temperature = request.value("temperature", 0.0);
        auto rng = request_rng(options_.seed, temperature > 0.0, request.dump());
        std::string text;
        if (prompt.find("Normalised Claim:") != std::string::npos) {
            text = normalization_response(prompt);
        } else if (prompt.find("\"labels\"") != std::string::npos) {
            text = verification_response(prompt);
        } else if (prompt.find("Rewritten Tweet 1:") != std::string::npos) {
            text = perturbation_response(rng, prompt);
        } else {
            text = "I am a mock model and cannot help with that request.";
        }
        return ok({{"id", "mock-" + sha256_hex(body).substr(0, 12)},
                   {"object", "chat.completion"},
                   {"model", request.value("model", "")},
                   {"choices", json::array({{{"index", 0},
                                             {"message", {{"role", "assistant"}, {"content", text}}},
                                             {"finish_reason", "stop"}}})}});
    }
    return error(404, "unknown path");
}

}  // namespace claimbench::provider
