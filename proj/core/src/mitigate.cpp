#include "claimbench/mitigate.hpp"

#include "claimbench/common.hpp"
#include "claimbench/prompts.hpp"
#include "claimbench/textops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace claimbench::mitigate {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string tsv_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        out.push_back(c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
    }
    return out;
}

void check_rectangular(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.size() != rows) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + " rows");
    }
    for (const auto& row : m) {
        if (row.size() != cols) {
            throw std::invalid_argument(std::string(what) + ": ragged or mismatched columns");
        }
    }
}

}  // namespace

std::string_view flag_name(NormalizationFlag f) noexcept {
    switch (f) {
        case NormalizationFlag::normalized: return "normalized";
        case NormalizationFlag::unchanged: return "unchanged";
        case NormalizationFlag::refused: return "refused";
        case NormalizationFlag::parse_failed: return "parse_failed";
    }
    return "";
}

std::optional<std::string> parse_normalized(std::string_view response) {
    std::size_t pos = std::string_view::npos;
    std::size_t marker_len = 0;
    for (std::string_view marker : {"Normalised Claim:", "Normalized Claim:"}) {
        const auto p = response.rfind(marker);
        if (p != std::string_view::npos && (pos == std::string_view::npos || p > pos)) {
            pos = p;
            marker_len = marker.size();
        }
    }
    if (pos == std::string_view::npos) {
        return std::nullopt;
    }
    auto rest = response.substr(pos + marker_len);
    auto text = trim(rest.substr(0, rest.find('\n')));
    for (auto [open, close] : {std::pair<std::string_view, std::string_view>{"\"", "\""}, {"'", "'"}, {"“", "”"}}) {
        if (text.size() >= open.size() + close.size() && text.starts_with(open) && text.ends_with(close)) {
            text = trim(std::string_view(text).substr(open.size(), text.size() - open.size() - close.size()));
        }
    }
    if (text.empty() || (text.front() == '[' && text.back() == ']')) {
        return std::nullopt;
    }
    return text;
}

bool looks_like_refusal(std::string_view response) {
    const auto lower = textops::lowercase(response);
    for (std::string_view cue : {"i can't", "i cannot", "i can’t", "i'm sorry", "i am sorry", "i’m sorry",
                                 "unable to", "i won't", "i will not", "not able to assist"}) {
        if (lower.find(cue) != std::string::npos) {
            return true;
        }
    }
    return false;
}

NormalizationResult normalize_claim(std::string_view text, provider::ProviderClient& client,
                                    const std::string& model) {
    const auto& prompt = prompts::get("normalize_claim");
    const provider::ChatRequest request{
        model, 0.0, {{provider::Role::user, prompt.render({{"claim", std::string(text)}})}}, std::nullopt};
    const auto response = client.chat(request);
    NormalizationResult result{std::string(text), NormalizationFlag::parse_failed, prompt.tag()};
    if (auto parsed = parse_normalized(response.text)) {
        result.flag = *parsed == text ? NormalizationFlag::unchanged : NormalizationFlag::normalized;
        result.text = std::move(*parsed);
    } else if (looks_like_refusal(response.text)) {
        result.flag = NormalizationFlag::refused;
    }
    return result;
}

std::vector<NormalizationResult> normalize_claims(std::span<const std::string> texts,
                                                  provider::ProviderClient& client, const std::string& model,
                                                  std::size_t parallelism) {
    std::vector<NormalizationResult> out(texts.size());
    parallel_for(texts.size(), parallelism, [&](std::size_t i) { out[i] = normalize_claim(texts[i], client, model); });
    return out;
}

std::string mine_hard_negative(std::string_view claim_text, const retrieve::Bm25Index& index,
                               const std::set<std::string>& relevant) {
    for (const auto& doc : retrieve::bm25_search(index, claim_text, index.doc_count())) {
        if (!relevant.contains(doc.id)) {
            return doc.id;
        }
    }
    throw DataError("no hard negative: every fact-check in the index is relevant");
}

PairCorpus build_parallel_pairs(std::span<const perturb::PerturbationSet> sets,
                                const std::map<std::string, std::string, std::less<>>& originals) {
    struct Tagged {
        std::string tag;
        std::string text;
    };
    std::map<std::string, std::vector<Tagged>, std::less<>> per_claim;
    for (const auto& set : sets) {
        for (const auto& e : set.entries()) {
            if (e.valid && originals.contains(e.claim_id)) {
                per_claim[e.claim_id].push_back({perturb::variant_tag(e.variant), e.text});
            }
        }
    }
    PairCorpus corpus;
    for (auto& [claim_id, items] : per_claim) {
        std::sort(items.begin(), items.end(), [](const Tagged& a, const Tagged& b) { return a.tag < b.tag; });
        items.erase(std::unique(items.begin(), items.end(),
                                [](const Tagged& a, const Tagged& b) { return a.tag == b.tag; }),
                    items.end());
        const auto& original = originals.find(claim_id)->second;
        std::vector<TextPair> pairs;
        for (const auto& p : items) {
            if (p.text != original) {
                pairs.push_back({claim_id, original, p.text, std::string(kUnperturbedTag), p.tag});
            }
        }
        for (std::size_t a = 0; a < items.size(); ++a) {
            for (std::size_t b = a + 1; b < items.size(); ++b) {
                if (items[a].text != items[b].text) {
                    pairs.push_back({claim_id, items[a].text, items[b].text, items[a].tag, items[b].tag});
                }
            }
        }
        std::stable_sort(pairs.begin(), pairs.end(), [](const TextPair& x, const TextPair& y) {
            return std::tie(x.source_tag, x.target_tag) < std::tie(y.source_tag, y.target_tag);
        });
        corpus.pairs.insert(corpus.pairs.end(), pairs.begin(), pairs.end());
    }
    return corpus;
}

std::vector<Triple> build_triples(std::span<const std::string> claim_ids, const corpus::Dataset& dataset,
                                  const corpus::RelevanceJudgments& qrels, const retrieve::Bm25Index& index) {
    std::vector<Triple> out;
    for (const auto& id : claim_ids) {
        const auto& relevant = qrels.relevant(id);
        if (relevant.empty()) {
            continue;
        }
        const auto& claim = dataset.claim(id);
        const auto negative = mine_hard_negative(claim.text, index, relevant);
        for (const auto& positive : relevant) {
            out.push_back({id, claim.text, positive, negative});
        }
    }
    return out;
}

std::string render_pairs_tsv(const PairCorpus& corpus) {
    std::string out;
    for (const auto& p : corpus.pairs) {
        out += tsv_field(p.source) + "\t" + tsv_field(p.target) + "\t" + p.source_tag + "\t" + p.target_tag + "\n";
    }
    return out;
}

std::string render_triples_tsv(std::span<const Triple> triples) {
    std::string out;
    for (const auto& t : triples) {
        out += tsv_field(t.claim_text) + "\t" + t.positive_id + "\t" + t.negative_id + "\n";
    }
    return out;
}

void export_training_data(const PairCorpus& corpus, const std::string& path) {
    write_file(path, render_pairs_tsv(corpus));
}

void export_training_data(std::span<const Triple> triples, const std::string& path) {
    write_file(path, render_triples_tsv(triples));
}

MnrResult mnr_loss(const Matrix& similarity, double temperature) {
    const auto n = similarity.size();
    if (n == 0) {
        throw std::invalid_argument("mnr_loss: empty similarity matrix");
    }
    check_rectangular(similarity, n, n, "mnr_loss");
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("mnr_loss: temperature must be positive");
    }
    MnrResult result;
    result.gradient.assign(n, std::vector<double>(n, 0.0));
    const double scale = 1.0 / (static_cast<double>(n) * temperature);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> z(n);
        for (std::size_t j = 0; j < n; ++j) {
            z[j] = similarity[i][j] / temperature;
        }
        const double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) {
            denom += std::exp(v - zmax);
        }
        const double log_denom = zmax + std::log(denom);
        result.loss += log_denom - z[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double p = std::exp(z[j] - log_denom);
            result.gradient[i][j] = (p - (i == j ? 1.0 : 0.0)) * scale;
        }
    }
    result.loss /= static_cast<double>(n);
    return result;
}

KdResult kd_mse_loss(const Matrix& teacher_src, const Matrix& student_src, const Matrix& student_tgt) {
    const auto batch = teacher_src.size();
    if (batch == 0) {
        throw std::invalid_argument("kd_mse_loss: empty batch");
    }
    const auto dim = teacher_src.front().size();
    check_rectangular(teacher_src, batch, dim, "kd_mse_loss teacher_src");
    check_rectangular(student_src, batch, dim, "kd_mse_loss student_src");
    check_rectangular(student_tgt, batch, dim, "kd_mse_loss student_tgt");
    KdResult result;
    result.grad_student_src.assign(batch, std::vector<double>(dim, 0.0));
    result.grad_student_tgt.assign(batch, std::vector<double>(dim, 0.0));
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t j = 0; j < batch; ++j) {
        for (std::size_t d = 0; d < dim; ++d) {
            const double ds = student_src[j][d] - teacher_src[j][d];
            const double dt = student_tgt[j][d] - teacher_src[j][d];
            result.loss += ds * ds + dt * dt;
            result.grad_student_src[j][d] = 2.0 * ds * inv_b;
            result.grad_student_tgt[j][d] = 2.0 * dt * inv_b;
        }
    }
    result.loss *= inv_b;
    return result;
}

}  // namespace claimbench::mitigate
