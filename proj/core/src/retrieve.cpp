#include "claimbench/retrieve.hpp"

#include "claimbench/common.hpp"
#include "claimbench/textops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace claimbench::retrieve {

namespace {

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.id < b.id;
}

constexpr char kMagic[4] = {'C', 'B', 'V', 'I'};
constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
  public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

  private:
    std::string out_;
};

class ByteReader {
  public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    std::uint64_t unsigned_le(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(unsigned_le(4)); }
    std::uint64_t u64() { return unsigned_le(8); }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        const auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == in_.size(); }

  private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw DataError("vector index truncated at byte " + std::to_string(pos_));
        }
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", score);
    // Avoid "-0.000000" so tiny negative noise cannot change the bytes.
    if (std::string_view(buf) == "-0.000000") {
        return "0.000000";
    }
    return buf;
}

}  // namespace

void sort_and_truncate(Ranking& ranking, std::size_t j) {
    if (j < ranking.size()) {
        std::partial_sort(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(j), ranking.end(),
                          ranks_before);
        ranking.resize(j);
    } else {
        std::sort(ranking.begin(), ranking.end(), ranks_before);
    }
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
    const auto it = postings_.find(std::string(term));
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(std::string_view term) const {
    const auto n = static_cast<double>(doc_count());
    const auto df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> Bm25Index::score_all(std::string_view query) const {
    std::vector<double> scores(ids_.size(), 0.0);
    const auto& [k1, b] = params_;
    for (const auto& term : textops::tokenize_words(query).tokens) {
        const auto it = postings_.find(term);
        if (it == postings_.end()) {
            continue;
        }
        const double w = idf(term);
        for (const auto& [doc, tf] : it->second) {
            const double f = tf;
            const double norm = k1 * (1.0 - b + b * lengths_[doc] / avgdl_);
            scores[doc] += w * (f * (k1 + 1.0)) / (f + norm);
        }
    }
    return scores;
}

Bm25Index build_bm25(std::span<const corpus::FactCheck> fact_checks, Bm25Params params) {
    if (fact_checks.empty()) {
        throw DataError("cannot build a BM25 index over an empty corpus");
    }
    Bm25Index index;
    index.params_ = params;
    std::set<std::string_view> seen;
    std::uint64_t total = 0;
    for (const auto& fc : fact_checks) {
        if (!seen.insert(fc.id).second) {
            throw DataError("duplicate fact-check id in BM25 corpus: " + fc.id);
        }
        const auto doc = static_cast<std::uint32_t>(index.ids_.size());
        index.ids_.push_back(fc.id);
        const auto tokens = textops::tokenize_words(fc.text).tokens;
        index.lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += tokens.size();
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : tokens) {
            ++tf[t];
        }
        for (const auto& [term, count] : tf) {
            index.postings_[std::string(term)].push_back({doc, count});
        }
    }
    index.avgdl_ = static_cast<double>(total) / static_cast<double>(index.ids_.size());
    if (index.avgdl_ <= 0.0) {
        throw DataError("BM25 corpus has no word tokens");
    }
    return index;
}

Ranking bm25_search(const Bm25Index& index, std::string_view query, std::size_t j) {
    const auto scores = index.score_all(query);
    Ranking ranking;
    ranking.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        ranking.push_back({index.doc_ids()[i], scores[i]});
    }
    sort_and_truncate(ranking, j);
    return ranking;
}

ClientEmbedder::ClientEmbedder(provider::ProviderClient& client, std::string model)
    : client_(client), model_(std::move(model)) {}

std::vector<std::vector<double>> ClientEmbedder::embed(std::span<const std::string> texts) const {
    return client_.embed({model_, std::vector<std::string>(texts.begin(), texts.end())});
}

std::string_view granularity_name(Granularity g) noexcept {
    return g == Granularity::document ? "document" : "paragraph";
}

Granularity parse_granularity(std::string_view name) {
    if (name == "document") {
        return Granularity::document;
    }
    if (name == "paragraph") {
        return Granularity::paragraph;
    }
    throw ConfigError("granularity must be document or paragraph, got " + std::string(name));
}

void l2_normalize(std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) {
        sq += x * x;
    }
    if (sq == 0.0) {
        return;
    }
    const double norm = std::sqrt(sq);
    for (double& x : v) {
        x /= norm;
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

VectorIndex::VectorIndex(std::size_t dim, std::string model_tag, Granularity granularity)
    : dim_(dim), model_tag_(std::move(model_tag)), granularity_(granularity) {
    if (dim_ == 0) {
        throw DataError("vector index dimension must be positive");
    }
}

void VectorIndex::add(Passage passage) {
    if (passage.vector.size() != dim_) {
        throw DataError("passage " + passage.fact_check_id + "#" + std::to_string(passage.ordinal) + " has dimension " +
                        std::to_string(passage.vector.size()) + ", index expects " + std::to_string(dim_));
    }
    l2_normalize(passage.vector);
    passages_.push_back(std::move(passage));
}

std::string VectorIndex::serialize() const {
    ByteWriter w;
    w.raw(std::string_view(kMagic, 4));
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u32(static_cast<std::uint32_t>(granularity_));
    w.str(model_tag_);
    w.u64(passages_.size());
    for (const auto& p : passages_) {
        w.str(p.fact_check_id);
        w.u32(p.ordinal);
        for (double x : p.vector) {
            w.f32(x);
        }
    }
    return w.take();
}

VectorIndex VectorIndex::deserialize(std::string_view bytes) {
    ByteReader r(bytes);
    if (r.raw(4) != std::string_view(kMagic, 4)) {
        throw DataError("not a claimbench vector index (bad magic)");
    }
    if (const auto version = r.u32(); version != kFormatVersion) {
        throw DataError("unsupported vector index version " + std::to_string(version));
    }
    const auto dim = r.u32();
    const auto g = r.u32();
    if (g > 1) {
        throw DataError("vector index has unknown granularity " + std::to_string(g));
    }
    VectorIndex index(dim, r.str(), static_cast<Granularity>(g));
    const auto count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        Passage p;
        p.fact_check_id = r.str();
        p.ordinal = r.u32();
        p.vector.resize(dim);
        for (auto& x : p.vector) {
            x = r.f32();
        }
        // Stored vectors are already unit length; skip renormalizing.
        index.passages_.push_back(std::move(p));
    }
    if (!r.done()) {
        throw DataError("trailing bytes after vector index records");
    }
    return index;
}

void VectorIndex::save(const std::string& path) const { write_file(path, serialize()); }

VectorIndex VectorIndex::load(const std::string& path) { return deserialize(read_file(path)); }

VectorIndex build_vector_index(std::span<const corpus::FactCheck> fact_checks, const Embedder& embedder,
                               Granularity granularity) {
    if (fact_checks.empty()) {
        throw DataError("cannot build a vector index over an empty corpus");
    }
    std::vector<std::string> texts;
    std::vector<std::pair<std::string, std::uint32_t>> owners;
    std::set<std::string_view> seen;
    for (const auto& fc : fact_checks) {
        if (!seen.insert(fc.id).second) {
            throw DataError("duplicate fact-check id in vector corpus: " + fc.id);
        }
        if (granularity == Granularity::document) {
            texts.push_back(fc.text);
            owners.emplace_back(fc.id, 0);
        } else {
            for (std::size_t i = 0; i < fc.paragraphs.size(); ++i) {
                texts.push_back(fc.paragraphs[i]);
                owners.emplace_back(fc.id, static_cast<std::uint32_t>(i));
            }
        }
    }
    auto vectors = embedder.embed(texts);
    if (vectors.size() != texts.size() || vectors.front().empty()) {
        throw ProviderError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                            std::to_string(texts.size()) + " passages");
    }
    VectorIndex index(vectors.front().size(), embedder.model_tag(), granularity);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        index.add({owners[i].first, owners[i].second, std::move(vectors[i])});
    }
    return index;
}

Ranking dense_search(const VectorIndex& index, std::span<const double> query_vector, std::size_t j) {
    if (query_vector.size() != index.dim()) {
        throw DataError("query dimension " + std::to_string(query_vector.size()) + " does not match index dimension " +
                        std::to_string(index.dim()));
    }
    std::vector<double> q(query_vector.begin(), query_vector.end());
    l2_normalize(q);
    const bool zero = std::all_of(q.begin(), q.end(), [](double x) { return x == 0.0; });
    if (zero) {
        log_warning("dense_search: zero query vector; every fact-check scores 0");
    }
    std::map<std::string_view, double> best;
    for (const auto& p : index.passages()) {
        const double s = zero ? 0.0 : dot(q, p.vector);
        const auto [it, inserted] = best.try_emplace(p.fact_check_id, s);
        if (!inserted && s > it->second) {
            it->second = s;
        }
    }
    Ranking ranking;
    ranking.reserve(best.size());
    for (const auto& [id, s] : best) {
        ranking.push_back({std::string(id), s});
    }
    sort_and_truncate(ranking, j);
    return ranking;
}

Ranking dense_search(const VectorIndex& index, std::string_view claim_text, const Embedder& embedder,
                     std::size_t j) {
    const std::string text(claim_text);
    const auto vectors = embedder.embed(std::span<const std::string>(&text, 1));
    if (vectors.size() != 1) {
        throw ProviderError("embedder returned no vector for the query");
    }
    return dense_search(index, vectors.front(), j);
}

std::string_view stage_name(Stage s) noexcept { return s == Stage::first_stage ? "first_stage" : "reranked"; }

Stage parse_stage(std::string_view name) {
    if (name == "first_stage") {
        return Stage::first_stage;
    }
    if (name == "reranked") {
        return Stage::reranked;
    }
    throw DataError("unknown run stage: " + std::string(name));
}

std::string RankedRun::run_tag() const { return std::string(stage_name(stage)) + ":" + model_tag; }

const Ranking* RankedRun::find(std::string_view claim_id) const {
    const auto it = rankings.find(claim_id);
    return it == rankings.end() ? nullptr : &it->second;
}

std::string write_trec(const RankedRun& run) {
    const auto tag = run.run_tag();
    if (tag.find_first_of(" \t\n") != std::string::npos) {
        throw DataError("run tag must not contain whitespace: " + tag);
    }
    std::string out;
    for (const auto& [claim_id, ranking] : run.rankings) {
        for (std::size_t i = 0; i < ranking.size(); ++i) {
            out += claim_id + " Q0 " + ranking[i].id + " " + std::to_string(i + 1) + " " +
                   format_score(ranking[i].score) + " " + tag + "\n";
        }
    }
    return out;
}

RankedRun parse_trec(std::string_view text) {
    RankedRun run;
    std::map<std::string, std::map<std::size_t, ScoredDoc>, std::less<>> by_rank;
    std::optional<std::string> tag;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string claim_id, q0, fc_id, run_tag;
        std::size_t rank = 0;
        double score = 0.0;
        if (!(fields >> claim_id >> q0 >> fc_id >> rank >> score >> run_tag) || q0 != "Q0" || rank == 0) {
            throw DataError("run:" + std::to_string(line_no) + ": malformed run line");
        }
        if (tag && *tag != run_tag) {
            throw DataError("run:" + std::to_string(line_no) + ": mixed run tags " + *tag + " and " + run_tag);
        }
        tag = run_tag;
        if (!by_rank[claim_id].try_emplace(rank, ScoredDoc{fc_id, score}).second) {
            throw DataError("run:" + std::to_string(line_no) + ": duplicate rank " + std::to_string(rank) + " for " +
                            claim_id);
        }
    }
    if (tag) {
        const auto colon = tag->find(':');
        if (colon == std::string::npos) {
            throw DataError("run tag must be <stage>:<model>, got " + *tag);
        }
        run.stage = parse_stage(std::string_view(*tag).substr(0, colon));
        run.model_tag = tag->substr(colon + 1);
    }
    for (auto& [claim_id, ranks] : by_rank) {
        auto& ranking = run.rankings[claim_id];
        std::set<std::string_view> seen;
        for (auto& [rank, doc] : ranks) {
            if (!seen.insert(doc.id).second) {
                throw DataError("run: fact-check " + doc.id + " listed twice for " + claim_id);
            }
            ranking.push_back(std::move(doc));
        }
        run.depth = std::max(run.depth, ranking.size());
    }
    return run;
}

RankedRun load_trec(const std::string& path) { return parse_trec(read_file(path)); }

std::vector<Ranking> Bm25Retriever::search_batch(std::span<const Query> queries, std::size_t j,
                                                 std::size_t parallelism) const {
    std::vector<Ranking> out(queries.size());
    parallel_for(queries.size(), parallelism, [&](std::size_t i) { out[i] = bm25_search(index_, queries[i].text, j); });
    return out;
}

std::vector<Ranking> DenseRetriever::search_batch(std::span<const Query> queries, std::size_t j,
                                                  std::size_t parallelism) const {
    std::vector<std::string> texts;
    texts.reserve(queries.size());
    for (const auto& q : queries) {
        texts.push_back(q.text);
    }
    const auto vectors = texts.empty() ? std::vector<std::vector<double>>{} : embedder_.embed(texts);
    if (vectors.size() != queries.size()) {
        throw ProviderError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                            std::to_string(queries.size()) + " queries");
    }
    std::vector<Ranking> out(queries.size());
    parallel_for(queries.size(), parallelism, [&](std::size_t i) { out[i] = dense_search(index_, vectors[i], j); });
    return out;
}

RankedRun first_stage_run(std::span<const Query> queries, const Retriever& retriever, std::size_t j,
                          std::size_t parallelism) {
    if (j == 0) {
        throw std::invalid_argument("first_stage_run: j must be at least 1");
    }
    std::set<std::string_view> seen;
    for (const auto& q : queries) {
        if (!seen.insert(q.id).second) {
            throw DataError("duplicate query id " + q.id);
        }
    }
    auto rankings = retriever.search_batch(queries, j, parallelism);
    RankedRun run{Stage::first_stage, retriever.model_tag(), 0, {}};
    for (std::size_t i = 0; i < queries.size(); ++i) {
        run.depth = std::max(run.depth, rankings[i].size());
        run.rankings.emplace(queries[i].id, std::move(rankings[i]));
    }
    return run;
}

}  // namespace claimbench::retrieve
