#pragma once

#include "claimbench/corpus.hpp"
#include "claimbench/provider.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace claimbench::retrieve {

struct ScoredDoc {
    std::string id;
    double score = 0.0;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

using Ranking = std::vector<ScoredDoc>;

/// Sorts by (score desc, id asc) and keeps the first `j`.
void sort_and_truncate(Ranking& ranking, std::size_t j);

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Okapi BM25 over whole fact-check documents, word tokens lowercased.
class Bm25Index {
  public:
    Bm25Index() = default;

    std::size_t doc_count() const noexcept { return ids_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    const Bm25Params& params() const noexcept { return params_; }
    const std::vector<std::string>& doc_ids() const noexcept { return ids_; }
    std::size_t document_frequency(std::string_view term) const;
    double idf(std::string_view term) const;

    /// One score per document, in doc_ids() order. Repeated query terms count
    /// once per occurrence.
    std::vector<double> score_all(std::string_view query) const;

  private:
    friend Bm25Index build_bm25(std::span<const corpus::FactCheck> fact_checks, Bm25Params params);

    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> lengths_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Throws DataError on an empty corpus or duplicate ids.
Bm25Index build_bm25(std::span<const corpus::FactCheck> fact_checks, Bm25Params params = {});

Ranking bm25_search(const Bm25Index& index, std::string_view query, std::size_t j);

/// Turns texts into vectors. Implementations must be safe to call from
/// several threads.
class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) const = 0;
    virtual std::string model_tag() const = 0;
};

/// Embeds through a provider's embeddings endpoint.
class ClientEmbedder : public Embedder {
  public:
    ClientEmbedder(provider::ProviderClient& client, std::string model);
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) const override;
    std::string model_tag() const override { return model_; }

  private:
    provider::ProviderClient& client_;
    std::string model_;
};

enum class Granularity : std::uint32_t { document = 0, paragraph = 1 };

std::string_view granularity_name(Granularity g) noexcept;
Granularity parse_granularity(std::string_view name);

/// Scales to unit length; a zero vector is returned unchanged.
void l2_normalize(std::vector<double>& v);
double dot(std::span<const double> a, std::span<const double> b);

struct Passage {
    std::string fact_check_id;
    std::uint32_t ordinal = 0;
    std::vector<double> vector;

    friend bool operator==(const Passage&, const Passage&) = default;
};

/// Flat (exhaustive) cosine index. Vectors are normalized on insertion.
class VectorIndex {
  public:
    VectorIndex() = default;
    VectorIndex(std::size_t dim, std::string model_tag, Granularity granularity);

    /// Throws DataError on a dimension mismatch.
    void add(Passage passage);

    std::size_t dim() const noexcept { return dim_; }
    const std::string& model_tag() const noexcept { return model_tag_; }
    Granularity granularity() const noexcept { return granularity_; }
    const std::vector<Passage>& passages() const noexcept { return passages_; }
    std::size_t size() const noexcept { return passages_.size(); }

    /// Binary layout is described in docs/vector_index_format.md. Vectors are
    /// stored as float32, so a reloaded index carries float-rounded values.
    std::string serialize() const;
    static VectorIndex deserialize(std::string_view bytes);
    void save(const std::string& path) const;
    static VectorIndex load(const std::string& path);

    friend bool operator==(const VectorIndex&, const VectorIndex&) = default;

  private:
    std::size_t dim_ = 0;
    std::string model_tag_;
    Granularity granularity_ = Granularity::paragraph;
    std::vector<Passage> passages_;
};

VectorIndex build_vector_index(std::span<const corpus::FactCheck> fact_checks, const Embedder& embedder,
                               Granularity granularity);

/// Max cosine over each fact-check's passages. A zero query vector scores
/// every fact-check 0 (ordered by id) and logs a warning.
Ranking dense_search(const VectorIndex& index, std::span<const double> query_vector, std::size_t j);
Ranking dense_search(const VectorIndex& index, std::string_view claim_text, const Embedder& embedder,
                     std::size_t j);

enum class Stage { first_stage, reranked };

std::string_view stage_name(Stage s) noexcept;
Stage parse_stage(std::string_view name);

struct RankedRun {
    Stage stage = Stage::first_stage;
    std::string model_tag;
    /// Length of the longest ranking.
    std::size_t depth = 0;
    std::map<std::string, Ranking, std::less<>> rankings;

    /// "<stage>:<model_tag>", used as the run_tag column.
    std::string run_tag() const;
    const Ranking* find(std::string_view claim_id) const;

    friend bool operator==(const RankedRun&, const RankedRun&) = default;
};

/// `claim_id Q0 factcheck_id rank score run_tag`, claims in id order, score
/// with 6 decimals.
std::string write_trec(const RankedRun& run);
/// The rank column decides order; scores come back at 6-decimal precision.
/// Throws DataError.
RankedRun parse_trec(std::string_view text);
RankedRun load_trec(const std::string& path);

struct Query {
    std::string id;
    std::string text;
};

class Retriever {
  public:
    virtual ~Retriever() = default;
    virtual std::vector<Ranking> search_batch(std::span<const Query> queries, std::size_t j,
                                              std::size_t parallelism) const = 0;
    virtual std::string model_tag() const = 0;
};

class Bm25Retriever : public Retriever {
  public:
    explicit Bm25Retriever(const Bm25Index& index) : index_(index) {}
    std::vector<Ranking> search_batch(std::span<const Query> queries, std::size_t j,
                                      std::size_t parallelism) const override;
    std::string model_tag() const override { return "bm25"; }

  private:
    const Bm25Index& index_;
};

/// Embeds all queries in one batch, then searches per query in parallel.
class DenseRetriever : public Retriever {
  public:
    DenseRetriever(const VectorIndex& index, const Embedder& embedder) : index_(index), embedder_(embedder) {}
    std::vector<Ranking> search_batch(std::span<const Query> queries, std::size_t j,
                                      std::size_t parallelism) const override;
    std::string model_tag() const override { return index_.model_tag(); }

  private:
    const VectorIndex& index_;
    const Embedder& embedder_;
};

/// One ranked list per query; throws DataError on duplicate query ids.
RankedRun first_stage_run(std::span<const Query> queries, const Retriever& retriever, std::size_t j = 50,
                          std::size_t parallelism = 8);

}  // namespace claimbench::retrieve
