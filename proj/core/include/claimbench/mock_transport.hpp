#pragma once

#include "claimbench/provider.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace claimbench::provider {

struct MockOptions {
    std::uint64_t seed = 42;
    std::size_t embedding_dim = 8;
    /// Hash surface tokens instead of lowercased ones, imitating an encoder
    /// with a case-sensitive vocabulary.
    bool case_sensitive_embeddings = false;
    /// Artificial per-call delay, useful for concurrency tests.
    std::chrono::milliseconds latency{0};
};

/// In-process stand-in for an OpenAI-compatible service, speaking the same
/// JSON wire format as the HTTP transport.
///
/// Responses are pure functions of (seed, request body). Chat requests at
/// temperature 0 ignore the seed. The chat mock recognises the bundled
/// perturbation, verification and normalization prompts and answers in their
/// response formats; the embedder is a feature-hashed bag of words and
/// character trigrams, L2-normalized; the reranker scores character-trigram
/// overlap.
class MockTransport : public Transport {
  public:
    explicit MockTransport(MockOptions options = {});

    HttpResponse post(std::string_view path, const std::string& body, const Headers& headers) override;

    /// Overrides the built-in behaviour. Returning nullopt falls through to it.
    using Handler = std::function<std::optional<HttpResponse>(std::string_view path, const std::string& body)>;
    void set_handler(Handler handler);

    /// The next calls answer with these statuses (and an error body) in order.
    void script_statuses(std::deque<int> statuses);
    /// The next `n` calls throw TransportError.
    void script_transport_failures(std::size_t n);

    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t calls_to(std::string_view path) const;
    void reset_counters();

    const MockOptions& options() const noexcept { return options_; }

  private:
    HttpResponse builtin(std::string_view path, const std::string& body) const;

    MockOptions options_;
    mutable std::mutex mutex_;
    Handler handler_;
    std::deque<int> scripted_statuses_;
    std::size_t scripted_failures_ = 0;
    std::map<std::string, std::size_t, std::less<>> per_path_;
    std::atomic<std::size_t> calls_{0};
};

/// The mock's embedding function, exposed for oracles and benchmarks.
std::vector<double> mock_embedding(std::string_view text, std::size_t dim, bool case_sensitive);

/// The mock reranker's relevance score in [0, 1].
double mock_rerank_score(std::string_view query, std::string_view document);

/// Deterministic 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace claimbench::provider
