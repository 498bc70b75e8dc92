#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace claimbench::provider {

enum class Role { system, user };

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::string model;
    double temperature = 0.0;
    std::vector<ChatMessage> messages;
    std::optional<int> max_tokens;

    /// Throws std::invalid_argument on empty messages or temperature outside [0, 2].
    void validate() const;
};

struct ProviderResponse {
    std::string text;
    bool cached = false;
    std::int64_t latency_ms = 0;
};

struct EmbeddingRequest {
    std::string model;
    std::vector<std::string> inputs;
};

struct RerankRequest {
    std::string model;
    std::string query;
    std::vector<std::string> candidates;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// One POST per call. Implementations throw TransportError when no response
/// was received and must be safe to call concurrently.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpResponse post(std::string_view path, const std::string& body, const Headers& headers) = 0;
};

/// cpp-httplib backed transport for `http://` and `https://` endpoints. A path
/// component in the endpoint is prefixed to every request path.
std::shared_ptr<Transport> make_http_transport(const std::string& endpoint,
                                               std::chrono::milliseconds timeout = std::chrono::seconds(60));

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
};

struct ProviderConfig {
    std::string endpoint;
    std::string chat_model;
    std::string embedding_model;
    std::string rerank_model;
    std::string chat_path = "/chat/completions";
    std::string embeddings_path = "/embeddings";
    std::string rerank_path = "/rerank";
    /// JSON pointer to the completion text in a chat response.
    std::string response_path = "/choices/0/message/content";
    std::size_t parallelism = 8;
    /// Empty keeps the cache in memory only.
    std::string cache_dir;
    /// Folded into every cache key, e.g. the mock seed, so that differently
    /// configured providers never share entries.
    std::string cache_namespace;
    RetryPolicy retry;
    /// Sent as a bearer token when non-empty. Read from CLAIMBENCH_API_KEY.
    std::string api_key;
};

inline constexpr const char* kApiKeyEnv = "CLAIMBENCH_API_KEY";

/// Content-addressed string store. Disk entries live at
/// `<dir>/<key[0:2]>/<key>.json` as {"key", "timestamp", "text"}. An entry that
/// fails to parse or whose stored key differs is reported as corrupt and
/// treated as a miss.
class ResponseCache {
  public:
    explicit ResponseCache(std::string dir = {});

    std::optional<std::string> get(const std::string& key);
    void put(const std::string& key, const std::string& text);
    std::size_t corrupt_entries() const noexcept { return corrupt_.load(); }
    std::string entry_path(const std::string& key) const;

  private:
    std::string dir_;
    std::mutex mutex_;
    std::map<std::string, std::string> memory_;
    std::atomic<std::size_t> corrupt_{0};
};

/// Cache key for a chat request: sha256 over the canonical JSON form (sorted
/// keys, whitespace runs in message contents collapsed to one space).
std::string chat_cache_key(const ChatRequest& request, std::string_view cache_namespace = {});
std::string embedding_cache_key(std::string_view model, std::string_view text,
                                std::string_view cache_namespace = {});
std::string rerank_cache_key(const RerankRequest& request, std::string_view cache_namespace = {});

/// Thread-safe client for chat, embedding and rerank services. Identical
/// concurrent requests share one upstream call; upstream parallelism is
/// bounded by ProviderConfig::parallelism.
class ProviderClient {
  public:
    ProviderClient(ProviderConfig config, std::shared_ptr<Transport> transport);

    ProviderResponse chat(const ChatRequest& request);
    /// One vector per input; throws ProviderError if dimensions disagree.
    std::vector<std::vector<double>> embed(const EmbeddingRequest& request);
    /// Scores aligned positionally with request.candidates.
    std::vector<double> rerank_scores(const RerankRequest& request);

    const ProviderConfig& config() const noexcept { return config_; }

    struct Stats {
        std::size_t upstream_calls = 0;
        std::size_t cache_hits = 0;
        std::size_t corrupt_cache_entries = 0;
    };
    Stats stats() const;

    /// Replaces the backoff sleep, for tests.
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

  private:
    std::string post_with_retry(const std::string& path, const std::string& body);
    /// Cache lookup, then single-flight fetch. Returns the text and whether it
    /// was served without an upstream call by this caller.
    std::pair<std::string, bool> fetch(const std::string& key, const std::function<std::string()>& produce);

    ProviderConfig config_;
    std::shared_ptr<Transport> transport_;
    ResponseCache cache_;
    std::counting_semaphore<1024> slots_;
    std::mutex inflight_mutex_;
    std::map<std::string, std::shared_future<std::string>> inflight_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::atomic<std::size_t> upstream_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace claimbench::provider
