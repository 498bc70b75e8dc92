#include "claimbench/provider.hpp"

#include "claimbench/common.hpp"

#include <json.hpp>

#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace claimbench::provider {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kEmbeddingBatch = 64;

std::string collapse_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

const char* role_name(Role role) { return role == Role::system ? "system" : "user"; }

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json parse_body(const std::string& body, std::string_view what) {
    try {
        return json::parse(body);
    } catch (const json::parse_error&) {
        throw ProviderError("malformed " + std::string(what) + " response: not JSON");
    }
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

void ChatRequest::validate() const {
    if (messages.empty()) {
        throw std::invalid_argument("chat request has no messages");
    }
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw std::invalid_argument("chat temperature must lie in [0, 2]");
    }
}

std::string chat_cache_key(const ChatRequest& request, std::string_view cache_namespace) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"content", collapse_whitespace(m.content)}, {"role", role_name(m.role)}});
    }
    json canonical = {{"kind", "chat"},
                      {"model", request.model},
                      {"temperature", request.temperature},
                      {"messages", std::move(messages)},
                      {"namespace", cache_namespace}};
    if (request.max_tokens) {
        canonical["max_tokens"] = *request.max_tokens;
    }
    return sha256_hex(canonical.dump());
}

std::string embedding_cache_key(std::string_view model, std::string_view text, std::string_view cache_namespace) {
    json canonical = {{"kind", "embedding"}, {"model", model}, {"text", text}, {"namespace", cache_namespace}};
    return sha256_hex(canonical.dump());
}

std::string rerank_cache_key(const RerankRequest& request, std::string_view cache_namespace) {
    json canonical = {{"kind", "rerank"},
                      {"model", request.model},
                      {"query", request.query},
                      {"candidates", request.candidates},
                      {"namespace", cache_namespace}};
    return sha256_hex(canonical.dump());
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {}

std::string ResponseCache::entry_path(const std::string& key) const {
    return (fs::path(dir_) / key.substr(0, 2) / (key + ".json")).string();
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = memory_.find(key); it != memory_.end()) {
            return it->second;
        }
    }
    if (dir_.empty()) {
        return std::nullopt;
    }
    const auto path = entry_path(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        const json entry = json::parse(ss.str());
        if (entry.at("key").get<std::string>() != key) {
            throw std::runtime_error("key mismatch");
        }
        auto text = entry.at("text").get<std::string>();
        std::lock_guard lock(mutex_);
        memory_.emplace(key, text);
        return text;
    } catch (const std::exception& e) {
        ++corrupt_;
        log_warning("cache entry " + path + " is corrupt (" + e.what() + "); refetching");
        std::error_code ignored;
        std::filesystem::remove(path, ignored);  // counted once; the refetch rewrites it
        return std::nullopt;
    }
}

void ResponseCache::put(const std::string& key, const std::string& text) {
    {
        std::lock_guard lock(mutex_);
        memory_[key] = text;
    }
    if (dir_.empty()) {
        return;
    }
    const fs::path path = entry_path(key);
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    const json entry = {{"key", key}, {"timestamp", utc_timestamp()}, {"text", text}};
    // Write-then-rename so readers never observe a partial entry.
    const auto tmp = path.string() + ".tmp." +
                     std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << entry.dump();
        if (!out) {
            log_warning("cannot write cache entry " + path.string());
            return;
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        log_warning("cannot commit cache entry " + path.string() + ": " + ec.message());
    }
}

ProviderClient::ProviderClient(ProviderConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(config_.cache_dir),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.parallelism, 1, 1024))),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (!transport_) {
        throw std::invalid_argument("ProviderClient requires a transport");
    }
    if (config_.retry.attempts < 1) {
        throw std::invalid_argument("retry attempts must be at least 1");
    }
}

void ProviderClient::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
    sleeper_ = std::move(sleeper);
}

ProviderClient::Stats ProviderClient::stats() const {
    return Stats{upstream_calls_.load(), cache_hits_.load(), cache_.corrupt_entries()};
}

std::string ProviderClient::post_with_retry(const std::string& path, const std::string& body) {
    Headers headers{{"Content-Type", "application/json"}};
    if (!config_.api_key.empty()) {
        headers.emplace_back("Authorization", "Bearer " + config_.api_key);
    }
    auto backoff = config_.retry.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        const bool last = attempt >= config_.retry.attempts;
        HttpResponse response;
        try {
            slots_.acquire();
            ++upstream_calls_;
            try {
                response = transport_->post(path, body, headers);
            } catch (...) {
                slots_.release();
                throw;
            }
            slots_.release();
        } catch (const TransportError& e) {
            if (last) {
                throw TransportError("transport failure after " + std::to_string(attempt) +
                                     " attempts on " + path + ": " + e.what());
            }
            sleeper_(backoff);
            backoff *= 2;
            continue;
        }
        if (response.status >= 200 && response.status < 300) {
            return std::move(response.body);
        }
        if (!retryable(response.status) || last) {
            throw ProviderError("provider returned HTTP " + std::to_string(response.status) + " on " + path +
                                    " after " + std::to_string(attempt) + " attempt(s)",
                                response.status);
        }
        sleeper_(backoff);
        backoff *= 2;
    }
}

std::pair<std::string, bool> ProviderClient::fetch(const std::string& key,
                                                   const std::function<std::string()>& produce) {
    if (auto hit = cache_.get(key)) {
        ++cache_hits_;
        return {std::move(*hit), true};
    }
    std::promise<std::string> promise;
    std::shared_future<std::string> shared;
    bool leader = false;
    {
        std::lock_guard lock(inflight_mutex_);
        if (auto it = inflight_.find(key); it != inflight_.end()) {
            shared = it->second;
        } else {
            shared = promise.get_future().share();
            inflight_.emplace(key, shared);
            leader = true;
        }
    }
    if (!leader) {
        ++cache_hits_;
        return {shared.get(), true};
    }
    auto finish = [&] {
        std::lock_guard lock(inflight_mutex_);
        inflight_.erase(key);
    };
    try {
        // A previous leader may have completed between our miss and our claim.
        if (auto hit = cache_.get(key)) {
            ++cache_hits_;
            promise.set_value(*hit);
            finish();
            return {std::move(*hit), true};
        }
        std::string text = produce();
        cache_.put(key, text);
        promise.set_value(text);
        finish();
        return {std::move(text), false};
    } catch (...) {
        promise.set_exception(std::current_exception());
        finish();
        throw;
    }
}

ProviderResponse ProviderClient::chat(const ChatRequest& request) {
    request.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto key = chat_cache_key(request, config_.cache_namespace);
    auto [text, cached] = fetch(key, [&] {
        json body = {{"model", request.model}, {"temperature", request.temperature}};
        json messages = json::array();
        for (const auto& m : request.messages) {
            messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
        }
        body["messages"] = std::move(messages);
        if (request.max_tokens) {
            body["max_tokens"] = *request.max_tokens;
        }
        const json response = parse_body(post_with_retry(config_.chat_path, body.dump()), "chat");
        const json::json_pointer pointer(config_.response_path);
        if (!response.contains(pointer) || !response.at(pointer).is_string()) {
            throw ProviderError("chat response has no string at " + config_.response_path);
        }
        return response.at(pointer).get<std::string>();
    });
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return ProviderResponse{std::move(text), cached, elapsed.count()};
}

std::vector<std::vector<double>> ProviderClient::embed(const EmbeddingRequest& request) {
    if (request.inputs.empty()) {
        throw std::invalid_argument("embedding request has no inputs");
    }
    std::vector<std::vector<double>> vectors(request.inputs.size());
    std::vector<std::string> keys(request.inputs.size());
    std::vector<std::size_t> missing;
    std::map<std::string, std::size_t> first_missing;
    for (std::size_t i = 0; i < request.inputs.size(); ++i) {
        keys[i] = embedding_cache_key(request.model, request.inputs[i], config_.cache_namespace);
        if (auto hit = cache_.get(keys[i])) {
            ++cache_hits_;
            vectors[i] = json::parse(*hit).get<std::vector<double>>();
        } else if (first_missing.emplace(keys[i], i).second) {
            missing.push_back(i);
        }
    }
    for (std::size_t offset = 0; offset < missing.size(); offset += kEmbeddingBatch) {
        const auto end = std::min(missing.size(), offset + kEmbeddingBatch);
        json inputs = json::array();
        for (std::size_t m = offset; m < end; ++m) {
            inputs.push_back(request.inputs[missing[m]]);
        }
        const json body = {{"model", request.model}, {"input", inputs}};
        const json response = parse_body(post_with_retry(config_.embeddings_path, body.dump()), "embedding");
        if (!response.contains("data") || !response["data"].is_array() ||
            response["data"].size() != end - offset) {
            throw ProviderError("embedding response does not contain one vector per input");
        }
        for (std::size_t m = offset; m < end; ++m) {
            const auto& item = response["data"][m - offset];
            const std::size_t slot = item.contains("index") ? offset + item["index"].get<std::size_t>() : m;
            if (slot >= end) {
                throw ProviderError("embedding response index out of range");
            }
            auto vec = item.at("embedding").get<std::vector<double>>();
            cache_.put(keys[missing[slot]], json(vec).dump());
            vectors[missing[slot]] = std::move(vec);
        }
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].empty()) {
            const auto src = first_missing.find(keys[i]);
            if (src != first_missing.end() && src->second != i) {
                vectors[i] = vectors[src->second];
            }
        }
    }
    const std::size_t dim = vectors.front().size();
    for (const auto& v : vectors) {
        if (v.size() != dim || dim == 0) {
            throw ProviderError("embedding dimension mismatch within batch");
        }
    }
    return vectors;
}

std::vector<double> ProviderClient::rerank_scores(const RerankRequest& request) {
    if (request.candidates.empty()) {
        throw std::invalid_argument("rerank request has no candidates");
    }
    const auto key = rerank_cache_key(request, config_.cache_namespace);
    auto [text, cached] = fetch(key, [&] {
        const json body = {{"model", request.model}, {"query", request.query}, {"documents", request.candidates}};
        const json response = parse_body(post_with_retry(config_.rerank_path, body.dump()), "rerank");
        if (!response.contains("results") || !response["results"].is_array()) {
            throw ProviderError("rerank response has no results array");
        }
        const auto& results = response["results"];
        if (results.size() != request.candidates.size()) {
            throw ProviderError("rerank response length " + std::to_string(results.size()) +
                                " does not match " + std::to_string(request.candidates.size()) + " candidates");
        }
        std::vector<std::optional<double>> scores(request.candidates.size());
        for (const auto& r : results) {
            const auto index = r.at("index").get<std::size_t>();
            if (index >= scores.size() || scores[index]) {
                throw ProviderError("rerank response has an invalid or repeated index");
            }
            scores[index] = r.contains("relevance_score") ? r["relevance_score"].get<double>()
                                                          : r.at("score").get<double>();
        }
        json aligned = json::array();
        for (const auto& s : scores) {
            aligned.push_back(*s);
        }
        return aligned.dump();
    });
    return json::parse(text).get<std::vector<double>>();
}

}  // namespace claimbench::provider
