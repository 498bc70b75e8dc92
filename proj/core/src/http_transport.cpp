#include "claimbench/common.hpp"
#include "claimbench/provider.hpp"

#include <httplib.h>

#include <mutex>

namespace claimbench::provider {

namespace {

class HttpTransport : public Transport {
  public:
    HttpTransport(const std::string& endpoint, std::chrono::milliseconds timeout) : timeout_(timeout) {
        const auto scheme_end = endpoint.find("://");
        if (scheme_end == std::string::npos) {
            throw ConfigError("provider.endpoint must start with http:// or https://: " + endpoint);
        }
        const auto path_start = endpoint.find('/', scheme_end + 3);
        host_ = endpoint.substr(0, path_start);
        if (path_start != std::string::npos) {
            base_path_ = endpoint.substr(path_start);
            while (!base_path_.empty() && base_path_.back() == '/') {
                base_path_.pop_back();
            }
        }
    }

    HttpResponse post(std::string_view path, const std::string& body, const Headers& headers) override {
        // httplib::Client is not safe for concurrent requests; one per call.
        httplib::Client client(host_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [name, value] : headers) {
            if (name == "Content-Type") {
                content_type = value;
            } else {
                h.emplace(name, value);
            }
        }
        const auto result = client.Post(base_path_ + std::string(path), h, body, content_type);
        if (!result) {
            throw TransportError("HTTP request to " + host_ + " failed: " + httplib::to_string(result.error()));
        }
        return HttpResponse{result->status, result->body};
    }

  private:
    std::string host_;
    std::string base_path_;
    std::chrono::milliseconds timeout_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(const std::string& endpoint, std::chrono::milliseconds timeout) {
    return std::make_shared<HttpTransport>(endpoint, timeout);
}

}  // namespace claimbench::provider
