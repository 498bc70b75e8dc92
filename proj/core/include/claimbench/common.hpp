#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace claimbench {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Missing or malformed configuration. CLI exit code 2.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed, dangling or otherwise unusable input data. CLI exit code 3.
class DataError : public Error {
  public:
    using Error::Error;
};

/// Upstream service failure. CLI exit code 4. `status` is the HTTP status, or 0
/// when no response was received.
class ProviderError : public Error {
  public:
    ProviderError(const std::string& what, int status = 0) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

  private:
    int status_;
};

/// No usable HTTP response (connection refused, timeout, ...).
class TransportError : public ProviderError {
  public:
    explicit TransportError(const std::string& what) : ProviderError(what, 0) {}
};

std::string sha256_hex(std::string_view data);

/// Hash of a file's bytes. Throws DataError when the file cannot be read.
std::string sha256_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// Deterministic draw from [0, bound) on top of mt19937_64, whose output stream
/// is fixed by the standard (unlike std::uniform_int_distribution).
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

template <typename Range>
void seeded_shuffle(Range& range, std::mt19937_64& rng) {
    const auto n = static_cast<std::uint64_t>(std::size(range));
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = uniform_below(rng, i);
        using std::swap;
        swap(range[i - 1], range[j]);
    }
}

/// Runs fn(0..n-1) on at most `parallelism` threads. Every index runs even if
/// some throw; the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t parallelism,
                  const std::function<void(std::size_t)>& fn);

using LogSink = std::function<void(std::string_view level, std::string_view message)>;

/// Replaces the process-wide log sink (stderr by default). Returns the old one.
LogSink set_log_sink(LogSink sink);
void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace claimbench
