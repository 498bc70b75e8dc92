#pragma once

#include "claimbench/perturb.hpp"
#include "claimbench/retrieve.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::cli {

/// Command-line flags that take precedence over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::vector<std::size_t> k;
    std::optional<std::size_t> j;
    std::optional<std::string> out;
};

struct Settings {
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    /// Effective config (overrides applied), hashed into every manifest.
    nlohmann::json effective;
    std::string config_hash;
    std::uint64_t seed = 0;

    std::filesystem::path claims;
    std::filesystem::path factchecks;
    std::filesystem::path qrels;
    std::optional<std::filesystem::path> split;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};

    std::string endpoint = "mock://";
    std::string chat_model = "mock-chat";
    std::string embedding_model = "mock-embed";
    std::string rerank_model = "mock-rerank";
    std::string response_path = "/choices/0/message/content";
    std::size_t parallelism = 8;
    std::string cache_dir;
    std::size_t embedding_dim = 64;
    std::int64_t timeout_ms = 60000;

    std::vector<perturb::Family> perturb_families;
    std::size_t candidates = 5;
    double generation_temperature = 0.9;

    std::vector<std::string> retrievers{"bm25", "dense"};
    std::size_t retrieve_j = 50;
    retrieve::Bm25Params bm25;
    retrieve::Granularity granularity = retrieve::Granularity::paragraph;

    std::size_t rerank_j = 50;
    std::vector<std::size_t> sweep;

    std::vector<std::size_t> ks{1, 5, 10, 20, 50};

    std::vector<perturb::Family> pair_families;
};

/// Reads the JSON config. Relative paths resolve against the config file's
/// directory, except --out which resolves against the working directory.
/// Throws ConfigError naming the offending key.
Settings load_settings(const std::filesystem::path& config_path, const Overrides& overrides);

inline constexpr std::array<std::string_view, 9> kCommands = {
    "ingest", "perturb", "index", "retrieve", "rerank", "eval", "normalize", "pairs", "report"};

/// Runs one stage, writing outputs and a manifest under <out>/<stage>/.
/// Skips work when the stage's inputs and outputs are unchanged. Errors are
/// thrown as ConfigError, DataError or ProviderError.
void run_command(std::string_view command, const Settings& settings, std::ostream& log);

/// Maps an in-flight exception to the documented exit code.
int exit_code_for_current_exception(std::ostream& err);

}  // namespace claimbench::cli
