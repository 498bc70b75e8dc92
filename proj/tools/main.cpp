#include "pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"claimbench: robustness benchmark for claim-to-fact-check retrieval"};
    app.set_version_flag("--version", "claimbench 0.1.0");

    std::string command;
    std::string config;
    claimbench::cli::Overrides overrides;
    std::uint64_t seed = 0;
    std::size_t j = 0;
    std::string out;

    std::vector<std::string> commands(claimbench::cli::kCommands.begin(), claimbench::cli::kCommands.end());
    app.add_option("command", command, "Stage to run")->required()->check(CLI::IsMember(commands));
    app.add_option("--config", config, "Path to the JSON config")->required();
    auto* seed_opt = app.add_option("--seed", seed, "Override the top-level seed");
    app.add_option("--k", overrides.k, "Override eval k values (repeatable)")->delimiter(',');
    auto* j_opt = app.add_option("--j", j, "Override retrieval and rerank depth")->check(CLI::PositiveNumber);
    auto* out_opt = app.add_option("--out", out, "Override the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (*seed_opt) {
        overrides.seed = seed;
    }
    if (*j_opt) {
        overrides.j = j;
    }
    if (*out_opt) {
        overrides.out = out;
    }

    try {
        const auto settings = claimbench::cli::load_settings(config, overrides);
        claimbench::cli::run_command(command, settings, std::cout);
    } catch (...) {
        return claimbench::cli::exit_code_for_current_exception(std::cerr);
    }
    return 0;
}
