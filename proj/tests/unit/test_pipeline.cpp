#include "claimbench/common.hpp"
#include "pipeline.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <sstream>

#include <unistd.h>

using namespace claimbench;
using namespace claimbench::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kToyConfig = fs::path(CLAIMBENCH_SOURCE_DIR) / "data" / "toy" / "config.json";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("claimbench_pipeline_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& config) {
    const auto path = dir / "config.json";
    write_file(path.string(), config.dump(2));
    return path;
}

nlohmann::json toy_config_with_absolute_paths() {
    auto config = nlohmann::json::parse(read_file(kToyConfig.string()));
    const auto base = kToyConfig.parent_path();
    for (const auto* key : {"claims", "factchecks", "qrels", "split"}) {
        config["dataset"][key] = (base / config["dataset"][key].get<std::string>()).string();
    }
    return config;
}

int exit_code_of(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (...) {
        std::ostringstream err;
        return exit_code_for_current_exception(err);
    }
}

}  // namespace

TEST(Settings, LoadsToyConfigWithOverrides) {
    Overrides o;
    o.seed = 99;
    o.k = {3, 7};
    o.j = 12;
    o.out = "/tmp/somewhere";
    const auto s = load_settings(kToyConfig, o);
    EXPECT_EQ(s.seed, 99u);
    EXPECT_EQ(s.ks, (std::vector<std::size_t>{3, 7}));
    EXPECT_EQ(s.retrieve_j, 12u);
    EXPECT_EQ(s.rerank_j, 12u);
    EXPECT_EQ(s.out_dir, fs::path("/tmp/somewhere"));
    EXPECT_EQ(s.claims, kToyConfig.parent_path() / "claims.jsonl");
    EXPECT_EQ(s.effective["seed"], 99);
    EXPECT_NE(s.config_hash, load_settings(kToyConfig, {}).config_hash);
}

TEST(Settings, ConfigErrorsNameTheKey) {
    const auto dir = scratch("config");
    auto config = toy_config_with_absolute_paths();
    config["dataset"].erase("claims");
    try {
        load_settings(write_config(dir, config), {});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("dataset.claims"), std::string::npos);
    }
    config = toy_config_with_absolute_paths();
    config["retrieve"]["granularity"] = "sentence";
    EXPECT_THROW(load_settings(write_config(dir, config), {}), ConfigError);
    config = toy_config_with_absolute_paths();
    config["eval"]["k"] = nlohmann::json::array({0});
    EXPECT_THROW(load_settings(write_config(dir, config), {}), ConfigError);
    EXPECT_THROW(load_settings(dir / "missing.json", {}), ConfigError);
    write_file((dir / "broken.json").string(), "{");
    EXPECT_THROW(load_settings(dir / "broken.json", {}), ConfigError);
    fs::remove_all(dir);
}

TEST(ExitCodes, MapExceptionTypes) {
    EXPECT_EQ(exit_code_of([] { throw ConfigError("x"); }), 2);
    EXPECT_EQ(exit_code_of([] { throw DataError("x"); }), 3);
    EXPECT_EQ(exit_code_of([] { throw ProviderError("x", 500); }), 4);
    EXPECT_EQ(exit_code_of([] { throw TransportError("x"); }), 4);
    EXPECT_EQ(exit_code_of([] { throw std::runtime_error("x"); }), 1);
}

TEST(Pipeline, MissingDependencyIsADataError) {
    const auto out = scratch("deps");
    Overrides o;
    o.out = out.string();
    const auto s = load_settings(kToyConfig, o);
    std::ostringstream log;
    try {
        run_command("retrieve", s, log);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("claimbench ingest"), std::string::npos);
    }
    fs::remove_all(out);
}

TEST(Pipeline, DanglingQrelsFailIngest) {
    const auto dir = scratch("dangling");
    write_file((dir / "qrels.tsv").string(), "c01\tfc_missing\n");
    auto config = toy_config_with_absolute_paths();
    config["dataset"]["qrels"] = (dir / "qrels.tsv").string();
    config["dataset"].erase("split");
    Overrides o;
    o.out = (dir / "out").string();
    const auto s = load_settings(write_config(dir, config), o);
    std::ostringstream log;
    EXPECT_EQ(exit_code_of([&] { run_command("ingest", s, log); }), 3);
    fs::remove_all(dir);
}

TEST(Pipeline, ToyRunIsCompleteAndIncremental) {
    const auto out = scratch("toy");
    Overrides o;
    o.out = out.string();
    const auto s = load_settings(kToyConfig, o);
    std::ostringstream log;
    for (const auto command : kCommands) {
        run_command(command, s, log);
    }
    for (const auto* stage : {"ingest", "perturb", "index", "retrieve", "rerank", "eval", "normalize", "pairs",
                              "report"}) {
        const auto manifest_path = out / stage / "manifest.json";
        ASSERT_TRUE(fs::exists(manifest_path)) << stage;
        const auto manifest = read_file(manifest_path.string());
        const auto m = nlohmann::json::parse(manifest);
        EXPECT_EQ(m["stage"], stage);
        EXPECT_EQ(m["config_hash"], s.config_hash);
        EXPECT_EQ(manifest.find(out.string()), std::string::npos) << stage << " manifest leaks an absolute path";
        for (const auto& [file, digest] : m["outputs"].items()) {
            EXPECT_EQ(sha256_file((out / stage / file).string()), digest.get<std::string>()) << file;
        }
    }
    EXPECT_TRUE(fs::exists(out / "eval" / "bm25" / "report.csv"));
    EXPECT_TRUE(fs::exists(out / "eval" / "dense" / "report.csv"));
    EXPECT_TRUE(fs::exists(out / "rerank" / "bm25" / "sweep.csv"));
    EXPECT_TRUE(fs::exists(out / "pairs" / "pairs.tsv"));
    EXPECT_TRUE(fs::exists(out / "report" / "report.md"));

    std::ostringstream again;
    for (const auto command : kCommands) {
        run_command(command, s, again);
    }
    for (const auto command : kCommands) {
        EXPECT_NE(again.str().find(std::string(command) + ": up to date"), std::string::npos) << command;
    }

    // Touching an output invalidates that stage only.
    write_file((out / "eval" / "bm25" / "report.csv").string(), "tampered\n");
    std::ostringstream third;
    run_command("retrieve", s, third);
    run_command("eval", s, third);
    EXPECT_NE(third.str().find("retrieve: up to date"), std::string::npos);
    EXPECT_EQ(third.str().find("eval: up to date"), std::string::npos);
    EXPECT_NE(read_file((out / "eval" / "bm25" / "report.csv").string()), "tampered\n");
    fs::remove_all(out);
}
