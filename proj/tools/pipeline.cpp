#include "pipeline.hpp"

#include "claimbench/common.hpp"
#include "claimbench/corpus.hpp"
#include "claimbench/metrics.hpp"
#include "claimbench/mitigate.hpp"
#include "claimbench/mock_transport.hpp"
#include "claimbench/prompts.hpp"
#include "claimbench/provider.hpp"
#include "claimbench/rerank.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <set>

namespace claimbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config -----------------------------------------------------------------

const json* section(const json& root, const char* name) {
    if (!root.contains(name)) {
        return nullptr;
    }
    const auto& s = root.at(name);
    if (!s.is_object()) {
        throw ConfigError(std::string("config key ") + name + " must be an object");
    }
    return &s;
}

std::string key_name(const char* sec, const char* key) { return std::string(sec) + "." + key; }

std::optional<std::string> get_string(const json* s, const char* sec, const char* key) {
    if (!s || !s->contains(key)) {
        return std::nullopt;
    }
    if (!s->at(key).is_string()) {
        throw ConfigError("config key " + key_name(sec, key) + " must be a string");
    }
    return s->at(key).get<std::string>();
}

std::string require_string(const json* s, const char* sec, const char* key) {
    auto v = get_string(s, sec, key);
    if (!v) {
        throw ConfigError("missing config key " + key_name(sec, key));
    }
    return *v;
}

std::optional<std::size_t> get_count(const json* s, const char* sec, const char* key) {
    if (!s || !s->contains(key)) {
        return std::nullopt;
    }
    const auto& v = s->at(key);
    if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) {
        throw ConfigError("config key " + key_name(sec, key) + " must be a positive integer");
    }
    return v.get<std::size_t>();
}

std::optional<double> get_number(const json* s, const char* sec, const char* key) {
    if (!s || !s->contains(key)) {
        return std::nullopt;
    }
    if (!s->at(key).is_number()) {
        throw ConfigError("config key " + key_name(sec, key) + " must be a number");
    }
    return s->at(key).get<double>();
}

std::optional<std::vector<std::size_t>> get_counts(const json* s, const char* sec, const char* key) {
    if (!s || !s->contains(key)) {
        return std::nullopt;
    }
    const auto& v = s->at(key);
    std::vector<std::size_t> out;
    if (v.is_array()) {
        for (const auto& x : v) {
            if (!x.is_number_unsigned() || x.get<std::size_t>() == 0) {
                throw ConfigError("config key " + key_name(sec, key) + " must list positive integers");
            }
            out.push_back(x.get<std::size_t>());
        }
    }
    if (out.empty()) {
        throw ConfigError("config key " + key_name(sec, key) + " must be a non-empty list of positive integers");
    }
    return out;
}

std::optional<std::vector<std::string>> get_strings(const json* s, const char* sec, const char* key) {
    if (!s || !s->contains(key)) {
        return std::nullopt;
    }
    const auto& v = s->at(key);
    std::vector<std::string> out;
    if (!v.is_array()) {
        throw ConfigError("config key " + key_name(sec, key) + " must be a list of strings");
    }
    for (const auto& x : v) {
        if (!x.is_string()) {
            throw ConfigError("config key " + key_name(sec, key) + " must be a list of strings");
        }
        out.push_back(x.get<std::string>());
    }
    return out;
}

std::vector<perturb::Family> parse_families(const std::vector<std::string>& names, const char* key) {
    std::vector<perturb::Family> out;
    for (const auto& n : names) {
        try {
            out.push_back(perturb::parse_family(n));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key ") + key + ": " + e.what());
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---- artifacts --------------------------------------------------------------

using Outputs = std::map<std::string, std::string>;

std::string manifest_text(const json& manifest) { return manifest.dump(2) + "\n"; }

/// Per-stage bookkeeping: the inputs hash guards reruns, outputs are written
/// together with a manifest listing their digests.
class Stage {
  public:
    Stage(const Settings& settings, std::string name, std::vector<std::string> deps, std::vector<std::string> optional_deps = {})
        : settings_(settings), name_(std::move(name)), dir_(settings.out_dir / name_) {
        std::string fingerprint = name_ + "\n" + settings.config_hash + "\n";
        for (const auto& dep : deps) {
            const auto path = settings.out_dir / dep / "manifest.json";
            if (!fs::exists(path)) {
                throw DataError(name_ + " requires " + path.generic_string() + "; run `claimbench " + dep +
                                "` first");
            }
            fingerprint += dep + "\n" + read_file(path.string());
        }
        for (const auto& dep : optional_deps) {
            const auto path = settings.out_dir / dep / "manifest.json";
            if (fs::exists(path)) {
                fingerprint += dep + "\n" + read_file(path.string());
                present_.insert(dep);
            }
        }
        inputs_hash_ = sha256_hex(fingerprint);
    }

    const fs::path& dir() const noexcept { return dir_; }
    bool has(const std::string& dep) const { return present_.contains(dep); }

    bool up_to_date() const {
        const auto path = dir_ / "manifest.json";
        if (!fs::exists(path)) {
            return false;
        }
        try {
            const auto m = json::parse(read_file(path.string()));
            if (m.value("inputs_hash", "") != inputs_hash_) {
                return false;
            }
            for (const auto& [rel, digest] : m.at("outputs").items()) {
                const auto file = dir_ / rel;
                if (!fs::exists(file) || sha256_file(file.string()) != digest.get<std::string>()) {
                    return false;
                }
            }
            return true;
        } catch (const std::exception&) {
            return false;
        }
    }

    void commit(const Outputs& outputs, json extra, std::ostream& log) const {
        json digests = json::object();
        for (const auto& [rel, content] : outputs) {
            const auto path = dir_ / rel;
            fs::create_directories(path.parent_path());
            write_file(path.string(), content);
            digests[rel] = sha256_hex(content);
        }
        json manifest = {
            {"stage", name_},
            {"config_hash", settings_.config_hash},
            {"inputs_hash", inputs_hash_},
            {"seed", settings_.seed},
            {"models",
             {{"chat", settings_.chat_model},
              {"embedding", settings_.embedding_model},
              {"rerank", settings_.rerank_model}}},
            {"outputs", digests},
        };
        json prompt_versions = json::array();
        for (const auto& id : prompts::available_ids()) {
            prompt_versions.push_back(prompts::get(id).tag());
        }
        manifest["prompt_versions"] = prompt_versions;
        for (auto& [key, value] : extra.items()) {
            manifest[key] = value;
        }
        write_file((dir_ / "manifest.json").string(), manifest_text(manifest));
        log << name_ << ": wrote " << outputs.size() << " file(s) to " << dir_.generic_string() << "\n";
    }

  private:
    const Settings& settings_;
    std::string name_;
    fs::path dir_;
    std::string inputs_hash_;
    std::set<std::string> present_;
};

struct Ingested {
    corpus::LoadedDataset data;
    corpus::DatasetSplit split;
};

Ingested load_ingested(const Settings& s) {
    const auto dir = s.out_dir / "ingest";
    Ingested in{corpus::load_dataset((dir / "claims.jsonl").string(), (dir / "factchecks.jsonl").string(),
                                     (dir / "qrels.tsv").string()),
                {}};
    in.split = corpus::load_split((dir / "split.tsv").string(), in.data.dataset);
    return in;
}

std::vector<std::string> evaluable_subset(const std::vector<std::string>& ids, const corpus::RelevanceJudgments& qrels) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
        if (qrels.has_judgments(id)) {
            out.push_back(id);
        }
    }
    return out;
}

std::unique_ptr<provider::ProviderClient> make_client(const Settings& s) {
    provider::ProviderConfig config;
    config.endpoint = s.endpoint;
    config.chat_model = s.chat_model;
    config.embedding_model = s.embedding_model;
    config.rerank_model = s.rerank_model;
    config.response_path = s.response_path;
    config.parallelism = s.parallelism;
    config.cache_dir = s.cache_dir;
    std::shared_ptr<provider::Transport> transport;
    if (s.endpoint.starts_with("mock://")) {
        provider::MockOptions options;
        options.seed = s.seed;
        options.embedding_dim = s.embedding_dim;
        transport = std::make_shared<provider::MockTransport>(options);
        config.cache_namespace = "mock:" + std::to_string(s.seed) + ":" + std::to_string(s.embedding_dim);
    } else {
        if (const char* key = std::getenv(provider::kApiKeyEnv)) {
            config.api_key = key;
        }
        transport = provider::make_http_transport(s.endpoint, std::chrono::milliseconds(s.timeout_ms));
        config.cache_namespace = s.endpoint;
    }
    return std::make_unique<provider::ProviderClient>(config, transport);
}

perturb::Perturber make_perturber(const Settings& s, provider::ProviderClient& client) {
    perturb::PerturberOptions options;
    options.model = s.chat_model;
    options.candidates = s.candidates;
    options.generation_temperature = s.generation_temperature;
    options.seed = s.seed;
    options.parallelism = s.parallelism;
    return perturb::Perturber(client, options);
}

textops::CaseLexicon make_lexicon(const corpus::Dataset& dataset) {
    std::vector<std::string> texts;
    for (const auto& c : dataset.claims()) {
        texts.push_back(c.text);
    }
    for (const auto& f : dataset.fact_checks()) {
        texts.push_back(f.text);
    }
    return textops::build_case_lexicon(texts);
}

json failures_json(const std::vector<perturb::PerturbationFailure>& failures) {
    json out = json::array();
    for (const auto& f : failures) {
        out.push_back({{"claim_id", f.claim_id}, {"scope", f.scope}, {"reason", f.reason}});
    }
    return out;
}

std::map<std::string, std::string, std::less<>> claim_texts(const corpus::Dataset& dataset) {
    std::map<std::string, std::string, std::less<>> out;
    for (const auto& c : dataset.claims()) {
        out.emplace(c.id, c.text);
    }
    return out;
}

std::vector<perturb::PerturbationSet> load_perturbations(const Settings& s) {
    return perturb::parse_perturbations(read_file((s.out_dir / "perturb" / "perturbations.jsonl").string()));
}

/// Builds the first-stage retrievers named in the config. The BM25 index is
/// rebuilt from the ingested corpus; the dense index comes from the index
/// stage.
class Retrievers {
  public:
    Retrievers(const Settings& s, const corpus::Dataset& dataset, provider::ProviderClient& client) {
        for (const auto& name : s.retrievers) {
            if (name == "bm25") {
                bm25_ = retrieve::build_bm25(dataset.fact_checks(), s.bm25);
                named_.emplace_back(name, std::make_unique<retrieve::Bm25Retriever>(bm25_));
            } else {
                vectors_ = retrieve::VectorIndex::load((s.out_dir / "index" / "dense.cbvi").string());
                embedder_ = std::make_unique<retrieve::ClientEmbedder>(client, s.embedding_model);
                named_.emplace_back(name, std::make_unique<retrieve::DenseRetriever>(vectors_, *embedder_));
            }
        }
    }

    const std::vector<std::pair<std::string, std::unique_ptr<retrieve::Retriever>>>& all() const { return named_; }

  private:
    retrieve::Bm25Index bm25_;
    retrieve::VectorIndex vectors_;
    std::unique_ptr<retrieve::ClientEmbedder> embedder_;
    std::vector<std::pair<std::string, std::unique_ptr<retrieve::Retriever>>> named_;
};

std::vector<std::string> dependencies_for_retrieval(const Settings& s, std::vector<std::string> base) {
    if (std::find(s.retrievers.begin(), s.retrievers.end(), "dense") != s.retrievers.end()) {
        base.push_back("index");
    }
    return base;
}

std::vector<retrieve::Query> unperturbed_queries(const corpus::Dataset& dataset, const std::vector<std::string>& ids) {
    std::vector<retrieve::Query> out;
    for (const auto& id : ids) {
        out.push_back({id, dataset.claim(id).text});
    }
    return out;
}

std::vector<retrieve::Query> perturbed_queries(const perturb::PerturbationSet& set) {
    std::vector<retrieve::Query> out;
    for (const auto& e : set.entries()) {
        out.push_back({e.claim_id, e.text});
    }
    return out;
}

std::map<std::string, std::string, std::less<>> as_map(const std::vector<retrieve::Query>& queries) {
    std::map<std::string, std::string, std::less<>> out;
    for (const auto& q : queries) {
        out.emplace(q.id, q.text);
    }
    return out;
}

// ---- stages -----------------------------------------------------------------

void cmd_ingest(const Settings& s, std::ostream& log) {
    Stage stage(s, "ingest", {});
    if (stage.up_to_date()) {
        log << "ingest: up to date\n";
        return;
    }
    const auto loaded = corpus::load_dataset(s.claims.string(), s.factchecks.string(), s.qrels.string());
    corpus::DatasetSplit split;
    if (s.split) {
        split = corpus::load_split(s.split->string(), loaded.dataset);
    } else {
        std::vector<std::string> ids;
        for (const auto& c : loaded.dataset.claims()) {
            ids.push_back(c.id);
        }
        split = corpus::split_dataset(ids, s.split_ratios, s.seed);
    }
    Outputs outputs = {
        {"claims.jsonl", corpus::serialize_claims(loaded.dataset)},
        {"factchecks.jsonl", corpus::serialize_fact_checks(loaded.dataset)},
        {"qrels.tsv", corpus::serialize_qrels(loaded.qrels)},
        {"split.tsv", corpus::serialize_split(split)},
    };
    json dataset_hashes = {{"claims", sha256_file(s.claims.string())},
                           {"factchecks", sha256_file(s.factchecks.string())},
                           {"qrels", sha256_file(s.qrels.string())}};
    if (s.split) {
        dataset_hashes["split"] = sha256_file(s.split->string());
    }
    stage.commit(outputs,
                 {{"dataset_hashes", dataset_hashes},
                  {"counts",
                   {{"claims", loaded.dataset.claims().size()},
                    {"fact_checks", loaded.dataset.fact_checks().size()},
                    {"qrels", loaded.qrels.size()},
                    {"train", split.train.size()},
                    {"dev", split.dev.size()},
                    {"test", split.test.size()}}}},
                 log);
}

perturb::PerturbationRun perturb_claims(const Settings& s, const Ingested& in, const std::vector<std::string>& ids,
                                        const std::vector<perturb::Family>& families) {
    auto client = make_client(s);
    const auto perturber = make_perturber(s, *client);
    return perturb::perturb_dataset(ids, in.data.qrels, in.data.dataset, families, perturber,
                                    make_lexicon(in.data.dataset));
}

void cmd_perturb(const Settings& s, std::ostream& log) {
    Stage stage(s, "perturb", {"ingest"});
    if (stage.up_to_date()) {
        log << "perturb: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto ids = evaluable_subset(in.split.test, in.data.qrels);
    const auto run = perturb_claims(s, in, ids, s.perturb_families);
    const auto originals = claim_texts(in.data.dataset);
    std::vector<perturb::OverlapStats> overlap;
    for (const auto& set : run.sets) {
        overlap.push_back(perturb::overlap_statistics(set, originals));
    }
    stage.commit({{"perturbations.jsonl", perturb::serialize_perturbations(run.sets)},
                  {"counts.csv", perturb::render_counts_csv(run.counts)},
                  {"overlap.csv", perturb::render_overlap_csv(overlap)}},
                 {{"claims", ids.size()}, {"failures", failures_json(run.failures)}}, log);
}

void cmd_index(const Settings& s, std::ostream& log) {
    Stage stage(s, "index", {"ingest"});
    if (stage.up_to_date()) {
        log << "index: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto& fcs = in.data.dataset.fact_checks();
    const auto bm25 = retrieve::build_bm25(fcs, s.bm25);
    json stats = {{"documents", bm25.doc_count()}, {"avgdl", bm25.avgdl()}, {"k1", s.bm25.k1}, {"b", s.bm25.b}};
    Outputs outputs = {{"bm25.json", stats.dump(2) + "\n"}};
    json extra = {{"bm25", stats}};
    if (std::find(s.retrievers.begin(), s.retrievers.end(), "dense") != s.retrievers.end()) {
        auto client = make_client(s);
        const retrieve::ClientEmbedder embedder(*client, s.embedding_model);
        const auto index = retrieve::build_vector_index(fcs, embedder, s.granularity);
        outputs["dense.cbvi"] = index.serialize();
        extra["dense"] = {{"passages", index.size()},
                          {"dim", index.dim()},
                          {"granularity", retrieve::granularity_name(index.granularity())}};
    }
    stage.commit(outputs, extra, log);
}

void cmd_retrieve(const Settings& s, std::ostream& log) {
    Stage stage(s, "retrieve", dependencies_for_retrieval(s, {"ingest", "perturb"}));
    if (stage.up_to_date()) {
        log << "retrieve: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto sets = load_perturbations(s);
    auto client = make_client(s);
    const Retrievers retrievers(s, in.data.dataset, *client);
    const auto base = unperturbed_queries(in.data.dataset, evaluable_subset(in.split.test, in.data.qrels));
    Outputs outputs;
    for (const auto& [name, retriever] : retrievers.all()) {
        outputs[name + "/unperturbed.run"] =
            retrieve::write_trec(retrieve::first_stage_run(base, *retriever, s.retrieve_j, s.parallelism));
        for (const auto& set : sets) {
            const auto queries = perturbed_queries(set);
            outputs[name + "/" + perturb::variant_tag(set.variant()) + ".run"] =
                retrieve::write_trec(retrieve::first_stage_run(queries, *retriever, s.retrieve_j, s.parallelism));
        }
    }
    stage.commit(outputs, {{"j", s.retrieve_j}}, log);
}

void cmd_rerank(const Settings& s, std::ostream& log) {
    Stage stage(s, "rerank", {"ingest", "perturb", "retrieve"});
    if (stage.up_to_date()) {
        log << "rerank: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto sets = load_perturbations(s);
    auto client = make_client(s);
    const rerank::ClientScorer scorer(*client, s.rerank_model);
    const auto base = as_map(unperturbed_queries(in.data.dataset, evaluable_subset(in.split.test, in.data.qrels)));

    Outputs outputs;
    json failed = json::object();
    for (const auto& name : s.retrievers) {
        const auto dir = s.out_dir / "retrieve" / name;
        auto rerank_file = [&](const std::string& file, const std::map<std::string, std::string, std::less<>>& queries) {
            const auto run = retrieve::load_trec((dir / file).string());
            auto result = rerank::rerank_run(run, queries, in.data.dataset, scorer, s.rerank_j, s.parallelism);
            outputs[name + "/" + file] = retrieve::write_trec(result.run);
            if (!result.failed_claims.empty()) {
                failed[name + "/" + file] = result.failed_claims;
            }
        };
        rerank_file("unperturbed.run", base);
        for (const auto& set : sets) {
            rerank_file(perturb::variant_tag(set.variant()) + ".run", as_map(perturbed_queries(set)));
        }
        if (!s.sweep.empty()) {
            const auto run = retrieve::load_trec((dir / "unperturbed.run").string());
            const auto table = rerank::sweep_j(
                run, base, in.data.dataset, scorer, s.sweep,
                [&](const retrieve::RankedRun& r) { return metrics::map_at_k(r, in.data.qrels, 5); }, s.parallelism);
            std::string csv = "j,map_at_5\n";
            for (const auto& point : table) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%zu,%.6f\n", point.j, point.value);
                csv += buf;
            }
            outputs[name + "/sweep.csv"] = csv;
        }
    }
    stage.commit(outputs, {{"j", s.rerank_j}, {"failed_claims", failed}}, log);
}

/// Gap reports for one family of perturbed runs against the unperturbed runs.
metrics::GapReport gap_report_for(const Settings& s, const corpus::RelevanceJudgments& qrels,
                                  const std::vector<perturb::PerturbationSet>& sets, const retrieve::RankedRun& u_first,
                                  const retrieve::RankedRun* u_reranked,
                                  const std::function<retrieve::RankedRun(const std::string&)>& first_of,
                                  const std::function<std::optional<retrieve::RankedRun>(const std::string&)>& reranked_of,
                                  json& skipped) {
    std::vector<retrieve::RankedRun> storage;
    storage.reserve(2 * sets.size());
    std::vector<metrics::VariantRuns> variants;
    for (const auto& set : sets) {
        const auto tag = perturb::variant_tag(set.variant());
        auto subset = metrics::aligned_subset(u_first, set);
        std::erase_if(subset, [&](const std::string& id) { return !qrels.has_judgments(id); });
        if (subset.empty()) {
            skipped.push_back(tag);
            continue;
        }
        metrics::VariantRuns v{tag, std::move(subset), nullptr, nullptr};
        storage.push_back(first_of(tag));
        v.perturbed_first = &storage.back();
        if (u_reranked) {
            if (auto r = reranked_of(tag)) {
                storage.push_back(std::move(*r));
                v.perturbed_reranked = &storage.back();
            }
        }
        variants.push_back(std::move(v));
    }
    return metrics::compute_gap_report(u_first, u_reranked, variants, qrels, s.ks);
}

void cmd_eval(const Settings& s, std::ostream& log) {
    Stage stage(s, "eval", {"ingest", "perturb", "retrieve"}, {"rerank"});
    if (stage.up_to_date()) {
        log << "eval: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto sets = load_perturbations(s);
    Outputs outputs;
    json skipped = json::object();
    for (const auto& name : s.retrievers) {
        const auto first_dir = s.out_dir / "retrieve" / name;
        const auto rerank_dir = s.out_dir / "rerank" / name;
        const auto u_first = retrieve::load_trec((first_dir / "unperturbed.run").string());
        std::optional<retrieve::RankedRun> u_reranked;
        if (stage.has("rerank")) {
            u_reranked = retrieve::load_trec((rerank_dir / "unperturbed.run").string());
        }
        json skipped_here = json::array();
        const auto report = gap_report_for(
            s, in.data.qrels, sets, u_first, u_reranked ? &*u_reranked : nullptr,
            [&](const std::string& tag) { return retrieve::load_trec((first_dir / (tag + ".run")).string()); },
            [&](const std::string& tag) -> std::optional<retrieve::RankedRun> {
                return retrieve::load_trec((rerank_dir / (tag + ".run")).string());
            },
            skipped_here);
        outputs[name + "/report.csv"] = metrics::render_report_csv(report);
        outputs[name + "/report.md"] = metrics::render_report_markdown(report);
        if (!skipped_here.empty()) {
            skipped[name] = skipped_here;
        }
    }
    stage.commit(outputs, {{"k", s.ks}, {"skipped_variants", skipped}}, log);
}

void cmd_normalize(const Settings& s, std::ostream& log) {
    Stage stage(s, "normalize", dependencies_for_retrieval(s, {"ingest", "perturb", "retrieve"}));
    if (stage.up_to_date()) {
        log << "normalize: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto sets = load_perturbations(s);
    auto client = make_client(s);

    std::vector<perturb::PerturbationSet> normalized_sets;
    std::string jsonl;
    json flags = json::object();
    for (const auto& set : sets) {
        std::vector<std::string> texts;
        for (const auto& e : set.entries()) {
            texts.push_back(e.text);
        }
        const auto results = mitigate::normalize_claims(texts, *client, s.chat_model, s.parallelism);
        perturb::PerturbationSet normalized(set.variant(), {results.empty() ? "" : results.front().prompt_tag,
                                                            s.chat_model, s.seed});
        std::map<std::string, std::size_t> counts;
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& e = set.entries()[i];
            jsonl += json({{"claim_id", e.claim_id},
                           {"variant", perturb::variant_tag(e.variant)},
                           {"perturbed", e.text},
                           {"normalized", results[i].text},
                           {"flag", mitigate::flag_name(results[i].flag)}})
                         .dump() +
                     "\n";
            ++counts[std::string(mitigate::flag_name(results[i].flag))];
            auto copy = e;
            copy.text = results[i].text;
            copy.edit_distance.reset();
            copy.normalized_distance.reset();
            normalized.add(std::move(copy));
        }
        flags[perturb::variant_tag(set.variant())] = counts;
        normalized_sets.push_back(std::move(normalized));
    }

    Outputs outputs = {{"normalized.jsonl", jsonl}};
    const Retrievers retrievers(s, in.data.dataset, *client);
    json skipped = json::object();
    for (const auto& [name, retriever] : retrievers.all()) {
        const auto u_first = retrieve::load_trec((s.out_dir / "retrieve" / name / "unperturbed.run").string());
        std::map<std::string, retrieve::RankedRun> runs;
        for (const auto& set : normalized_sets) {
            const auto tag = perturb::variant_tag(set.variant());
            auto run = retrieve::first_stage_run(perturbed_queries(set), *retriever, s.retrieve_j, s.parallelism);
            outputs[name + "/" + tag + ".run"] = retrieve::write_trec(run);
            runs.emplace(tag, std::move(run));
        }
        json skipped_here = json::array();
        const auto report = gap_report_for(
            s, in.data.qrels, normalized_sets, u_first, nullptr, [&](const std::string& tag) { return runs.at(tag); },
            [](const std::string&) { return std::optional<retrieve::RankedRun>{}; }, skipped_here);
        outputs[name + "/report.csv"] = metrics::render_report_csv(report);
        if (!skipped_here.empty()) {
            skipped[name] = skipped_here;
        }
    }
    stage.commit(outputs, {{"flags", flags}, {"skipped_variants", skipped}}, log);
}

void cmd_pairs(const Settings& s, std::ostream& log) {
    Stage stage(s, "pairs", {"ingest"});
    if (stage.up_to_date()) {
        log << "pairs: up to date\n";
        return;
    }
    const auto in = load_ingested(s);
    const auto ids = evaluable_subset(in.split.train, in.data.qrels);
    const auto run = perturb_claims(s, in, ids, s.pair_families);
    const auto pairs = mitigate::build_parallel_pairs(run.sets, claim_texts(in.data.dataset));
    const auto bm25 = retrieve::build_bm25(in.data.dataset.fact_checks(), s.bm25);
    const auto triples = mitigate::build_triples(ids, in.data.dataset, in.data.qrels, bm25);
    stage.commit({{"pairs.tsv", mitigate::render_pairs_tsv(pairs)},
                  {"triples.tsv", mitigate::render_triples_tsv(triples)},
                  {"perturbations.jsonl", perturb::serialize_perturbations(run.sets)}},
                 {{"claims", ids.size()},
                  {"pairs", pairs.pairs.size()},
                  {"triples", triples.size()},
                  {"failures", failures_json(run.failures)}},
                 log);
}

void cmd_report(const Settings& s, std::ostream& log) {
    Stage stage(s, "report", {"eval"});
    if (stage.up_to_date()) {
        log << "report: up to date\n";
        return;
    }
    std::string md = "# Robustness report\n\n";
    for (const auto& name : s.retrievers) {
        const auto report =
            metrics::parse_report_csv(read_file((s.out_dir / "eval" / name / "report.csv").string()));
        md += "## " + name + "\n\n" + metrics::render_report_markdown(report);
    }
    stage.commit({{"report.md", md}}, json::object(), log);
}

}  // namespace

Settings load_settings(const fs::path& config_path, const Overrides& overrides) {
    if (!fs::exists(config_path)) {
        throw ConfigError("config file not found: " + config_path.string());
    }
    json root;
    try {
        root = json::parse(read_file(config_path.string()));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + config_path.string() + " is not valid JSON: " + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError("config root must be an object");
    }
    if (overrides.seed) {
        root["seed"] = *overrides.seed;
    }
    if (!overrides.k.empty()) {
        root["eval"]["k"] = overrides.k;
    }
    if (overrides.j) {
        root["retrieve"]["j"] = *overrides.j;
        root["rerank"]["j"] = *overrides.j;
    }

    Settings s;
    s.config_path = config_path;
    const auto base = config_path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned()) {
            throw ConfigError("config key seed must be a non-negative integer");
        }
        s.seed = root["seed"].get<std::uint64_t>();
    }
    if (overrides.out) {
        s.out_dir = *overrides.out;
    } else if (root.contains("out")) {
        if (!root["out"].is_string()) {
            throw ConfigError("config key out must be a string");
        }
        s.out_dir = resolve(root["out"].get<std::string>());
    } else {
        s.out_dir = base / "out";
    }

    const auto* dataset = section(root, "dataset");
    if (!dataset) {
        throw ConfigError("missing config key dataset");
    }
    s.claims = resolve(require_string(dataset, "dataset", "claims"));
    s.factchecks = resolve(require_string(dataset, "dataset", "factchecks"));
    s.qrels = resolve(require_string(dataset, "dataset", "qrels"));
    if (auto split = get_string(dataset, "dataset", "split")) {
        s.split = resolve(*split);
    }
    if (dataset->contains("split_ratios")) {
        const auto& r = dataset->at("split_ratios");
        if (!r.is_array() || r.size() != 3 || !std::all_of(r.begin(), r.end(), [](const json& x) { return x.is_number(); })) {
            throw ConfigError("config key dataset.split_ratios must be [train, dev, test]");
        }
        s.split_ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    }

    const auto* prov = section(root, "provider");
    s.endpoint = get_string(prov, "provider", "endpoint").value_or(s.endpoint);
    if (!s.endpoint.starts_with("mock://") && !s.endpoint.starts_with("http://") &&
        !s.endpoint.starts_with("https://")) {
        throw ConfigError("config key provider.endpoint must be mock://, http:// or https://");
    }
    s.chat_model = get_string(prov, "provider", "chat_model").value_or(s.chat_model);
    s.embedding_model = get_string(prov, "provider", "embedding_model").value_or(s.embedding_model);
    s.rerank_model = get_string(prov, "provider", "rerank_model").value_or(s.rerank_model);
    s.response_path = get_string(prov, "provider", "response_path").value_or(s.response_path);
    s.parallelism = get_count(prov, "provider", "parallelism").value_or(s.parallelism);
    s.embedding_dim = get_count(prov, "provider", "embedding_dim").value_or(s.embedding_dim);
    s.timeout_ms = static_cast<std::int64_t>(get_count(prov, "provider", "timeout_ms").value_or(60000));
    if (auto dir = get_string(prov, "provider", "cache_dir")) {
        s.cache_dir = resolve(*dir).string();
    }

    const auto* pert = section(root, "perturb");
    s.perturb_families = parse_families(
        get_strings(pert, "perturb", "families").value_or(std::vector<std::string>{}), "perturb.families");
    if (s.perturb_families.empty()) {
        s.perturb_families = perturb::all_families();
    }
    s.candidates = get_count(pert, "perturb", "candidates").value_or(s.candidates);
    s.generation_temperature = get_number(pert, "perturb", "temperature").value_or(s.generation_temperature);

    const auto* ret = section(root, "retrieve");
    if (auto names = get_strings(ret, "retrieve", "retrievers")) {
        s.retrievers = *names;
    }
    if (s.retrievers.empty()) {
        throw ConfigError("config key retrieve.retrievers must not be empty");
    }
    for (const auto& r : s.retrievers) {
        if (r != "bm25" && r != "dense") {
            throw ConfigError("config key retrieve.retrievers: unknown retriever " + r);
        }
    }
    s.retrieve_j = get_count(ret, "retrieve", "j").value_or(s.retrieve_j);
    s.bm25.k1 = get_number(ret, "retrieve", "k1").value_or(s.bm25.k1);
    s.bm25.b = get_number(ret, "retrieve", "b").value_or(s.bm25.b);
    if (auto g = get_string(ret, "retrieve", "granularity")) {
        s.granularity = retrieve::parse_granularity(*g);
    }

    const auto* rr = section(root, "rerank");
    s.rerank_j = get_count(rr, "rerank", "j").value_or(s.rerank_j);
    s.sweep = get_counts(rr, "rerank", "sweep").value_or(std::vector<std::size_t>{});

    const auto* ev = section(root, "eval");
    s.ks = get_counts(ev, "eval", "k").value_or(s.ks);

    const auto* pairs = section(root, "pairs");
    s.pair_families = parse_families(
        get_strings(pairs, "pairs", "families").value_or(std::vector<std::string>{}), "pairs.families");
    if (s.pair_families.empty()) {
        s.pair_families = perturb::all_families();
    }

    s.effective = root;
    s.config_hash = sha256_hex(root.dump());
    return s;
}

void run_command(std::string_view command, const Settings& settings, std::ostream& log) {
    static const std::map<std::string_view, void (*)(const Settings&, std::ostream&)> table = {
        {"ingest", cmd_ingest}, {"perturb", cmd_perturb},     {"index", cmd_index},
        {"retrieve", cmd_retrieve}, {"rerank", cmd_rerank},   {"eval", cmd_eval},
        {"normalize", cmd_normalize}, {"pairs", cmd_pairs},   {"report", cmd_report},
    };
    const auto it = table.find(command);
    if (it == table.end()) {
        throw ConfigError("unknown command: " + std::string(command));
    }
    fs::create_directories(settings.out_dir);
    it->second(settings, log);
}

int exit_code_for_current_exception(std::ostream& err) {
    try {
        throw;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ProviderError& e) {
        err << "provider error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace claimbench::cli
