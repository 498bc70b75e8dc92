#include "claimbench/metrics.hpp"

#include "claimbench/common.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace claimbench::metrics {

namespace {

std::string fixed6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    if (std::string_view(buf) == "-0.000000") {
        return "0.000000";
    }
    return buf;
}

std::string signed2(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.2f", x);
    if (std::string_view(buf) == "-0.00") {
        return "+0.00";
    }
    return buf;
}

}  // namespace

double average_precision_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                              std::size_t k) {
    if (relevant.empty()) {
        throw std::invalid_argument("average_precision_at_k: empty relevant set");
    }
    if (k == 0) {
        throw std::invalid_argument("average_precision_at_k: k must be at least 1");
    }
    const auto depth = std::min(k, ranking.size());
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (relevant.contains(ranking[i])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(std::min(relevant.size(), k));
}

double average_precision_at_k(const retrieve::Ranking& ranking, const std::set<std::string>& relevant, std::size_t k) {
    std::vector<std::string> ids;
    ids.reserve(std::min(k, ranking.size()));
    for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
        ids.push_back(ranking[i].id);
    }
    return average_precision_at_k(ids, relevant, k);
}

double map_at_k(const retrieve::RankedRun& run, const corpus::RelevanceJudgments& qrels, std::size_t k,
                const ClaimSet* subset) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [claim_id, ranking] : run.rankings) {
        if (subset && !subset->contains(claim_id)) {
            continue;
        }
        if (!qrels.has_judgments(claim_id)) {
            continue;
        }
        sum += average_precision_at_k(ranking, qrels.relevant(claim_id), k);
        ++n;
    }
    if (n == 0) {
        throw DataError("MAP@" + std::to_string(k) + ": no claim in run " + run.run_tag() + " has judgments");
    }
    return sum / static_cast<double>(n);
}

ClaimSet aligned_subset(const retrieve::RankedRun& unperturbed, const perturb::PerturbationSet& perturbations) {
    ClaimSet subset;
    for (const auto& entry : perturbations.entries()) {
        if (entry.valid && unperturbed.find(entry.claim_id)) {
            subset.insert(entry.claim_id);
        }
    }
    return subset;
}

ClaimSet effective_subset(const retrieve::RankedRun& a, const retrieve::RankedRun& b,
                          const corpus::RelevanceJudgments& qrels, const ClaimSet& subset) {
    ClaimSet out;
    for (const auto& id : subset) {
        if (a.find(id) && b.find(id) && qrels.has_judgments(id)) {
            out.insert(id);
        }
    }
    if (out.empty()) {
        throw DataError("gap between " + a.run_tag() + " and " + b.run_tag() +
                        ": aligned subset is empty (no claim is in both runs, the subset and qrels)");
    }
    return out;
}

GapValue map_gap(const retrieve::RankedRun& before, const retrieve::RankedRun& after,
                 const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k) {
    const auto eff = effective_subset(before, after, qrels, subset);
    GapValue g;
    g.map_before = map_at_k(before, qrels, k, &eff);
    g.map_after = map_at_k(after, qrels, k, &eff);
    g.delta_pp = 100.0 * (g.map_after - g.map_before);
    g.subset_size = eff.size();
    return g;
}

double retrieval_gap(const retrieve::RankedRun& u_run, const retrieve::RankedRun& p_run,
                     const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k) {
    return map_gap(u_run, p_run, qrels, subset, k).delta_pp;
}

double recovery_gap(const retrieve::RankedRun& p_first, const retrieve::RankedRun& p_reranked,
                    const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k) {
    return map_gap(p_first, p_reranked, qrels, subset, k).delta_pp;
}

double overall_gap(const retrieve::RankedRun& u_reranked, const retrieve::RankedRun& p_reranked,
                   const corpus::RelevanceJudgments& qrels, const ClaimSet& subset, std::size_t k) {
    return map_gap(u_reranked, p_reranked, qrels, subset, k).delta_pp;
}

std::string_view gap_stage_name(GapStage s) noexcept {
    switch (s) {
        case GapStage::first_stage: return "first_stage";
        case GapStage::rerank_recovery: return "rerank_recovery";
        case GapStage::overall: return "overall";
    }
    return "";
}

GapStage parse_gap_stage(std::string_view name) {
    for (auto s : {GapStage::first_stage, GapStage::rerank_recovery, GapStage::overall}) {
        if (gap_stage_name(s) == name) {
            return s;
        }
    }
    throw DataError("unknown gap stage: " + std::string(name));
}

GapReport compute_gap_report(const retrieve::RankedRun& u_first, const retrieve::RankedRun* u_reranked,
                             std::span<const VariantRuns> variants, const corpus::RelevanceJudgments& qrels,
                             std::span<const std::size_t> ks) {
    GapReport report;
    auto emit = [&](const std::string& variant, GapStage stage, const retrieve::RankedRun& before,
                    const retrieve::RankedRun& after, const ClaimSet& subset) {
        for (const auto k : ks) {
            const auto g = map_gap(before, after, qrels, subset, k);
            report.rows.push_back({variant, stage, k, g.subset_size, g.map_before, g.map_after, g.delta_pp});
        }
    };
    for (const auto& v : variants) {
        if (!v.perturbed_first) {
            throw std::invalid_argument("variant " + v.variant + " has no first-stage run");
        }
        emit(v.variant, GapStage::first_stage, u_first, *v.perturbed_first, v.subset);
        if (u_reranked && v.perturbed_reranked) {
            emit(v.variant, GapStage::rerank_recovery, *v.perturbed_first, *v.perturbed_reranked, v.subset);
            emit(v.variant, GapStage::overall, *u_reranked, *v.perturbed_reranked, v.subset);
        }
    }
    return report;
}

std::string render_report_csv(const GapReport& report) {
    std::string out = "variant,stage,k,subset_size,map_unperturbed,map_perturbed,delta_pp\n";
    for (const auto& r : report.rows) {
        out += r.variant + "," + std::string(gap_stage_name(r.stage)) + "," + std::to_string(r.k) + "," +
               std::to_string(r.subset_size) + "," + fixed6(r.map_unperturbed) + "," + fixed6(r.map_perturbed) + "," +
               fixed6(r.delta_pp) + "\n";
    }
    return out;
}

std::string render_report_markdown(const GapReport& report) {
    std::vector<std::size_t> ks;
    std::vector<std::string> variants;
    for (const auto& r : report.rows) {
        if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) {
            ks.push_back(r.k);
        }
        if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
            variants.push_back(r.variant);
        }
    }
    std::sort(ks.begin(), ks.end());
    std::map<std::tuple<std::string, GapStage, std::size_t>, const GapRow*> cell;
    for (const auto& r : report.rows) {
        cell[{r.variant, r.stage, r.k}] = &r;
    }
    const std::pair<GapStage, std::string_view> blocks[] = {
        {GapStage::first_stage, "First-stage retrieval gap (pp, perturbed minus unperturbed)"},
        {GapStage::rerank_recovery, "Reranking recovery (pp, reranked minus first-stage, perturbed claims)"},
        {GapStage::overall, "Overall gap after reranking (pp, perturbed minus unperturbed)"},
    };
    std::string out;
    for (const auto& [stage, title] : blocks) {
        out += "### " + std::string(title) + "\n\n| variant | n |";
        for (const auto k : ks) {
            out += " MAP@" + std::to_string(k) + " |";
        }
        out += "\n|---|---:|";
        for (std::size_t i = 0; i < ks.size(); ++i) {
            out += "---:|";
        }
        out += "\n";
        for (const auto& v : variants) {
            std::string n = "-";
            std::string row;
            for (const auto k : ks) {
                const auto it = cell.find({v, stage, k});
                if (it == cell.end()) {
                    row += " - |";
                } else {
                    n = std::to_string(it->second->subset_size);
                    row += " " + signed2(it->second->delta_pp) + " |";
                }
            }
            out += "| " + v + " | " + n + " |" + row + "\n";
        }
        out += "\n";
    }
    return out;
}

GapReport parse_report_csv(std::string_view csv) {
    GapReport report;
    std::istringstream in{std::string(csv)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1) {
            if (line != "variant,stage,k,subset_size,map_unperturbed,map_perturbed,delta_pp") {
                throw DataError("report.csv:1: unexpected header");
            }
            continue;
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::istringstream fields(line);
        for (std::string part; std::getline(fields, part, ',');) {
            f.push_back(part);
        }
        if (f.size() != 7) {
            throw DataError("report.csv:" + std::to_string(line_no) + ": expected 7 columns");
        }
        try {
            report.rows.push_back({f[0], parse_gap_stage(f[1]), std::stoul(f[2]), std::stoul(f[3]), std::stod(f[4]),
                                   std::stod(f[5]), std::stod(f[6])});
        } catch (const std::logic_error& e) {
            throw DataError("report.csv:" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return report;
}

}  // namespace claimbench::metrics
