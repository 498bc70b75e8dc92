#include "claimbench/prompts.hpp"

#include "prompt_assets.hpp"

#include <stdexcept>

namespace claimbench::prompts {

namespace {

int version_number(std::string_view version) { return std::stoi(std::string(version.substr(1))); }

const std::map<std::string, PromptTemplate, std::less<>>& registry() {
    static const auto templates = [] {
        std::map<std::string, PromptTemplate, std::less<>> latest;
        for (const auto& asset : detail::prompt_assets()) {
            PromptTemplate t{asset.id, asset.version, asset.text};
            auto it = latest.find(t.id);
            if (it == latest.end() || version_number(it->second.version) < version_number(t.version)) {
                latest.insert_or_assign(t.id, std::move(t));
            }
        }
        return latest;
    }();
    return templates;
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find('{', pos);
        if (open == std::string::npos) {
            break;
        }
        const auto close = text.find('}', open + 1);
        if (close == std::string::npos) {
            break;
        }
        const std::string_view name(text.data() + open + 1, close - open - 1);
        out.append(text, pos, open - pos);
        if (auto it = values.find(name); it != values.end()) {
            out += it->second;
            pos = close + 1;
        } else {
            out.push_back('{');
            pos = open + 1;
        }
    }
    out.append(text, pos, std::string::npos);
    return out;
}

const PromptTemplate& get(std::string_view id) {
    const auto& templates = registry();
    if (auto it = templates.find(id); it != templates.end()) {
        return it->second;
    }
    throw std::out_of_range("unknown prompt template: " + std::string(id));
}

std::vector<std::string> available_ids() {
    std::vector<std::string> ids;
    for (const auto& [id, t] : registry()) {
        ids.push_back(id);
    }
    return ids;
}

}  // namespace claimbench::prompts
