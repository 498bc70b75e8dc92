#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace claimbench::prompts {

/// A versioned prompt asset compiled from core/prompts/<id>.<version>.txt.
struct PromptTemplate {
    std::string id;
    std::string version;
    std::string text;

    /// "<id>@<version>", recorded in outputs and manifests.
    std::string tag() const { return id + "@" + version; }

    /// Replaces `{name}` for every name in `values` in a single pass; inserted
    /// values are not rescanned and unknown braces are left alone.
    std::string render(const std::map<std::string, std::string, std::less<>>& values) const;
};

/// Highest version of the given id. Throws std::out_of_range if unknown.
const PromptTemplate& get(std::string_view id);

std::vector<std::string> available_ids();

}  // namespace claimbench::prompts
