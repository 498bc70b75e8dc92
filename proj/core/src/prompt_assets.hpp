#pragma once

#include <vector>

namespace claimbench::detail {

struct PromptAsset {
    const char* id;
    const char* version;
    const char* text;
};

const std::vector<PromptAsset>& prompt_assets();

}  // namespace claimbench::detail
