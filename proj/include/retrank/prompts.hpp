#ifndef RETRANK_PROMPTS_HPP
#define RETRANK_PROMPTS_HPP

#include <cstddef>
#include <string>

#include "retrank/core_types.hpp"

namespace retrank {

inline constexpr std::string_view kImagePlaceholder = "<image>";
inline constexpr std::string_view kEmbToken = "<emb>";

/// One-word summarization prompt handed to an embedder. `<image>` slots are
/// left literal for the embedder to bind; text is substituted inline.
struct EolPrompt {
    std::string text;
    std::size_t image_slots = 0;
};

/// Builds the prompt for a record. An instruction, when present, comes first
/// and is joined to the segments with a single space.
EolPrompt build_eol_prompt(const Record& r);

}  // namespace retrank

#endif  // RETRANK_PROMPTS_HPP
