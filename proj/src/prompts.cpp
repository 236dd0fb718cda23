#include "retrank/prompts.hpp"

namespace retrank {

namespace {

constexpr std::string_view kImageSuffix = " Summarize above image in one word: ";
constexpr std::string_view kTextSuffix = " Summarize above sentence in one word: ";
constexpr std::string_view kMixedSuffix = " Summarize above image and sentence in one word: ";

}  // namespace

EolPrompt build_eol_prompt(const Record& r) {
    try {
        validate_record(r);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidRecord, e.what());
    }

    EolPrompt prompt;
    if (r.instruction && !r.instruction->empty()) {
        prompt.text += *r.instruction;
        prompt.text += ' ';
    }
    for (const auto& seg : r.segments) {
        if (const auto* t = std::get_if<TextSegment>(&seg)) {
            prompt.text += t->text;
        } else {
            prompt.text += kImagePlaceholder;
            ++prompt.image_slots;
        }
    }
    switch (r.modality) {
        case Modality::Image: prompt.text += kImageSuffix; break;
        case Modality::Text: prompt.text += kTextSuffix; break;
        case Modality::Interleaved: prompt.text += kMixedSuffix; break;
    }
    prompt.text += kEmbToken;
    return prompt;
}

}  // namespace retrank
