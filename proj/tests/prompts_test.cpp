#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "retrank/prompts.hpp"

namespace retrank {
namespace {

// Each golden file holds a record, the exact expected prompt and its image slot count.
TEST(EolPrompt, MatchesGoldenFiles) {
    const std::filesystem::path dir = std::filesystem::path(RETRANK_TEST_DATA) / "golden" / "eol";
    std::size_t count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::ifstream in(entry.path());
        const auto golden = nlohmann::json::parse(in);
        const auto record = record_from_json(golden.at("record"));
        const auto prompt = build_eol_prompt(record);
        EXPECT_EQ(prompt.text, golden.at("prompt").get<std::string>()) << entry.path();
        EXPECT_EQ(prompt.image_slots, golden.at("image_slots").get<std::size_t>()) << entry.path();
        ++count;
    }
    EXPECT_GE(count, 10U);
}

TEST(EolPrompt, AlwaysEndsWithEmbToken) {
    const Record recs[] = {
        {DocId("a"), Modality::Image, {ImageRef{"x"}}, std::nullopt},
        {DocId("b"), Modality::Text, {TextSegment{""}}, std::nullopt},
        {DocId("c"), Modality::Interleaved, {TextSegment{"t"}, ImageRef{"x"}}, std::string("i")},
    };
    for (const auto& r : recs) {
        const auto text = build_eol_prompt(r).text;
        ASSERT_GE(text.size(), 5U);
        EXPECT_EQ(text.substr(text.size() - 5), "<emb>");
        EXPECT_EQ(text.find("<emb>"), text.size() - 5);
    }
}

TEST(EolPrompt, InvalidRecordIsRejected) {
    const Record bad{DocId("x"), Modality::Interleaved, {TextSegment{"only text"}}, std::nullopt};
    try {
        build_eol_prompt(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidRecord);
    }
}

TEST(EolPrompt, DependsOnlyOnContent) {
    const Record a{DocId("a"), Modality::Text, {TextSegment{"same"}}, std::nullopt};
    const Record b{DocId("b"), Modality::Text, {TextSegment{"same"}}, std::nullopt};
    EXPECT_EQ(build_eol_prompt(a).text, build_eol_prompt(b).text);
}

}  // namespace
}  // namespace retrank
