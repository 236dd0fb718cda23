#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "retrank/core_types.hpp"

namespace retrank {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::InvalidArgument;
}

TEST(ValidateRecord, MinimalTextRecordIsValid) {
    EXPECT_NO_THROW(validate_record(Record{DocId("q1"), Modality::Text, {TextSegment{"cat"}}, std::nullopt}));
}

TEST(ValidateRecord, RejectsEmptyId) {
    const Record r{DocId(""), Modality::Text, {TextSegment{"cat"}}, std::nullopt};
    EXPECT_EQ(code_of([&] { validate_record(r); }), ErrorCode::EmptyId);
}

TEST(ValidateRecord, RejectsEmptySegments) {
    const Record r{DocId("x"), Modality::Text, {}, std::nullopt};
    EXPECT_EQ(code_of([&] { validate_record(r); }), ErrorCode::EmptySegments);
}

TEST(ValidateRecord, InterleavedNeedsBothModalities) {
    const Record r{DocId("x"), Modality::Interleaved, {TextSegment{"a"}}, std::nullopt};
    EXPECT_EQ(code_of([&] { validate_record(r); }), ErrorCode::InterleavedMissingModality);
}

TEST(ValidateRecord, ModalityMustMatchSegments) {
    const Record text_with_image{DocId("x"), Modality::Text, {ImageRef{"a.png"}}, std::nullopt};
    const Record image_with_text{DocId("y"), Modality::Image, {TextSegment{"a"}}, std::nullopt};
    EXPECT_EQ(code_of([&] { validate_record(text_with_image); }), ErrorCode::ModalityMismatch);
    EXPECT_EQ(code_of([&] { validate_record(image_with_text); }), ErrorCode::ModalityMismatch);
}

TEST(ValidateRecord, CandidatesCannotCarryInstructions) {
    const Record r{DocId("x"), Modality::Text, {TextSegment{"a"}}, std::string("find")};
    EXPECT_NO_THROW(validate_record(r, RecordRole::Query));
    EXPECT_EQ(code_of([&] { validate_record(r, RecordRole::Candidate); }), ErrorCode::InstructionOnCandidate);
}

TEST(RecordJson, RoundTrip) {
    const Record r{DocId("m1"), Modality::Interleaved, {ImageRef{"a.png"}, TextSegment{"dog"}}, std::string("go")};
    EXPECT_EQ(record_from_json(record_to_json(r)), r);
}

TEST(RecordJson, BadJsonIsFormatError) {
    EXPECT_EQ(code_of([] { record_from_json(nlohmann::json{{"id", "x"}}); }), ErrorCode::FormatError);
    EXPECT_EQ(code_of([] {
                  record_from_json(
                      nlohmann::json{{"id", "x"}, {"modality", "audio"}, {"segments", nlohmann::json::array()}});
              }),
              ErrorCode::FormatError);
}

TEST(RanksBefore, IsStrictTotalOrderOnDistinctCandidates) {
    std::vector<ScoredCandidate> v = {
        {DocId("b"), 0.5, 0}, {DocId("a"), 0.5, 0}, {DocId("c"), 0.9, 0}, {DocId("a0"), 0.5, 0}, {DocId("z"), -1, 0}};
    for (const auto& x : v) {
        EXPECT_FALSE(ranks_before(x, x));
        for (const auto& y : v) {
            if (!(x == y)) {
                EXPECT_NE(ranks_before(x, y), ranks_before(y, x));
            }
        }
    }
    sort_and_rank(v);
    std::vector<std::string> ids;
    for (const auto& e : v) {
        ids.push_back(e.id.str());
    }
    EXPECT_EQ(ids, (std::vector<std::string>{"c", "a", "a0", "b", "z"}));
    EXPECT_EQ(v.back().rank, 5U);
}

TEST(DocIdOrder, IsByteWise) {
    EXPECT_LT(DocId("Z"), DocId("a"));
    EXPECT_LT(DocId("a"), DocId("\xC3\xA9"));  // 0xC3 sorts after ASCII
}

TEST(RankedList, ValidationCatchesBadLists) {
    RankedList ok{DocId("q"), {{DocId("a"), 0.9, 1}, {DocId("b"), 0.8, 2}}, 3};
    EXPECT_NO_THROW(validate_ranked_list(ok));

    auto gap = ok;
    gap.entries[1].rank = 3;
    EXPECT_EQ(code_of([&] { validate_ranked_list(gap); }), ErrorCode::InvalidArgument);

    auto dup = ok;
    dup.entries[1].id = DocId("a");
    EXPECT_EQ(code_of([&] { validate_ranked_list(dup); }), ErrorCode::DuplicateId);

    auto too_long = ok;
    too_long.pool_size = 1;
    EXPECT_EQ(code_of([&] { validate_ranked_list(too_long); }), ErrorCode::InvalidArgument);

    auto unordered = ok;
    std::swap(unordered.entries[0].score, unordered.entries[1].score);
    EXPECT_EQ(code_of([&] { validate_ranked_list(unordered); }), ErrorCode::InvalidArgument);
    EXPECT_NO_THROW(validate_ranked_list(unordered, false));
}

TEST(RankedList, JsonRoundTripProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = rng() % 20;
        std::vector<ScoredCandidate> entries;
        for (std::size_t i = 0; i < n; ++i) {
            entries.push_back({DocId("d" + std::to_string(rng() % 1000) + "_" + std::to_string(i)), u(rng), 0});
        }
        sort_and_rank(entries);
        const RankedList list{DocId("q" + std::to_string(trial)), entries, n + rng() % 5};
        validate_ranked_list(list);
        EXPECT_EQ(ranked_list_from_json(nlohmann::json::parse(ranked_list_to_json(list).dump())), list);
    }
}

TEST(Qrels, RelevantThrowsForUnknownQuery) {
    Qrels q;
    q.add(DocId("q1"), DocId("d1"));
    EXPECT_TRUE(q.is_relevant(DocId("q1"), DocId("d1")));
    EXPECT_FALSE(q.is_relevant(DocId("q2"), DocId("d1")));
    EXPECT_EQ(q.relevant(DocId("q1")).size(), 1U);
    EXPECT_EQ(code_of([&] { q.relevant(DocId("q2")); }), ErrorCode::MissingQrels);
}

}  // namespace
}  // namespace retrank
