#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retrank/retriever.hpp"
#include "test_util.hpp"

namespace retrank {
namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::InvalidArgument;
}

// Brute force: every cosine with a plain loop, full sort, prefix.
std::vector<ScoredCandidate> naive_top_k(std::span<const float> q, const EmbeddingMatrix& store, std::size_t k) {
    std::vector<ScoredCandidate> all;
    for (std::size_t i = 0; i < store.size(); ++i) {
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t d = 0; d < store.dim(); ++d) {
            const double x = q[d];
            const double y = store.row(i)[d];
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
        all.push_back({store.ids()[i], std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0), 0});
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

TEST(Cosine, Examples) {
    const std::vector<float> x{1, 0}, y{0, 1}, z{-1, 0};
    EXPECT_DOUBLE_EQ(cosine(std::span<const float>(x), std::span<const float>(x)), 1.0);
    EXPECT_DOUBLE_EQ(cosine(std::span<const float>(x), std::span<const float>(y)), 0.0);
    EXPECT_DOUBLE_EQ(cosine(std::span<const float>(x), std::span<const float>(z)), -1.0);
    const std::vector<float> zero{0, 0}, three{1, 2, 3};
    EXPECT_EQ(code_of([&] { cosine(std::span<const float>(x), std::span<const float>(zero)); }),
              ErrorCode::ZeroVector);
    EXPECT_EQ(code_of([&] { cosine(std::span<const float>(x), std::span<const float>(three)); }),
              ErrorCode::DimMismatch);
}

TEST(RetrieveTopK, SelfMatchIsFirst) {
    const auto store = testing::random_matrix(30, 8, 5);
    const auto q = store.row(3);
    const auto list = retrieve_top_k(q, store, 1);
    ASSERT_EQ(list.entries.size(), 1U);
    EXPECT_EQ(list.entries[0].id, store.ids()[3]);
    EXPECT_NEAR(list.entries[0].score, 1.0, 1e-12);
    EXPECT_EQ(list.entries[0].rank, 1U);
}

TEST(RetrieveTopK, KLargerThanPoolReturnsEverything) {
    const auto store = testing::random_matrix(4, 3, 6);
    const auto list = retrieve_top_k(store.row(0), store, 10);
    EXPECT_EQ(list.entries.size(), 4U);
    EXPECT_EQ(list.pool_size, 4U);
    validate_ranked_list(list);
}

TEST(RetrieveTopK, MatchesNaiveOracle) {
    const auto store = testing::random_matrix(200, 16, 11);
    const auto queries = testing::random_matrix(50, 16, 12, "q");
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto got = retrieve_top_k(queries.row(qi), store, 10);
        const auto want = naive_top_k(queries.row(qi), store, 10);
        ASSERT_EQ(got.entries.size(), want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            EXPECT_EQ(got.entries[i].id, want[i].id);
            EXPECT_EQ(got.entries[i].rank, i + 1);
            EXPECT_NEAR(got.entries[i].score, want[i].score, 1e-12);
        }
    }
}

TEST(RetrieveTopK, TiesBreakByIdAscending) {
    // Identical rows score identically; order must fall back to ids.
    const EmbeddingMatrix store(2, {DocId("c"), DocId("a"), DocId("b"), DocId("x")}, {1, 1, 1, 1, 1, 1, -1, 0});
    const std::vector<float> q{2, 2};
    const auto list = retrieve_top_k(q, store, 3);
    EXPECT_EQ(list.entries[0].id, DocId("a"));
    EXPECT_EQ(list.entries[1].id, DocId("b"));
    EXPECT_EQ(list.entries[2].id, DocId("c"));
}

TEST(RetrieveTopK, SmallerKIsPrefix) {
    const auto store = testing::random_matrix(300, 12, 21);
    const auto q = testing::random_matrix(1, 12, 22, "q");
    const auto full = retrieve_top_k(q.row(0), store, 50);
    for (std::size_t k : {1, 5, 17, 49}) {
        const auto part = retrieve_top_k(q.row(0), store, k);
        ASSERT_EQ(part.entries.size(), k);
        EXPECT_TRUE(std::equal(part.entries.begin(), part.entries.end(), full.entries.begin()));
    }
}

TEST(RetrieveTopK, QueryScaleInvariant) {
    const auto store = testing::random_matrix(100, 8, 31);
    auto q = testing::random_matrix(1, 8, 32, "q");
    std::vector<float> scaled(q.row(0).begin(), q.row(0).end());
    for (auto& x : scaled) {
        x *= 8.0F;  // power of two keeps float scaling exact
    }
    const auto a = retrieve_top_k(q.row(0), store, 20);
    const auto b = retrieve_top_k(scaled, store, 20);
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(a.entries[i].id, b.entries[i].id);
        EXPECT_NEAR(a.entries[i].score, b.entries[i].score, 1e-12);
    }
}

TEST(RetrieveTopK, FilterIsSound) {
    const auto store = testing::random_matrix(100, 8, 41);
    std::set<DocId> allowed;
    for (std::size_t i = 0; i < 100; i += 3) {
        allowed.insert(store.ids()[i]);
    }
    const auto q = testing::random_matrix(1, 8, 42, "q");
    const auto list = retrieve_top_k(q.row(0), store, 200, PoolFilter::only(allowed));
    EXPECT_EQ(list.entries.size(), allowed.size());
    EXPECT_EQ(list.pool_size, allowed.size());
    for (const auto& e : list.entries) {
        EXPECT_TRUE(allowed.count(e.id));
    }
}

TEST(RetrieveTopK, Errors) {
    const auto store = testing::random_matrix(10, 4, 51);
    const auto q = store.row(0);
    EXPECT_EQ(code_of([&] { retrieve_top_k(q, store, 0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { retrieve_top_k(q, store, 3, PoolFilter::only({})); }), ErrorCode::EmptyPool);
    EXPECT_EQ(code_of([&] { retrieve_top_k(q, store, 3, PoolFilter::only({DocId("nope")})); }),
              ErrorCode::FilterNotSubset);
    const std::vector<float> wrong(5, 1.0F);
    EXPECT_EQ(code_of([&] { retrieve_top_k(wrong, store, 3); }), ErrorCode::DimMismatch);
    const std::vector<float> zero(4, 0.0F);
    EXPECT_EQ(code_of([&] { retrieve_top_k(zero, store, 3); }), ErrorCode::ZeroVector);
}

TEST(BatchRetrieve, SingleQueryEqualsRetrieveTopK) {
    const auto store = testing::random_matrix(50, 8, 61);
    const auto q = testing::random_matrix(1, 8, 62, "q");
    const auto batch = batch_retrieve(q, store, 7);
    ASSERT_EQ(batch.size(), 1U);
    EXPECT_EQ(batch[0], retrieve_top_k(q.row(0), store, 7, {}, q.ids()[0]));
}

TEST(BatchRetrieve, PermutingQueriesPermutesOutputs) {
    const auto store = testing::random_matrix(80, 8, 71);
    const auto qs = testing::random_matrix(6, 8, 72, "q");
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<DocId> ids;
    std::vector<float> data;
    for (auto p : perm) {
        ids.push_back(qs.ids()[p]);
        data.insert(data.end(), qs.row(p).begin(), qs.row(p).end());
    }
    const EmbeddingMatrix permuted(8, ids, data);
    const auto a = batch_retrieve(qs, store, 5);
    const auto b = batch_retrieve(permuted, store, 5);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        EXPECT_EQ(b[i], a[perm[i]]);
    }
}

TEST(BatchRetrieve, ThreadCountAndChunkingDoNotChangeOutput) {
    const auto store = testing::random_matrix(5000, 16, 81);
    const auto qs = testing::random_matrix(9, 16, 82, "q");
    const auto reference = batch_retrieve(qs, store, 25, {}, ScanOptions{1, 8192});
    for (std::size_t threads : {2, 3, 8}) {
        for (std::size_t chunk : {1, 7, 333, 100000}) {
            EXPECT_EQ(batch_retrieve(qs, store, 25, {}, ScanOptions{threads, chunk}), reference)
                << threads << " threads, chunk " << chunk;
        }
    }
}

TEST(RunFile, RoundTripAndTag) {
    const auto store = testing::random_matrix(40, 4, 91);
    const auto qs = testing::random_matrix(3, 4, 92, "q");
    const auto lists = batch_retrieve(qs, store, 5);
    const auto text = format_run(lists, "mytag");
    EXPECT_EQ(text.substr(0, text.find('\n')).substr(0, 10), "q000000 Q0");
    std::string tag;
    const auto back = parse_run(text, &tag);
    EXPECT_EQ(tag, "mytag");
    ASSERT_EQ(back.size(), 3U);
    for (std::size_t q = 0; q < 3; ++q) {
        ASSERT_EQ(back[q].entries.size(), 5U);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(back[q].entries[i].id, lists[q].entries[i].id);
            EXPECT_NEAR(back[q].entries[i].score, lists[q].entries[i].score, 5e-7);
        }
    }
}

TEST(RunFile, MalformedLinesAreRejected) {
    EXPECT_EQ(code_of([] { parse_run("q1 Q0 d1 1\n"); }), ErrorCode::BadRunFile);
    EXPECT_EQ(code_of([] { parse_run("q1 Q0 d1 x 0.5 t\n"); }), ErrorCode::BadRunFile);
    EXPECT_EQ(code_of([] { parse_run("q1 Q0 d1 1 0.5 t\nq1 Q0 d1 2 0.4 t\n"); }), ErrorCode::BadRunFile);
    EXPECT_EQ(code_of([] { parse_run("q1 Q0 d1 1 0.5 t\nq1 Q0 d2 3 0.4 t\n"); }), ErrorCode::BadRunFile);
}

}  // namespace
}  // namespace retrank
