#include <gtest/gtest.h>

#include <cmath>

#include "retrank/evaluator.hpp"
#include "retrank/synthetic.hpp"
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

// A list for query `q` whose relevant docs sit at the given 1-based ranks.
RankedList list_with_hits(const std::string& q, std::size_t length, std::vector<std::size_t> hit_ranks, Qrels& qrels) {
    RankedList l{DocId(q), {}, length};
    for (std::size_t r = 1; r <= length; ++r) {
        const bool hit = std::find(hit_ranks.begin(), hit_ranks.end(), r) != hit_ranks.end();
        DocId id(q + (hit ? "_rel" : "_n") + std::to_string(r));
        if (hit) qrels.add(DocId(q), id);
        l.entries.push_back({id, 1.0 - 0.01 * double(r), static_cast<std::uint32_t>(r)});
    }
    return l;
}

TEST(Recall, Examples) {
    Qrels qrels;
    const std::vector<RankedList> at3{list_with_hits("q", 10, {3}, qrels)};
    EXPECT_DOUBLE_EQ(recall_at_k(at3, qrels, 5), 1.0);
    Qrels qrels6;
    const std::vector<RankedList> at6{list_with_hits("q", 10, {6}, qrels6)};
    EXPECT_DOUBLE_EQ(recall_at_k(at6, qrels6, 5), 0.0);
}

TEST(Recall, SevenOfTenQueriesHit) {
    Qrels qrels;
    std::vector<RankedList> run;
    for (int i = 0; i < 10; ++i) run.push_back(list_with_hits("q" + std::to_string(i), 10, {i < 7 ? 2u : 8u}, qrels));
    EXPECT_DOUBLE_EQ(recall_at_k(run, qrels, 5), 0.7);
}

TEST(Map, Examples) {
    Qrels a, b, c;
    EXPECT_DOUBLE_EQ(map_at_k({list_with_hits("q", 10, {1}, a)}, a, 5), 1.0);
    EXPECT_DOUBLE_EQ(map_at_k({list_with_hits("q", 10, {2}, b)}, b, 5), 0.5);
    EXPECT_NEAR(map_at_k({list_with_hits("q", 10, {1, 3}, c)}, c, 5), 0.5 * (1.0 + 2.0 / 3.0), 1e-15);
}

TEST(Metrics, MonotoneInKForSingleRelevant) {
    Qrels qrels;
    std::vector<RankedList> run;
    for (int i = 0; i < 12; ++i) run.push_back(list_with_hits("q" + std::to_string(i), 12, {std::size_t(i + 1)}, qrels));
    double prev_r = 0, prev_m = 0;
    for (std::size_t k = 1; k <= 12; ++k) {
        const double r = recall_at_k(run, qrels, k);
        const double m = map_at_k(run, qrels, k);
        EXPECT_GE(r, prev_r);
        EXPECT_GE(m, prev_m);
        EXPECT_LE(r, 1.0);
        EXPECT_LE(m, 1.0);
        prev_r = r;
        prev_m = m;
    }
    EXPECT_DOUBLE_EQ(prev_r, 1.0);
}

TEST(RecallFraction, CountsShareOfRelevant) {
    Qrels qrels;
    const std::vector<RankedList> run{list_with_hits("q", 10, {1, 7}, qrels)};
    EXPECT_DOUBLE_EQ(recall_fraction_at_k(run, qrels, 5), 0.5);
    EXPECT_DOUBLE_EQ(recall_at_k(run, qrels, 5), 1.0);
}

TEST(ItmAccuracy, Examples) {
    Qrels qrels;
    for (int i = 0; i < 4; ++i) qrels.add(DocId("q" + std::to_string(i)), DocId("yes"));
    const std::vector<std::pair<DocId, DocId>> all{{DocId("q0"), DocId("yes")}, {DocId("q1"), DocId("yes")}};
    EXPECT_DOUBLE_EQ(itm_accuracy(all, qrels), 1.0);
    const std::vector<std::pair<DocId, DocId>> none{{DocId("q0"), DocId("no")}};
    EXPECT_DOUBLE_EQ(itm_accuracy(none, qrels), 0.0);
    std::vector<std::pair<DocId, DocId>> three;
    for (int i = 0; i < 4; ++i) three.emplace_back(DocId("q" + std::to_string(i)), DocId(i < 3 ? "yes" : "no"));
    EXPECT_DOUBLE_EQ(itm_accuracy(three, qrels), 0.75);

    const std::vector<RankedList> run{{DocId("q0"), {{DocId("yes"), 0.7, 1}, {DocId("no"), 0.3, 2}}, 2},
                                      {DocId("q1"), {{DocId("no"), 0.6, 1}, {DocId("yes"), 0.4, 2}}, 2}};
    EXPECT_DOUBLE_EQ(itm_accuracy(run, qrels), 0.5);
    const std::vector<RankedList> bad{{DocId("q0"), {{DocId("yes"), 0.7, 1}}, 2}};
    EXPECT_EQ(code_of([&] { itm_accuracy(bad, qrels); }), ErrorCode::WrongCandidateCount);
}

TEST(Pools, LocalSelectsDatasetAndGlobalIsUnfiltered) {
    PoolSpec spec{PoolMode::Local, {{DocId("a"), "coco"}, {DocId("b"), "news"}, {DocId("c"), "coco"}}};
    const auto local = build_pool(spec, "coco");
    ASSERT_TRUE(local.allowed_ids.has_value());
    EXPECT_EQ(*local.allowed_ids, (std::set<DocId>{DocId("a"), DocId("c")}));
    spec.mode = PoolMode::Global;
    EXPECT_FALSE(build_pool(spec, "coco").allowed_ids.has_value());
    spec.mode = PoolMode::Local;
    EXPECT_EQ(code_of([&] { build_pool(spec, "wiki"); }), ErrorCode::UnknownDataset);
}

TEST(Pools, LocalNeverWorseThanGlobal) {
    SyntheticConfig cfg;
    cfg.n_docs = 200;
    cfg.n_queries = 40;
    cfg.n_train_queries = 10;
    const auto corpus = generate_corpus(cfg);
    const std::vector<std::string> metrics{"recall@1", "recall@5", "map@5"};
    const auto global = batch_retrieve(corpus.query_emb, corpus.doc_emb, 10);
    std::vector<RankedList> local;
    for (std::size_t i = 0; i < corpus.query_emb.size(); ++i) {
        const auto& q = corpus.query_emb.ids()[i];
        const auto& ds = corpus.dataset_of.at(*corpus.qrels.relevant(q).begin());
        local.push_back(retrieve_top_k(corpus.query_emb.row(i), corpus.doc_emb, 10,
                                       build_pool(PoolSpec{PoolMode::Local, corpus.dataset_of}, ds), q));
    }
    const auto g = evaluate(global, corpus.qrels, metrics, "g", "global");
    const auto l = evaluate(local, corpus.qrels, metrics, "l", "local");
    for (const auto& m : metrics) EXPECT_GE(l.metrics.at(m), g.metrics.at(m)) << m;
}

TEST(Reports, JsonRoundTripAndCompare) {
    Qrels qrels;
    std::vector<RankedList> run{list_with_hits("q1", 5, {2}, qrels), list_with_hits("q2", 5, {1}, qrels)};
    const auto r = evaluate(run, qrels, split_metric_list("recall@1, map@5,recall@5"), "base", "global");
    EXPECT_EQ(r.query_count, 2U);
    EXPECT_DOUBLE_EQ(r.metrics.at("recall@1"), 0.5);
    EXPECT_DOUBLE_EQ(r.metrics.at("map@5"), 0.75);
    const auto back = report_from_json(nlohmann::json::parse(report_to_json(r).dump()));
    EXPECT_EQ(back.metrics, r.metrics);
    EXPECT_EQ(back.query_ids, r.query_ids);
    for (const auto& [name, delta] : compare_runs(r, back)) EXPECT_EQ(delta, 0.0) << name;

    auto other = r;
    other.query_ids.pop_back();
    EXPECT_EQ(code_of([&] { compare_runs(r, other); }), ErrorCode::IncompatibleReports);
    EXPECT_EQ(code_of([&] { evaluate(run, qrels, {"ndcg@5"}); }), ErrorCode::InvalidArgument);
}

TEST(Qrels, ParseAndWrite) {
    const auto q = parse_qrels("q1 0 d1 1\nq1 0 d2 0\nq2 0 d3 2\n");
    EXPECT_TRUE(q.is_relevant(DocId("q1"), DocId("d1")));
    EXPECT_FALSE(q.is_relevant(DocId("q1"), DocId("d2")));
    EXPECT_TRUE(q.is_relevant(DocId("q2"), DocId("d3")));
    EXPECT_EQ(code_of([] { parse_qrels("q1 0 d1\n"); }), ErrorCode::FormatError);
    testing::TempDir dir("qrels");
    write_qrels(dir.file("q.txt"), q);
    EXPECT_EQ(read_qrels(dir.file("q.txt")).all(), q.all());
}

}  // namespace
}  // namespace retrank
