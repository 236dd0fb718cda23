#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "retrank/rank_training.hpp"
#include "test_util.hpp"

namespace retrank {
namespace {

using Ids = std::vector<DocId>;

Ids ids(std::initializer_list<const char*> names) {
    Ids out;
    for (const char* n : names) out.emplace_back(n);
    return out;
}

Ids numbered(const std::string& prefix, std::size_t n) {
    Ids out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(prefix + std::to_string(i));
    return out;
}

std::shared_ptr<const EmbeddingMatrix> shared(EmbeddingMatrix m) {
    return std::make_shared<const EmbeddingMatrix>(std::move(m));
}

double within_sigmas(double count, double n, double p) {
    return std::abs(count - n * p) / std::sqrt(n * p * (1 - p));
}

TEST(MineHardNegatives, SmallPoolKeepsRankOrder) {
    // Candidate g is the query itself, the rest fall off in a fixed order.
    const EmbeddingMatrix store(2, ids({"g", "n1", "n2", "n3", "n4"}), {1, 0, 0.9F, 0.1F, 0.7F, 0.3F, 0.5F, 0.5F, 0, 1});
    const EmbeddingMatrix q(2, ids({"q"}), {1, 0});
    Qrels qrels;
    qrels.add(DocId("q"), DocId("g"));
    const ExactIndex index(store);
    const auto sets = mine_hard_negatives(q, index, qrels, 100);
    ASSERT_EQ(sets.size(), 1U);
    EXPECT_EQ(sets[0].negatives, ids({"n1", "n2", "n3", "n4"}));
}

TEST(MineHardNegatives, RelevantOutsideDepthRemovesNothing) {
    const EmbeddingMatrix store(2, ids({"g", "n1", "n2", "n3"}), {-1, 0, 0.9F, 0.1F, 0.7F, 0.3F, 0.5F, 0.5F});
    const EmbeddingMatrix q(2, ids({"q"}), {1, 0});
    Qrels qrels;
    qrels.add(DocId("q"), DocId("g"));
    const ExactIndex index(store);
    EXPECT_EQ(mine_hard_negatives(q, index, qrels, 3)[0].negatives, ids({"n1", "n2", "n3"}));
}

TEST(MineHardNegatives, DisjointFromQrelsAndDuplicateFree) {
    const auto store = testing::random_matrix(500, 16, 1);
    const auto qs = testing::random_matrix(40, 16, 2, "q");
    Qrels qrels;
    std::mt19937_64 rng(3);
    for (const auto& q : qs.ids()) {
        for (int j = 0; j < 3; ++j) qrels.add(q, store.ids()[rng() % 500]);
    }
    const ExactIndex index(store);
    for (const auto& set : mine_hard_negatives(qs, index, qrels, 100)) {
        std::set<DocId> seen(set.negatives.begin(), set.negatives.end());
        EXPECT_EQ(seen.size(), set.negatives.size());
        for (const auto& n : set.negatives) EXPECT_FALSE(qrels.is_relevant(set.query_id, n));
        EXPECT_GE(set.negatives.size(), 97U);
    }
}

TEST(MineHardNegatives, MissingQrelsIsAnError) {
    const auto store = testing::random_matrix(10, 4, 4);
    const auto qs = testing::random_matrix(1, 4, 5, "q");
    const ExactIndex index(store);
    try {
        mine_hard_negatives(qs, index, Qrels{}, 5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingQrels);
    }
}

Qrels single_qrel() {
    Qrels q;
    q.add(DocId("q"), DocId("gt"));
    return q;
}

TEST(AssemblePointwise, OneNegativeAlwaysChosen) {
    std::mt19937_64 rng(0);
    const HardNegativeSet negs{DocId("q"), ids({"only"}), 100};
    for (int i = 0; i < 50; ++i) {
        const auto [yes, no] = assemble_pointwise(DocId("q"), single_qrel(), negs, rng);
        EXPECT_EQ(yes.candidate_id, DocId("gt"));
        EXPECT_EQ(yes.label, Label::Yes);
        EXPECT_EQ(no.candidate_id, DocId("only"));
        EXPECT_EQ(no.label, Label::No);
    }
}

TEST(AssemblePointwise, NegativeDrawIsUniform) {
    std::mt19937_64 rng(1);
    const HardNegativeSet negs{DocId("q"), numbered("n", 100), 100};
    std::map<DocId, int> counts;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) counts[assemble_pointwise(DocId("q"), single_qrel(), negs, rng).second.candidate_id]++;
    for (const auto& id : negs.negatives) EXPECT_LE(within_sigmas(counts[id], trials, 0.01), 4.0) << id.str();
}

TEST(AssemblePointwise, DeterministicAndNeedsNegatives) {
    const HardNegativeSet negs{DocId("q"), numbered("n", 10), 100};
    std::mt19937_64 a(5), b(5);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(assemble_pointwise(DocId("q"), single_qrel(), negs, a),
                  assemble_pointwise(DocId("q"), single_qrel(), negs, b));
    }
    try {
        assemble_pointwise(DocId("q"), single_qrel(), HardNegativeSet{DocId("q"), {}, 100}, a);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoNegativesAvailable);
    }
}

TEST(AssembleListwise, LengthsAndFrequencies) {
    std::mt19937_64 rng(2);
    const HardNegativeSet negs{DocId("q"), numbered("n", 20), 100};
    const int trials = 10000;
    std::map<std::size_t, int> m_counts;
    std::map<std::pair<std::size_t, std::size_t>, int> gt_counts;
    for (int i = 0; i < trials; ++i) {
        const auto s = assemble_listwise(DocId("q"), single_qrel(), negs, rng);
        const std::size_t m = s.candidates.size() - 1;
        ASSERT_GE(m, 2U);
        ASSERT_LE(m, 5U);
        ASSERT_EQ(s.candidates[s.gt_position], DocId("gt"));
        std::set<DocId> distinct(s.candidates.begin(), s.candidates.end());
        ASSERT_EQ(distinct.size(), s.candidates.size());
        m_counts[m]++;
        gt_counts[{m, s.gt_position}]++;
    }
    for (std::size_t m = 2; m <= 5; ++m) {
        EXPECT_LE(within_sigmas(m_counts[m], trials, 0.25), 4.0) << "M=" << m;
        for (std::size_t j = 0; j <= m; ++j) {
            EXPECT_LE(within_sigmas(gt_counts[{m, j}], m_counts[m], 1.0 / double(m + 1)), 4.0)
                << "M=" << m << " position " << j;
        }
    }
}

TEST(AssembleListwise, NeedsFiveNegatives) {
    std::mt19937_64 rng(3);
    try {
        assemble_listwise(DocId("q"), single_qrel(), HardNegativeSet{DocId("q"), numbered("n", 4), 100}, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientNegatives);
    }
}

// One-dimensional embeddings so that logits are set directly by the parameters.
EmbeddingLookup unit_lookup(const Ids& cands) {
    return EmbeddingLookup(shared(EmbeddingMatrix(1, ids({"q"}), {1.0F})),
                           shared(EmbeddingMatrix(1, cands, std::vector<float>(cands.size(), 1.0F))));
}

TEST(PointwiseLoss, Examples) {
    const auto emb = unit_lookup(ids({"pos", "neg"}));
    const PointwisePair yes{DocId("q"), DocId("pos"), Label::Yes};
    const PointwisePair no{DocId("q"), DocId("neg"), Label::No};
    EXPECT_NEAR(pointwise_loss(ToyScorer(1, {0.0, 0.0, 0.0}), yes, no, emb), 2 * std::log(2.0), 1e-12);
    // YES pair logits (30, -30) and NO pair logits (30, -30): YES term saturates,
    // the NO term is 60 nats, so total minus 60 is the YES contribution.
    const double l = pointwise_loss(ToyScorer(1, {0.0, 30.0, -30.0}), yes, no, emb);
    EXPECT_LT(std::abs(l - 60.0), 1e-12);
}

TEST(ListwiseLoss, Examples) {
    const auto emb = unit_lookup(ids({"a", "b", "c"}));
    const ListwiseSample s{DocId("q"), ids({"a", "b", "c"}), 1};
    EXPECT_NEAR(listwise_loss(ToyScorer(1, {0.0, 0.0, 0.0}), s, emb), std::log(3.0), 1e-12);

    // Dominant ground truth: only its embedding is large.
    const EmbeddingLookup skew(shared(EmbeddingMatrix(1, ids({"q"}), {1.0F})),
                               shared(EmbeddingMatrix(1, ids({"a", "b", "c"}), {0.0F, 30.0F, 0.0F})));
    EXPECT_LT(listwise_loss(ToyScorer(1, {1.0, 0.0, 0.0}), s, skew), 1e-12);
}

TEST(ListwiseLoss, PermutationInvariant) {
    std::mt19937_64 rng(9);
    const auto cands = testing::random_matrix(6, 4, 10, "c");
    const auto qs = testing::random_matrix(1, 4, 11, "q");
    const EmbeddingLookup emb(shared(qs), shared(cands));
    std::normal_distribution<double> g(0, 1);
    std::vector<double> params(18);
    for (auto& p : params) p = g(rng);
    const ToyScorer scorer(4, params);
    const ListwiseSample s{qs.ids()[0], {cands.ids().begin(), cands.ids().end()}, 2};
    auto perm = s;
    std::vector<std::size_t> order{5, 2, 0, 4, 1, 3};
    for (std::size_t i = 0; i < order.size(); ++i) {
        perm.candidates[i] = s.candidates[order[i]];
        if (order[i] == s.gt_position) perm.gt_position = i;
    }
    EXPECT_NEAR(listwise_loss(scorer, s, emb), listwise_loss(scorer, perm, emb), 1e-12);
}

template <typename LossFn, typename GradFn>
double worst_relative_error(const ToyScorer& scorer, LossFn loss, GradFn grad) {
    const double h = 1e-5;
    const auto analytic = grad(scorer).grad;
    double worst = 0.0;
    for (std::size_t i = 0; i < scorer.params().size(); ++i) {
        auto plus = scorer, minus = scorer;
        plus.params()[i] += h;
        minus.params()[i] -= h;
        const double numeric = (loss(plus) - loss(minus)) / (2 * h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                    std::max(1.0, std::max(std::abs(analytic[i]), std::abs(numeric))));
    }
    return worst;
}

TEST(RankLossGradients, MatchCentralDifferences) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0, 0.5);
    const auto cands = testing::random_matrix(8, 5, 13, "c");
    const auto qs = testing::random_matrix(1, 5, 14, "q");
    const EmbeddingLookup emb(shared(l2_normalize(qs)), shared(l2_normalize(cands)));
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> params(27);
        for (auto& p : params) p = g(rng);
        const ToyScorer scorer(5, params);
        const PointwisePair yes{qs.ids()[0], cands.ids()[trial % 8], Label::Yes};
        const PointwisePair no{qs.ids()[0], cands.ids()[(trial + 3) % 8], Label::No};
        EXPECT_LE(worst_relative_error(
                      scorer, [&](const ToyScorer& s) { return pointwise_loss(s, yes, no, emb); },
                      [&](const ToyScorer& s) { return pointwise_loss_and_grad(s, yes, no, emb); }),
                  1e-5);
        const ListwiseSample list{qs.ids()[0], {cands.ids()[0], cands.ids()[2], cands.ids()[5], cands.ids()[7]},
                                  static_cast<std::size_t>(trial % 4)};
        EXPECT_LE(worst_relative_error(
                      scorer, [&](const ToyScorer& s) { return listwise_loss(s, list, emb); },
                      [&](const ToyScorer& s) { return listwise_loss_and_grad(s, list, emb); }),
                  1e-5);
    }
}

TEST(RankLoss, Weights) {
    EXPECT_DOUBLE_EQ(rank_loss(0.5, 0.25), 0.75);
    EXPECT_DOUBLE_EQ(rank_loss(0.5, 0.25, 1, 0), 0.5);
    EXPECT_DOUBLE_EQ(rank_loss(0.5, 0.25, 0, 1), 0.25);
}

struct Separable {
    std::shared_ptr<const EmbeddingMatrix> queries;
    std::shared_ptr<const EmbeddingMatrix> docs;
    Qrels qrels;
    std::vector<HardNegativeSet> negs;
};

// Relevant doc is the query's rotated copy, so the identity scorer ranks it poorly
// and a trained bilinear map can recover it.
Separable separable_task() {
    const std::size_t n = 60, dim = 6;
    const auto base = l2_normalize(testing::random_matrix(n, dim, 20, "d"));
    std::vector<DocId> qids;
    std::vector<float> qdata;
    Separable t;
    for (std::size_t i = 0; i < n; ++i) {
        qids.emplace_back("q" + std::to_string(i));
        const auto r = base.row(i);
        for (std::size_t d = 0; d < dim; ++d) qdata.push_back(r[(d + 1) % dim]);
        t.qrels.add(qids.back(), base.ids()[i]);
    }
    t.queries = shared(EmbeddingMatrix(dim, qids, qdata));
    t.docs = shared(base);
    const ExactIndex index(*t.docs);
    t.negs = mine_hard_negatives(*t.queries, index, t.qrels, 20);
    return t;
}

double oracle_recall_at_1(const ToyScorer& scorer, const Separable& t) {
    const EmbeddingLookup emb(t.queries, t.docs);
    std::size_t hits = 0;
    for (const auto& q : t.queries->ids()) {
        const auto qv = emb.query(q);
        double best = -1e300;
        DocId best_id;
        for (const auto& d : t.docs->ids()) {
            const double p = scorer.p_yes(qv, emb.candidate(d));
            if (p > best || (p == best && d < best_id)) {
                best = p;
                best_id = d;
            }
        }
        hits += t.qrels.is_relevant(q, best_id);
    }
    return double(hits) / double(t.queries->size());
}

TEST(TrainReranker, ImprovesSeparableTaskAndIsDeterministic) {
    const auto t = separable_task();
    std::mt19937_64 rng(0);
    const auto examples = build_rerank_examples(t.negs, t.qrels, rng, 4);
    const EmbeddingLookup emb(t.queries, t.docs);
    RerankTrainConfig cfg;
    cfg.epochs = 40;
    const ToyScorer init(6);
    const auto a = train_reranker(examples, init, emb, cfg);
    const auto b = train_reranker(examples, init, emb, cfg);
    EXPECT_EQ(a.scorer, b.scorer);
    EXPECT_GT(oracle_recall_at_1(a.scorer, t), oracle_recall_at_1(init, t));
    EXPECT_LT(a.rank_trace.back(), a.rank_trace.front());
}

TEST(TrainReranker, PointwiseOnlyReducesPointLoss) {
    const auto t = separable_task();
    std::mt19937_64 rng(1);
    const auto examples = build_rerank_examples(t.negs, t.qrels, rng, 2);
    RerankTrainConfig cfg;
    cfg.w_list = 0.0;
    cfg.epochs = 15;
    const auto r = train_reranker(examples, ToyScorer(6), EmbeddingLookup(t.queries, t.docs), cfg);
    EXPECT_LT(r.point_trace.back(), r.point_trace.front());
}

TEST(ScorerIo, RoundTrip) {
    testing::TempDir dir("scorer");
    const ToyScorer s(2, {1, 2, 3, 4, 5, 6});
    save_scorer(dir.file("s.json"), s);
    EXPECT_EQ(load_scorer(dir.file("s.json")), s);
}

TEST(HardNegativesIo, RoundTrip) {
    testing::TempDir dir("negs");
    const std::vector<HardNegativeSet> sets{{DocId("q1"), ids({"a", "b"}), 100}, {DocId("q2"), {}, 50}};
    write_hard_negatives_jsonl(dir.file("n.jsonl"), sets);
    const auto back = read_hard_negatives_jsonl(dir.file("n.jsonl"));
    ASSERT_EQ(back.size(), 2U);
    EXPECT_EQ(back[0].negatives, sets[0].negatives);
    EXPECT_EQ(back[1].depth, 50U);
}

}  // namespace
}  // namespace retrank
