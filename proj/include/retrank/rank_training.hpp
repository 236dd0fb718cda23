#ifndef RETRANK_RANK_TRAINING_HPP
#define RETRANK_RANK_TRAINING_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/embed_store.hpp"
#include "retrank/retriever.hpp"
#include "retrank/scorer_gateway.hpp"

namespace retrank {

inline constexpr std::size_t kDefaultMiningDepth = 100;
inline constexpr std::size_t kMinListNegatives = 2;
inline constexpr std::size_t kMaxListNegatives = 5;

/// Non-relevant ids from a query's top-`depth` retrieval, in retrieval order.
struct HardNegativeSet {
    DocId query_id;
    std::vector<DocId> negatives;
    std::size_t depth = kDefaultMiningDepth;
};

std::vector<HardNegativeSet> mine_hard_negatives(const EmbeddingMatrix& queries, const ExactIndex& index,
                                                 const Qrels& qrels, std::size_t depth = kDefaultMiningDepth,
                                                 const PoolFilter& filter = {}, const ScanOptions& opts = {});

enum class Label { Yes, No };

struct PointwisePair {
    DocId query_id;
    DocId candidate_id;
    Label label = Label::No;
    friend bool operator==(const PointwisePair&, const PointwisePair&) = default;
};

/// M in [2, 5] negatives with the ground truth inserted at `gt_position`.
struct ListwiseSample {
    DocId query_id;
    std::vector<DocId> candidates;
    std::size_t gt_position = 0;
    friend bool operator==(const ListwiseSample&, const ListwiseSample&) = default;
};

/// YES pair on the first relevant id (byte order), NO pair on a uniformly drawn negative.
std::pair<PointwisePair, PointwisePair> assemble_pointwise(const DocId& query, const Qrels& qrels,
                                                          const HardNegativeSet& negs, std::mt19937_64& rng);

ListwiseSample assemble_listwise(const DocId& query, const Qrels& qrels, const HardNegativeSet& negs,
                                 std::mt19937_64& rng);

/// Bilinear scorer: s(q, c) = q^T A c. Pointwise logits are (s + b_yes, b_no);
/// listwise logits are s(q, c_i) per candidate. Parameters are laid out as
/// A (row-major, dim x dim) followed by b_yes and b_no.
class ToyScorer {
public:
    ToyScorer() = default;
    /// A = identity, zero biases.
    explicit ToyScorer(std::size_t dim);
    ToyScorer(std::size_t dim, std::vector<double> params);

    std::size_t dim() const noexcept { return dim_; }
    const std::vector<double>& params() const noexcept { return params_; }
    std::vector<double>& params() noexcept { return params_; }

    double bilinear(std::span<const double> q, std::span<const double> c) const;
    std::array<double, 2> pointwise_logits(std::span<const double> q, std::span<const double> c) const;
    std::vector<double> listwise_logits(std::span<const double> q, const std::vector<std::vector<double>>& cands) const;
    double p_yes(std::span<const double> q, std::span<const double> c) const;

    friend bool operator==(const ToyScorer&, const ToyScorer&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> params_;
};

/// Resolves query ids and candidate ids to double vectors. Throws UnknownId.
class EmbeddingLookup {
public:
    EmbeddingLookup(std::shared_ptr<const EmbeddingMatrix> queries, std::shared_ptr<const EmbeddingMatrix> candidates);
    std::vector<double> query(const DocId& id) const;
    std::vector<double> candidate(const DocId& id) const;
    std::size_t dim() const noexcept { return candidates_->dim(); }

private:
    static std::vector<double> fetch(const EmbeddingMatrix& m, const DocId& id);
    std::shared_ptr<const EmbeddingMatrix> queries_;
    std::shared_ptr<const EmbeddingMatrix> candidates_;
};

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// CE(YES, pos) + CE(NO, neg) over softmax of the two pointwise logits.
double pointwise_loss(const ToyScorer& scorer, const PointwisePair& yes, const PointwisePair& no,
                      const EmbeddingLookup& emb);
LossGrad pointwise_loss_and_grad(const ToyScorer& scorer, const PointwisePair& yes, const PointwisePair& no,
                                 const EmbeddingLookup& emb);

/// (M+1)-way cross-entropy of the ground-truth position.
double listwise_loss(const ToyScorer& scorer, const ListwiseSample& sample, const EmbeddingLookup& emb);
LossGrad listwise_loss_and_grad(const ToyScorer& scorer, const ListwiseSample& sample, const EmbeddingLookup& emb);

double rank_loss(double point, double list, double w_point = 1.0, double w_list = 1.0);

struct RerankExample {
    PointwisePair yes;
    PointwisePair no;
    std::optional<ListwiseSample> list;  ///< absent when fewer than 5 negatives were mined
};

/// Draws `per_query` examples for every mined query, in input order.
std::vector<RerankExample> build_rerank_examples(const std::vector<HardNegativeSet>& negs, const Qrels& qrels,
                                                 std::mt19937_64& rng, std::size_t per_query = 1);

struct RerankTrainConfig {
    double learning_rate = 4.0;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    double w_point = 1.0;
    double w_list = 1.0;
};

struct RerankTrainResult {
    ToyScorer scorer;
    std::vector<double> rank_trace;   ///< per-epoch mean weighted loss
    std::vector<double> point_trace;  ///< per-epoch mean pointwise loss
    std::vector<double> list_trace;   ///< per-epoch mean listwise loss
};

RerankTrainResult train_reranker(const std::vector<RerankExample>& examples, const ToyScorer& init,
                                 const EmbeddingLookup& emb, const RerankTrainConfig& cfg);

/// Serves a trained ToyScorer through the scorer interface: p_yes is the
/// two-way softmax of the pointwise logits, position_probs the softmax of the
/// listwise logits.
class ModelScorer final : public Scorer {
public:
    ModelScorer(ToyScorer model, EmbeddingLookup emb) : model_(std::move(model)), emb_(std::move(emb)) {}
    ScoreResponse score(const ScoreRequest& req) const override;
    std::string identity() const override { return "model"; }
    std::size_t max_inflight() const override { return 8; }

private:
    ToyScorer model_;
    EmbeddingLookup emb_;
};

void save_scorer(const std::string& path, const ToyScorer& scorer);
ToyScorer load_scorer(const std::string& path);

nlohmann::json hard_negatives_to_json(const HardNegativeSet& set);
HardNegativeSet hard_negatives_from_json(const nlohmann::json& j);
void write_hard_negatives_jsonl(const std::string& path, const std::vector<HardNegativeSet>& sets);
std::vector<HardNegativeSet> read_hard_negatives_jsonl(const std::string& path);

nlohmann::json example_to_json(const RerankExample& ex);
void write_examples_jsonl(const std::string& path, const std::vector<RerankExample>& examples);

}  // namespace retrank

#endif  // RETRANK_RANK_TRAINING_HPP
