#ifndef RETRANK_CONTRASTIVE_HPP
#define RETRANK_CONTRASTIVE_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/embed_store.hpp"
#include "retrank/matrix.hpp"

namespace retrank {

/// Row i of `positives` is the positive for row i of `queries`; every other
/// row of `positives` is an in-batch negative for it.
struct ContrastiveBatch {
    Matrix queries;
    Matrix positives;
    double temperature = 0.05;
};

/// Linear map x -> normalize(x W) applied to both queries and candidates.
struct ProjectionHead {
    Matrix weights;  // D x D'

    static ProjectionHead identity(std::size_t in_dim, std::size_t out_dim) {
        return {Matrix::identity(in_dim, out_dim)};
    }
    std::size_t in_dim() const noexcept { return weights.rows(); }
    std::size_t out_dim() const noexcept { return weights.cols(); }
};

/// InfoNCE with cosine similarity over in-batch negatives:
///   L = -(1/B) sum_n log softmax_m(cos(q_n, c_m) / tau)[n]
double info_nce_loss(const ContrastiveBatch& batch);

/// Loss of the batch after projecting both sides through the head.
double info_nce_loss(const ContrastiveBatch& batch, const ProjectionHead& head);

struct HeadLossGrad {
    double loss = 0.0;
    Matrix grad;  // dL/dW, same shape as the head weights
};

HeadLossGrad info_nce_loss_and_grad(const ContrastiveBatch& batch, const ProjectionHead& head);
Matrix info_nce_grad(const ContrastiveBatch& batch, const ProjectionHead& head);

/// Rows of x projected through the head and L2-normalized. Throws ZeroVector.
Matrix project(const Matrix& x, const ProjectionHead& head);
EmbeddingMatrix apply_head(const ProjectionHead& head, const EmbeddingMatrix& m);

struct TrainConfig {
    double temperature = 0.05;
    double learning_rate = 1e-2;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t out_dim = 0;  ///< 0 keeps the input dimension
};

void validate(const TrainConfig& cfg);

/// (query, positive) pair. `stage` is "pretrain" or "instruction".
struct TrainingPair {
    DocId query_id;
    DocId positive_id;
    std::string stage = "instruction";
};

std::vector<TrainingPair> read_pairs_jsonl(const std::string& path);
void write_pairs_jsonl(const std::string& path, const std::vector<TrainingPair>& pairs);

struct ProjectionTrainResult {
    ProjectionHead head;
    std::vector<double> loss_trace;  ///< mean batch loss per epoch
};

/// Seeded shuffled mini-batch gradient descent at a constant learning rate.
/// Query ids resolve against `queries`, positive ids against `candidates`.
/// Starts from `init` when given, else from the (truncated) identity.
ProjectionTrainResult train_projection(const std::vector<TrainingPair>& pairs, const EmbeddingMatrix& queries,
                                       const EmbeddingMatrix& candidates, const TrainConfig& cfg,
                                       const ProjectionHead* init = nullptr);

ProjectionTrainResult train_projection(const std::vector<TrainingPair>& pairs, const EmbeddingMatrix& base,
                                       const TrainConfig& cfg);

/// Runs the "pretrain" pairs first, then the "instruction" pairs, continuing
/// from the same head; the traces are concatenated.
ProjectionTrainResult train_projection_staged(const std::vector<TrainingPair>& pairs, const EmbeddingMatrix& queries,
                                              const EmbeddingMatrix& candidates, const TrainConfig& cfg);

void save_head(const std::string& path, const ProjectionHead& head);
ProjectionHead load_head(const std::string& path);

/// CSV `epoch,mean_loss`, epochs numbered from 1.
std::string format_loss_trace(const std::vector<double>& trace);

}  // namespace retrank

#endif  // RETRANK_CONTRASTIVE_HPP
