#ifndef RETRANK_RERANKER_HPP
#define RETRANK_RERANKER_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/scorer_gateway.hpp"

namespace retrank {

inline constexpr std::size_t kDefaultRerankDepth = 50;
inline constexpr double kDefaultAlpha = 0.5;

struct RerankConfig {
    ScoreMode mode = ScoreMode::Pointwise;
    std::size_t depth = kDefaultRerankDepth;
    double alpha = kDefaultAlpha;
    /// Min-max scale retrieval scores over the reranked block before fusion.
    bool normalize_ret = false;
};

/// alpha * s_ret + (1 - alpha) * s_rank. Throws AlphaOutOfRange.
double fuse(double s_ret, double s_rank, double alpha);

/// Renormalizes serial-number probabilities to sum to 1.
std::vector<double> listwise_select(std::span<const double> position_probs);

using RecordResolver = std::function<Record(const DocId&)>;

/// Scores the top `cfg.depth` entries of `c1`, fuses with their retrieval
/// scores and reorders that block by fused score (ties keep retrieval order).
/// Entries past the block keep their order and retrieval score.
RankedList rerank(const Record& query, const RankedList& c1, const ScorerHandle& scorer, const RerankConfig& cfg,
                  const RecordResolver& candidates = placeholder_record, RequestIdSource* ids = nullptr);

/// Reranks every list; `queries` resolves each list's query record.
std::vector<RankedList> rerank_run(const std::vector<RankedList>& run, const ScorerHandle& scorer,
                                   const RerankConfig& cfg, const RecordResolver& queries = placeholder_record,
                                   const RecordResolver& candidates = placeholder_record);

}  // namespace retrank

#endif  // RETRANK_RERANKER_HPP
