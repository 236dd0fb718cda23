#ifndef RETRANK_EVALUATOR_HPP
#define RETRANK_EVALUATOR_HPP

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/retriever.hpp"

namespace retrank {

/// TREC qrels: `query_id 0 doc_id relevance`; relevance > 0 counts as relevant.
Qrels read_qrels(const std::string& path);
Qrels parse_qrels(const std::string& text);
void write_qrels(const std::string& path, const Qrels& qrels);

/// Hit rate: fraction of queries with any relevant id in the top k.
double recall_at_k(const std::vector<RankedList>& run, const Qrels& qrels, std::size_t k);
/// Fraction of each query's relevant ids found in the top k, averaged over queries.
double recall_fraction_at_k(const std::vector<RankedList>& run, const Qrels& qrels, std::size_t k);
/// Mean of AP@k = (1 / min(R, k)) * sum_{i<=k} rel(i) * precision@i.
double map_at_k(const std::vector<RankedList>& run, const Qrels& qrels, std::size_t k);

/// Fraction of (query, chosen) decisions whose choice is relevant.
double itm_accuracy(const std::vector<std::pair<DocId, DocId>>& decisions, const Qrels& qrels);
/// Picks the top entry of each two-candidate list. Throws WrongCandidateCount.
double itm_accuracy(const std::vector<RankedList>& run, const Qrels& qrels);

enum class PoolMode { Local, Global };

struct PoolSpec {
    PoolMode mode = PoolMode::Global;
    std::map<DocId, std::string> dataset_of;
};

/// `doc_id<TAB>dataset_tag` per line.
std::map<DocId, std::string> read_dataset_assignment(const std::string& path);
void write_dataset_assignment(const std::string& path, const std::map<DocId, std::string>& assignment);

/// Local: ids tagged `dataset`; Global: no filter. Throws UnknownDataset.
PoolFilter build_pool(const PoolSpec& spec, const std::string& dataset);

struct EvalReport {
    std::string run_id;
    std::string pool_mode = "global";
    std::size_t query_count = 0;
    /// Sorted query ids; identifies the query set for comparisons.
    std::vector<DocId> query_ids;
    std::map<std::string, double> metrics;
};

/// Computes named metrics: `recall@K`, `recall_frac@K`, `map@K`, `accuracy`.
EvalReport evaluate(const std::vector<RankedList>& run, const Qrels& qrels, const std::vector<std::string>& metrics,
                    const std::string& run_id = "run", const std::string& pool_mode = "global");

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Per-metric `b - a`. Throws IncompatibleReports on differing metric or query sets.
std::map<std::string, double> compare_runs(const EvalReport& a, const EvalReport& b);

std::vector<std::string> split_metric_list(const std::string& csv);

}  // namespace retrank

#endif  // RETRANK_EVALUATOR_HPP
