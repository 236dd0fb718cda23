#ifndef RETRANK_SYNTHETIC_HPP
#define RETRANK_SYNTHETIC_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retrank/contrastive.hpp"
#include "retrank/core_types.hpp"
#include "retrank/embed_store.hpp"

namespace retrank {

/// Seeded corpus with planted relevance. Each embedding is a signal block
/// followed by a nuisance block. Documents cluster in signal space; a query
/// sees its document's signal partly through a fixed rotation, plus fresh
/// nuisance. Cosine on raw vectors is dominated by nuisance, a shared linear
/// projection can suppress it, and only an asymmetric (bilinear) model can
/// undo the rotation.
struct SyntheticConfig {
    std::size_t n_docs = 500;
    std::size_t n_queries = 100;
    std::size_t n_train_queries = 1000;
    std::size_t signal_dim = 16;
    std::size_t nuisance_dim = 16;
    std::size_t n_clusters = 20;
    double cluster_spread = 1.0;     ///< within-cluster std relative to unit centers
    double nuisance_scale = 0.7;     ///< std of each nuisance coordinate
    double rotated_share = 0.5;      ///< weight of the rotated view in the query signal
    double query_noise = 0.05;
    std::uint64_t seed = 0;
    std::vector<std::string> datasets = {"coco", "news"};
};

struct SyntheticCorpus {
    std::vector<Record> docs;
    std::vector<Record> queries;
    std::vector<Record> train_queries;
    EmbeddingMatrix doc_emb;
    EmbeddingMatrix query_emb;
    EmbeddingMatrix train_query_emb;
    Qrels qrels;
    Qrels train_qrels;
    std::vector<TrainingPair> pairs;
    std::map<DocId, std::string> dataset_of;
};

SyntheticCorpus generate_corpus(const SyntheticConfig& cfg);

/// Writes docs.jsonl, queries.jsonl, train_queries.jsonl, doc_emb.bin,
/// query_emb.bin, train_query_emb.bin, qrels.txt, train_qrels.txt,
/// pairs.jsonl and datasets.tsv into `dir`.
void write_corpus(const std::string& dir, const SyntheticCorpus& corpus);

}  // namespace retrank

#endif  // RETRANK_SYNTHETIC_HPP
