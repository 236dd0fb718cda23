#ifndef RETRANK_RETRIEVER_HPP
#define RETRANK_RETRIEVER_HPP

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/embed_store.hpp"

namespace retrank {

/// Restricts retrieval to a subset of the store. Absent means the whole store.
struct PoolFilter {
    std::optional<std::set<DocId>> allowed_ids;

    static PoolFilter all() { return {}; }
    static PoolFilter only(std::set<DocId> ids) { return {std::move(ids)}; }
};

/// Cosine similarity with 64-bit accumulation, clamped to [-1, 1].
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(std::span<const double> a, std::span<const double> b);

/// Dot product of float vectors accumulated in double. The summation order is
/// fixed (four interleaved partial sums) so results never depend on threading.
double dot_f64(const float* a, const float* b, std::size_t dim);

struct ScanOptions {
    std::size_t threads = 1;         ///< 0 = hardware concurrency
    std::size_t chunk_rows = 8192;   ///< candidate rows per work unit
};

/// Exact cosine top-k over an immutable store. Row norms are computed once.
class ExactIndex {
public:
    explicit ExactIndex(const EmbeddingMatrix& store);

    const EmbeddingMatrix& store() const noexcept { return *store_; }

    RankedList search(std::span<const float> query, const DocId& query_id, std::size_t k,
                      const PoolFilter& filter = {}, const ScanOptions& opts = {}) const;

    /// Element-wise equal to calling `search` per query row, for any thread count.
    std::vector<RankedList> search_batch(const EmbeddingMatrix& queries, std::size_t k,
                                         const PoolFilter& filter = {}, const ScanOptions& opts = {}) const;

private:
    std::vector<std::size_t> pool_rows(const PoolFilter& filter) const;

    const EmbeddingMatrix* store_;
    std::vector<double> norms_;
};

RankedList retrieve_top_k(std::span<const float> query, const EmbeddingMatrix& store, std::size_t k,
                          const PoolFilter& filter = {}, const DocId& query_id = DocId("query"));

std::vector<RankedList> batch_retrieve(const EmbeddingMatrix& queries, const EmbeddingMatrix& store, std::size_t k,
                                       const PoolFilter& filter = {}, const ScanOptions& opts = {});

/// TREC run lines: `query_id Q0 doc_id rank score run_tag`, score with 6 decimals.
std::string format_run(const std::vector<RankedList>& lists, const std::string& run_tag);
void write_run_file(const std::string& path, const std::vector<RankedList>& lists, const std::string& run_tag);
/// Groups lines by query in first-appearance order; entries ordered by rank.
/// pool_size is set to the number of entries read. The tag of the first line
/// is stored in `run_tag` when given.
std::vector<RankedList> read_run_file(const std::string& path, std::string* run_tag = nullptr);
std::vector<RankedList> parse_run(const std::string& text, std::string* run_tag = nullptr);

}  // namespace retrank

#endif  // RETRANK_RETRIEVER_HPP
