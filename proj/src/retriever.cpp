#include "retrank/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "retrank/parallel.hpp"

namespace retrank {

namespace {

struct Hit {
    double score;
    std::size_t row;
};

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimMismatch,
                    "cosine of vectors with dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    if (aa == 0.0 || bb == 0.0) {
        throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    }
    return clamp_unit(ab / (std::sqrt(aa) * std::sqrt(bb)));
}

// Keeps the best k hits under (score desc, id asc). Heap top is the worst kept hit.
class TopK {
public:
    TopK(std::size_t k, const std::vector<DocId>& ids) : k_(k), cmp_{&ids} {}

    void offer(double score, std::size_t row) {
        const Hit hit{score, row};
        if (heap_.size() < k_) {
            heap_.push_back(hit);
            std::push_heap(heap_.begin(), heap_.end(), cmp_);
        } else if (cmp_(hit, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), cmp_);
            heap_.back() = hit;
            std::push_heap(heap_.begin(), heap_.end(), cmp_);
        }
    }

    std::vector<Hit> take() && { return std::move(heap_); }

private:
    struct RanksBefore {
        const std::vector<DocId>* ids;
        bool operator()(const Hit& a, const Hit& b) const {
            return ranks_before(a.score, (*ids)[a.row], b.score, (*ids)[b.row]);
        }
    };

    std::size_t k_;
    RanksBefore cmp_;
    std::vector<Hit> heap_;
};

}  // namespace

double dot_f64(const float* a, const float* b, std::size_t dim) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= dim; i += 4) {
        s0 += static_cast<double>(a[i]) * b[i];
        s1 += static_cast<double>(a[i + 1]) * b[i + 1];
        s2 += static_cast<double>(a[i + 2]) * b[i + 2];
        s3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (; i < dim; ++i) {
        s0 += static_cast<double>(a[i]) * b[i];
    }
    return (s0 + s1) + (s2 + s3);
}

double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

ExactIndex::ExactIndex(const EmbeddingMatrix& store) : store_(&store), norms_(store.size()) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto row = store.row(i);
        const double sq = dot_f64(row.data(), row.data(), row.size());
        if (sq == 0.0) {
            throw Error(ErrorCode::ZeroVector, "candidate '" + store.ids()[i].str() + "' has zero norm");
        }
        norms_[i] = std::sqrt(sq);
    }
}

std::vector<std::size_t> ExactIndex::pool_rows(const PoolFilter& filter) const {
    std::vector<std::size_t> rows;
    if (!filter.allowed_ids) {
        rows.resize(store_->size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i] = i;
        }
    } else {
        rows.reserve(filter.allowed_ids->size());
        for (const auto& id : *filter.allowed_ids) {
            if (!store_->contains(id)) {
                throw Error(ErrorCode::FilterNotSubset, "pool filter id '" + id.str() + "' is not in the store");
            }
            rows.push_back(store_->index_of(id));
        }
        std::sort(rows.begin(), rows.end());
    }
    if (rows.empty()) {
        throw Error(ErrorCode::EmptyPool, "candidate pool is empty");
    }
    return rows;
}

std::vector<RankedList> ExactIndex::search_batch(const EmbeddingMatrix& queries, std::size_t k,
                                                 const PoolFilter& filter, const ScanOptions& opts) const {
    if (k == 0) {
        throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    }
    if (queries.size() != 0 && queries.dim() != store_->dim()) {
        throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(queries.dim()) + " != store dim " +
                                                std::to_string(store_->dim()));
    }
    const auto rows = pool_rows(filter);
    const std::size_t dim = store_->dim();
    const std::size_t chunk = std::max<std::size_t>(1, opts.chunk_rows);
    const std::size_t n_chunks = (rows.size() + chunk - 1) / chunk;
    const std::size_t n_queries = queries.size();

    std::vector<double> qnorms(n_queries);
    for (std::size_t q = 0; q < n_queries; ++q) {
        const auto qrow = queries.row(q);
        const double sq = dot_f64(qrow.data(), qrow.data(), dim);
        if (sq == 0.0) {
            throw Error(ErrorCode::ZeroVector, "query '" + queries.ids()[q].str() + "' has zero norm");
        }
        qnorms[q] = std::sqrt(sq);
    }

    // One work unit per (query, chunk); partial results merge in fixed chunk order.
    std::vector<std::vector<Hit>> partial(n_queries * n_chunks);
    parallel_for(partial.size(), opts.threads, [&](std::size_t task) {
        const std::size_t q = task / n_chunks;
        const std::size_t c = task % n_chunks;
        const float* qv = queries.row(q).data();
        TopK top(k, store_->ids());
        const std::size_t end = std::min(rows.size(), (c + 1) * chunk);
        for (std::size_t p = c * chunk; p < end; ++p) {
            const std::size_t r = rows[p];
            const double s = clamp_unit(dot_f64(qv, store_->row(r).data(), dim) / (qnorms[q] * norms_[r]));
            top.offer(s, r);
        }
        partial[task] = std::move(top).take();
    });

    std::vector<RankedList> out(n_queries);
    for (std::size_t q = 0; q < n_queries; ++q) {
        std::vector<ScoredCandidate> merged;
        for (std::size_t c = 0; c < n_chunks; ++c) {
            for (const auto& h : partial[q * n_chunks + c]) {
                merged.push_back({store_->ids()[h.row], h.score, 0});
            }
        }
        sort_and_rank(merged);
        if (merged.size() > k) {
            merged.resize(k);
        }
        out[q] = RankedList{queries.ids()[q], std::move(merged), rows.size()};
    }
    return out;
}

RankedList ExactIndex::search(std::span<const float> query, const DocId& query_id, std::size_t k,
                              const PoolFilter& filter, const ScanOptions& opts) const {
    if (query.size() != store_->dim()) {
        throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.size()) + " != store dim " +
                                                std::to_string(store_->dim()));
    }
    const EmbeddingMatrix single(store_->dim(), {query_id}, std::vector<float>(query.begin(), query.end()));
    return std::move(search_batch(single, k, filter, opts).front());
}

RankedList retrieve_top_k(std::span<const float> query, const EmbeddingMatrix& store, std::size_t k,
                          const PoolFilter& filter, const DocId& query_id) {
    return ExactIndex(store).search(query, query_id, k, filter);
}

std::vector<RankedList> batch_retrieve(const EmbeddingMatrix& queries, const EmbeddingMatrix& store, std::size_t k,
                                       const PoolFilter& filter, const ScanOptions& opts) {
    return ExactIndex(store).search_batch(queries, k, filter, opts);
}

std::string format_run(const std::vector<RankedList>& lists, const std::string& run_tag) {
    std::string out;
    char score[64];
    for (const auto& list : lists) {
        for (const auto& e : list.entries) {
            std::snprintf(score, sizeof score, "%.6f", e.score);
            out += list.query_id.str();
            out += " Q0 ";
            out += e.id.str();
            out += ' ';
            out += std::to_string(e.rank);
            out += ' ';
            out += score;
            out += ' ';
            out += run_tag;
            out += '\n';
        }
    }
    return out;
}

void write_run_file(const std::string& path, const std::vector<RankedList>& lists, const std::string& run_tag) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    out << format_run(lists, run_tag);
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path);
    }
}

std::vector<RankedList> parse_run(const std::string& text, std::string* run_tag) {
    std::vector<RankedList> lists;
    std::map<DocId, std::size_t> slot;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string qid, q0, doc, tag;
        long long rank = 0;
        double score = 0.0;
        if (!(fields >> qid >> q0 >> doc >> rank >> score >> tag) || rank < 1) {
            throw Error(ErrorCode::BadRunFile, "malformed run line " + std::to_string(lineno) + ": '" + line + "'");
        }
        if (run_tag && lists.empty()) {
            *run_tag = tag;
        }
        const DocId q(qid);
        auto [it, inserted] = slot.emplace(q, lists.size());
        if (inserted) {
            lists.push_back(RankedList{q, {}, 0});
        }
        lists[it->second].entries.push_back({DocId(doc), score, static_cast<std::uint32_t>(rank)});
    }
    for (auto& list : lists) {
        std::stable_sort(list.entries.begin(), list.entries.end(),
                         [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.rank < b.rank; });
        list.pool_size = list.entries.size();
        try {
            validate_ranked_list(list, /*check_score_order=*/false);
        } catch (const Error& e) {
            throw Error(ErrorCode::BadRunFile, "query '" + list.query_id.str() + "': " + e.what());
        }
    }
    return lists;
}

std::vector<RankedList> read_run_file(const std::string& path, std::string* run_tag) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    return parse_run({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}, run_tag);
}

}  // namespace retrank
