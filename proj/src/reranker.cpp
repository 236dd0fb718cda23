#include "retrank/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retrank/parallel.hpp"

namespace retrank {

namespace {

void check_config(const RerankConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
        throw Error(ErrorCode::AlphaOutOfRange, "alpha " + std::to_string(cfg.alpha) + " outside [0, 1]");
    }
    if (cfg.depth == 0) {
        throw Error(ErrorCode::InvalidArgument, "rerank depth must be at least 1");
    }
}

bool is_transport(ErrorCode c) {
    return c == ErrorCode::Timeout || c == ErrorCode::TransportError || c == ErrorCode::ProtocolViolation;
}

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
    throw Error(is_transport(e.code()) ? e.code() : ErrorCode::ScorerError, context + ": " + e.what());
}

}  // namespace

double fuse(double s_ret, double s_rank, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::AlphaOutOfRange, "alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    return alpha * s_ret + (1.0 - alpha) * s_rank;
}

std::vector<double> listwise_select(std::span<const double> position_probs) {
    double total = 0.0;
    for (double p : position_probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw Error(ErrorCode::NegativeProbability, "position probability " + std::to_string(p) + " is invalid");
        }
        total += p;
    }
    if (total == 0.0) {
        throw Error(ErrorCode::AllZero, "all position probabilities are zero");
    }
    std::vector<double> out(position_probs.begin(), position_probs.end());
    for (double& p : out) {
        p /= total;
    }
    return out;
}

RankedList rerank(const Record& query, const RankedList& c1, const ScorerHandle& scorer, const RerankConfig& cfg,
                  const RecordResolver& candidates, RequestIdSource* ids) {
    check_config(cfg);
    if (c1.entries.empty()) {
        throw Error(ErrorCode::InvalidArgument, "nothing to rerank for query '" + c1.query_id.str() + "'");
    }
    if (cfg.depth > c1.entries.size()) {
        throw Error(ErrorCode::DepthExceedsList, "rerank depth " + std::to_string(cfg.depth) + " exceeds the " +
                                                     std::to_string(c1.entries.size()) + " retrieved entries of '" +
                                                     c1.query_id.str() + "'");
    }
    if (cfg.mode == ScoreMode::Listwise && cfg.depth > scorer->max_list_length()) {
        throw Error(ErrorCode::ListTooLong, "listwise depth " + std::to_string(cfg.depth) +
                                                " exceeds the scorer's list limit " +
                                                std::to_string(scorer->max_list_length()));
    }
    RequestIdSource local_ids;
    RequestIdSource& id_source = ids ? *ids : local_ids;

    const std::size_t k = cfg.depth;
    std::vector<Record> records;
    records.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        records.push_back(candidates(c1.entries[i].id));
    }

    std::vector<double> s_rank(k, 0.0);
    if (cfg.mode == ScoreMode::Pointwise) {
        std::vector<std::string> req_ids(k);
        for (auto& r : req_ids) {
            r = id_source.next(c1.query_id.str());
        }
        parallel_for(k, scorer->max_inflight(), [&](std::size_t i) {
            try {
                const auto req = make_request(req_ids[i], ScoreMode::Pointwise, query, {records[i]});
                s_rank[i] = *score(scorer, req).p_yes;
            } catch (const Error& e) {
                rethrow_with_context(e, "scoring '" + records[i].id.str() + "' for '" + query.id.str() + "'");
            }
        });
    } else {
        try {
            const auto req = make_request(id_source.next(c1.query_id.str()), ScoreMode::Listwise, query, records);
            s_rank = listwise_select(*score(scorer, req).position_probs);
        } catch (const Error& e) {
            rethrow_with_context(e, "listwise scoring for '" + query.id.str() + "'");
        }
    }

    std::vector<double> s_ret(k);
    for (std::size_t i = 0; i < k; ++i) {
        s_ret[i] = c1.entries[i].score;
    }
    if (cfg.normalize_ret) {
        const auto [lo, hi] = std::minmax_element(s_ret.begin(), s_ret.end());
        const double min = *lo;
        const double span = *hi - *lo;
        for (double& s : s_ret) {
            s = span > 0.0 ? (s - min) / span : 1.0;
        }
    }

    std::vector<double> fused(k);
    for (std::size_t i = 0; i < k; ++i) {
        fused[i] = fuse(s_ret[i], s_rank[i], cfg.alpha);
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fused[a] > fused[b]; });

    RankedList out{c1.query_id, {}, c1.pool_size};
    out.entries.reserve(c1.entries.size());
    for (std::size_t pos = 0; pos < k; ++pos) {
        out.entries.push_back({c1.entries[order[pos]].id, fused[order[pos]], static_cast<std::uint32_t>(pos + 1)});
    }
    for (std::size_t i = k; i < c1.entries.size(); ++i) {
        out.entries.push_back({c1.entries[i].id, c1.entries[i].score, static_cast<std::uint32_t>(i + 1)});
    }
    return out;
}

std::vector<RankedList> rerank_run(const std::vector<RankedList>& run, const ScorerHandle& scorer,
                                   const RerankConfig& cfg, const RecordResolver& queries,
                                   const RecordResolver& candidates) {
    RequestIdSource ids;
    std::vector<RankedList> out;
    out.reserve(run.size());
    for (const auto& list : run) {
        out.push_back(rerank(queries(list.query_id), list, scorer, cfg, candidates, &ids));
    }
    return out;
}

}  // namespace retrank
