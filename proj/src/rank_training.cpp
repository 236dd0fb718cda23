#include "retrank/rank_training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace retrank {

namespace {

// Softmax cross-entropy of `target`; writes softmax - onehot into dlogits.
double softmax_ce(std::span<const double> logits, std::size_t target, std::vector<double>* dlogits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) {
        sum += std::exp(z - mx);
    }
    const double lse = mx + std::log(sum);
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            (*dlogits)[i] = std::exp(logits[i] - lse) - (i == target ? 1.0 : 0.0);
        }
    }
    return lse - logits[target];
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& p : out) {
        p /= sum;
    }
    return out;
}

// grad_A += scale * q c^T
void add_outer(std::vector<double>& grad, std::size_t dim, double scale, std::span<const double> q,
               std::span<const double> c) {
    if (scale == 0.0) {
        return;
    }
    for (std::size_t i = 0; i < dim; ++i) {
        const double a = scale * q[i];
        double* row = grad.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] += a * c[j];
        }
    }
}

// One YES/NO pair term; target 0 is YES.
double pair_term(const ToyScorer& s, std::span<const double> q, std::span<const double> c, std::size_t target,
                 std::vector<double>* grad) {
    const auto z = s.pointwise_logits(q, c);
    std::vector<double> dz;
    const double loss = softmax_ce(z, target, grad ? &dz : nullptr);
    if (grad) {
        const std::size_t d = s.dim();
        add_outer(*grad, d, dz[0], q, c);
        (*grad)[d * d] += dz[0];
        (*grad)[d * d + 1] += dz[1];
    }
    return loss;
}

double pointwise_impl(const ToyScorer& scorer, const PointwisePair& yes, const PointwisePair& no,
                      const EmbeddingLookup& emb, std::vector<double>* grad) {
    if (yes.label != Label::Yes || no.label != Label::No) {
        throw Error(ErrorCode::InvalidArgument, "pointwise loss expects a YES pair and a NO pair");
    }
    const auto q_yes = emb.query(yes.query_id);
    const auto c_pos = emb.candidate(yes.candidate_id);
    const auto q_no = yes.query_id == no.query_id ? q_yes : emb.query(no.query_id);
    const auto c_neg = emb.candidate(no.candidate_id);
    return pair_term(scorer, q_yes, c_pos, 0, grad) + pair_term(scorer, q_no, c_neg, 1, grad);
}

double listwise_impl(const ToyScorer& scorer, const ListwiseSample& sample, const EmbeddingLookup& emb,
                     std::vector<double>* grad) {
    if (sample.gt_position >= sample.candidates.size()) {
        throw Error(ErrorCode::InvalidArgument, "gt_position outside the candidate list");
    }
    const auto q = emb.query(sample.query_id);
    std::vector<std::vector<double>> cands;
    cands.reserve(sample.candidates.size());
    for (const auto& id : sample.candidates) {
        cands.push_back(emb.candidate(id));
    }
    const auto z = scorer.listwise_logits(q, cands);
    std::vector<double> dz;
    const double loss = softmax_ce(z, sample.gt_position, grad ? &dz : nullptr);
    if (grad) {
        for (std::size_t i = 0; i < cands.size(); ++i) {
            add_outer(*grad, scorer.dim(), dz[i], q, cands[i]);
        }
    }
    return loss;
}

template <typename T>
T read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, path + ": " + e.what());
    }
}

}  // namespace

std::vector<HardNegativeSet> mine_hard_negatives(const EmbeddingMatrix& queries, const ExactIndex& index,
                                                 const Qrels& qrels, std::size_t depth, const PoolFilter& filter,
                                                 const ScanOptions& opts) {
    for (const auto& q : queries.ids()) {
        qrels.relevant(q);  // throws MissingQrels
    }
    const auto lists = index.search_batch(queries, depth, filter, opts);
    std::vector<HardNegativeSet> out;
    out.reserve(lists.size());
    for (const auto& list : lists) {
        HardNegativeSet set{list.query_id, {}, depth};
        const auto& rel = qrels.relevant(list.query_id);
        for (const auto& e : list.entries) {
            if (!rel.count(e.id)) {
                set.negatives.push_back(e.id);
            }
        }
        out.push_back(std::move(set));
    }
    return out;
}

std::pair<PointwisePair, PointwisePair> assemble_pointwise(const DocId& query, const Qrels& qrels,
                                                          const HardNegativeSet& negs, std::mt19937_64& rng) {
    const auto& rel = qrels.relevant(query);
    if (negs.negatives.empty()) {
        throw Error(ErrorCode::NoNegativesAvailable, "no hard negatives for query '" + query.str() + "'");
    }
    std::uniform_int_distribution<std::size_t> pick(0, negs.negatives.size() - 1);
    const DocId& negative = negs.negatives[pick(rng)];
    return {PointwisePair{query, *rel.begin(), Label::Yes}, PointwisePair{query, negative, Label::No}};
}

ListwiseSample assemble_listwise(const DocId& query, const Qrels& qrels, const HardNegativeSet& negs,
                                 std::mt19937_64& rng) {
    const auto& rel = qrels.relevant(query);
    if (negs.negatives.size() < kMaxListNegatives) {
        throw Error(ErrorCode::InsufficientNegatives, "query '" + query.str() + "' has " +
                                                          std::to_string(negs.negatives.size()) +
                                                          " negatives, listwise sampling needs 5");
    }
    std::uniform_int_distribution<std::size_t> pick_m(kMinListNegatives, kMaxListNegatives);
    const std::size_t m = pick_m(rng);

    // partial Fisher-Yates: first m slots become a uniform draw without replacement
    std::vector<std::size_t> idx(negs.negatives.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::uniform_int_distribution<std::size_t> pick_gt(0, m);
    const std::size_t gt = pick_gt(rng);

    ListwiseSample sample{query, {}, gt};
    sample.candidates.reserve(m + 1);
    for (std::size_t i = 0; i < m; ++i) {
        if (i == gt) {
            sample.candidates.push_back(*rel.begin());
        }
        sample.candidates.push_back(negs.negatives[idx[i]]);
    }
    if (gt == m) {
        sample.candidates.push_back(*rel.begin());
    }
    return sample;
}

ToyScorer::ToyScorer(std::size_t dim) : dim_(dim), params_(dim * dim + 2, 0.0) {
    for (std::size_t i = 0; i < dim; ++i) {
        params_[i * dim + i] = 1.0;
    }
}

ToyScorer::ToyScorer(std::size_t dim, std::vector<double> params) : dim_(dim), params_(std::move(params)) {
    if (params_.size() != dim * dim + 2) {
        throw Error(ErrorCode::InvalidArgument, "scorer needs " + std::to_string(dim * dim + 2) + " parameters");
    }
}

double ToyScorer::bilinear(std::span<const double> q, std::span<const double> c) const {
    if (q.size() != dim_ || c.size() != dim_) {
        throw Error(ErrorCode::DimMismatch, "scorer dim " + std::to_string(dim_) + " does not match embeddings");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        const double* row = params_.data() + i * dim_;
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            acc += row[j] * c[j];
        }
        s += q[i] * acc;
    }
    return s;
}

std::array<double, 2> ToyScorer::pointwise_logits(std::span<const double> q, std::span<const double> c) const {
    return {bilinear(q, c) + params_[dim_ * dim_], params_[dim_ * dim_ + 1]};
}

std::vector<double> ToyScorer::listwise_logits(std::span<const double> q,
                                               const std::vector<std::vector<double>>& cands) const {
    std::vector<double> z;
    z.reserve(cands.size());
    for (const auto& c : cands) {
        z.push_back(bilinear(q, c));
    }
    return z;
}

double ToyScorer::p_yes(std::span<const double> q, std::span<const double> c) const {
    const auto z = pointwise_logits(q, c);
    return softmax(z)[0];
}

EmbeddingLookup::EmbeddingLookup(std::shared_ptr<const EmbeddingMatrix> queries,
                                 std::shared_ptr<const EmbeddingMatrix> candidates)
    : queries_(std::move(queries)), candidates_(std::move(candidates)) {
    if (queries_->dim() != candidates_->dim()) {
        throw Error(ErrorCode::DimMismatch, "query and candidate embeddings differ in dim");
    }
}

std::vector<double> EmbeddingLookup::fetch(const EmbeddingMatrix& m, const DocId& id) {
    if (!m.contains(id)) {
        throw Error(ErrorCode::UnknownId, "no embedding for '" + id.str() + "'");
    }
    const auto row = m.row(m.index_of(id));
    return {row.begin(), row.end()};
}

std::vector<double> EmbeddingLookup::query(const DocId& id) const { return fetch(*queries_, id); }
std::vector<double> EmbeddingLookup::candidate(const DocId& id) const { return fetch(*candidates_, id); }

double pointwise_loss(const ToyScorer& scorer, const PointwisePair& yes, const PointwisePair& no,
                      const EmbeddingLookup& emb) {
    return pointwise_impl(scorer, yes, no, emb, nullptr);
}

LossGrad pointwise_loss_and_grad(const ToyScorer& scorer, const PointwisePair& yes, const PointwisePair& no,
                                 const EmbeddingLookup& emb) {
    LossGrad out{0.0, std::vector<double>(scorer.params().size(), 0.0)};
    out.loss = pointwise_impl(scorer, yes, no, emb, &out.grad);
    return out;
}

double listwise_loss(const ToyScorer& scorer, const ListwiseSample& sample, const EmbeddingLookup& emb) {
    return listwise_impl(scorer, sample, emb, nullptr);
}

LossGrad listwise_loss_and_grad(const ToyScorer& scorer, const ListwiseSample& sample, const EmbeddingLookup& emb) {
    LossGrad out{0.0, std::vector<double>(scorer.params().size(), 0.0)};
    out.loss = listwise_impl(scorer, sample, emb, &out.grad);
    return out;
}

double rank_loss(double point, double list, double w_point, double w_list) { return w_point * point + w_list * list; }

std::vector<RerankExample> build_rerank_examples(const std::vector<HardNegativeSet>& negs, const Qrels& qrels,
                                                 std::mt19937_64& rng, std::size_t per_query) {
    std::vector<RerankExample> out;
    for (const auto& set : negs) {
        if (set.negatives.empty()) {
            continue;
        }
        for (std::size_t i = 0; i < per_query; ++i) {
            auto [yes, no] = assemble_pointwise(set.query_id, qrels, set, rng);
            RerankExample ex{std::move(yes), std::move(no), std::nullopt};
            if (set.negatives.size() >= kMaxListNegatives) {
                ex.list = assemble_listwise(set.query_id, qrels, set, rng);
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

RerankTrainResult train_reranker(const std::vector<RerankExample>& examples, const ToyScorer& init,
                                 const EmbeddingLookup& emb, const RerankTrainConfig& cfg) {
    if (examples.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no reranker training examples");
    }
    if (!(cfg.learning_rate > 0.0) || cfg.epochs == 0 || cfg.batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "learning rate, epochs and batch size must be positive");
    }
    if (init.dim() != emb.dim()) {
        throw Error(ErrorCode::DimMismatch, "scorer dim does not match embeddings");
    }
    RerankTrainResult result{init, {}, {}, {}};
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(examples.size());
    const std::size_t n_params = init.params().size();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double sum_rank = 0.0, sum_point = 0.0, sum_list = 0.0;
        std::size_t n_list = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<double> grad(n_params, 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = examples[order[i]];
                const auto point = pointwise_loss_and_grad(result.scorer, ex.yes, ex.no, emb);
                double list_loss = 0.0;
                for (std::size_t k = 0; k < n_params; ++k) {
                    grad[k] += cfg.w_point * point.grad[k];
                }
                if (ex.list) {
                    const auto list = listwise_loss_and_grad(result.scorer, *ex.list, emb);
                    list_loss = list.loss;
                    for (std::size_t k = 0; k < n_params; ++k) {
                        grad[k] += cfg.w_list * list.grad[k];
                    }
                    sum_list += list.loss;
                    ++n_list;
                }
                sum_point += point.loss;
                sum_rank += rank_loss(point.loss, list_loss, cfg.w_point, cfg.w_list);
            }
            const double step = cfg.learning_rate / static_cast<double>(end - start);
            auto& params = result.scorer.params();
            for (std::size_t k = 0; k < n_params; ++k) {
                params[k] -= step * grad[k];
            }
        }
        const auto n = static_cast<double>(examples.size());
        result.rank_trace.push_back(sum_rank / n);
        result.point_trace.push_back(sum_point / n);
        result.list_trace.push_back(n_list ? sum_list / static_cast<double>(n_list) : 0.0);
    }
    return result;
}

ScoreResponse ModelScorer::score(const ScoreRequest& req) const {
    ScoreResponse resp{req.request_id, std::nullopt, std::nullopt};
    const auto q = emb_.query(req.query.id);
    if (req.mode == ScoreMode::Pointwise) {
        resp.p_yes = model_.p_yes(q, emb_.candidate(req.candidates.front().id));
        return resp;
    }
    std::vector<std::vector<double>> cands;
    for (const auto& c : req.candidates) {
        cands.push_back(emb_.candidate(c.id));
    }
    resp.position_probs = softmax(model_.listwise_logits(q, cands));
    return resp;
}

void save_scorer(const std::string& path, const ToyScorer& scorer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    out << nlohmann::json{{"dim", scorer.dim()}, {"params", scorer.params()}}.dump() << '\n';
}

ToyScorer load_scorer(const std::string& path) {
    const auto j = read_json_file<nlohmann::json>(path);
    try {
        return ToyScorer(j.at("dim").get<std::size_t>(), j.at("params").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, path + ": " + e.what());
    }
}

nlohmann::json hard_negatives_to_json(const HardNegativeSet& set) {
    nlohmann::json negs = nlohmann::json::array();
    for (const auto& id : set.negatives) {
        negs.push_back(id.str());
    }
    return {{"query_id", set.query_id.str()}, {"depth", set.depth}, {"negatives", std::move(negs)}};
}

HardNegativeSet hard_negatives_from_json(const nlohmann::json& j) {
    try {
        HardNegativeSet set{DocId(j.at("query_id").get<std::string>()), {}, j.value("depth", kDefaultMiningDepth)};
        for (const auto& id : j.at("negatives")) {
            set.negatives.emplace_back(id.get<std::string>());
        }
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad hard-negative json: ") + e.what());
    }
}

void write_hard_negatives_jsonl(const std::string& path, const std::vector<HardNegativeSet>& sets) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    for (const auto& s : sets) {
        out << hard_negatives_to_json(s).dump() << '\n';
    }
}

std::vector<HardNegativeSet> read_hard_negatives_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    std::vector<HardNegativeSet> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(hard_negatives_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::FormatError, path + ": " + e.what());
        }
    }
    return out;
}

nlohmann::json example_to_json(const RerankExample& ex) {
    nlohmann::json j = {{"query_id", ex.yes.query_id.str()},
                        {"pointwise",
                         {{{"candidate_id", ex.yes.candidate_id.str()}, {"label", "YES"}},
                          {{"candidate_id", ex.no.candidate_id.str()}, {"label", "NO"}}}}};
    if (ex.list) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : ex.list->candidates) {
            cands.push_back(c.str());
        }
        j["listwise"] = {{"candidates", std::move(cands)}, {"gt_position", ex.list->gt_position}};
    }
    return j;
}

void write_examples_jsonl(const std::string& path, const std::vector<RerankExample>& examples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    for (const auto& ex : examples) {
        out << example_to_json(ex).dump() << '\n';
    }
}

}  // namespace retrank
