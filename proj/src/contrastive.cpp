#include "retrank/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>

namespace retrank {

namespace {

void check_batch(const ContrastiveBatch& batch) {
    if (!(batch.temperature > 0.0)) {
        throw Error(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
    }
    if (batch.queries.rows() != batch.positives.rows() || batch.queries.cols() != batch.positives.cols()) {
        throw Error(ErrorCode::DimMismatch, "query and positive matrices differ in shape");
    }
    if (batch.queries.rows() == 0) {
        throw Error(ErrorCode::EmptyDataset, "empty contrastive batch");
    }
}

Matrix normalize_rows(const Matrix& x, std::vector<double>* norms = nullptr) {
    Matrix out(x.rows(), x.cols());
    if (norms) {
        norms->resize(x.rows());
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double sq = 0.0;
        for (double v : x.row(r)) {
            sq += v * v;
        }
        if (sq == 0.0) {
            throw Error(ErrorCode::ZeroVector, "zero vector at batch row " + std::to_string(r));
        }
        const double n = std::sqrt(sq);
        if (norms) {
            (*norms)[r] = n;
        }
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out(r, c) = x(r, c) / n;
        }
    }
    return out;
}

Matrix multiply(const Matrix& x, const Matrix& w) {
    if (x.cols() != w.rows()) {
        throw Error(ErrorCode::DimMismatch, "input dim " + std::to_string(x.cols()) + " != head input dim " +
                                                std::to_string(w.rows()));
    }
    Matrix out(x.rows(), w.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double a = x(r, k);
            for (std::size_t c = 0; c < w.cols(); ++c) {
                out(r, c) += a * w(k, c);
            }
        }
    }
    return out;
}

// Similarity logits S = A B^T / tau for unit rows.
Matrix logits(const Matrix& a, const Matrix& b, double tau) {
    Matrix s(a.rows(), b.rows());
    for (std::size_t n = 0; n < a.rows(); ++n) {
        for (std::size_t m = 0; m < b.rows(); ++m) {
            double dot = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                dot += a(n, k) * b(m, k);
            }
            s(n, m) = dot / tau;
        }
    }
    return s;
}

// Mean over rows of logsumexp(row) - diagonal; optionally fills dL/dS.
double nce_from_logits(const Matrix& s, Matrix* dlogits) {
    const std::size_t b = s.rows();
    const double inv_b = 1.0 / static_cast<double>(b);
    double total = 0.0;
    if (dlogits) {
        *dlogits = Matrix(b, b);
    }
    for (std::size_t n = 0; n < b; ++n) {
        const auto row = s.row(n);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) {
            sum += std::exp(v - mx);
        }
        total += (mx + std::log(sum)) - row[n];
        if (dlogits) {
            for (std::size_t m = 0; m < b; ++m) {
                (*dlogits)(n, m) = (std::exp(row[m] - mx) / sum - (m == n ? 1.0 : 0.0)) * inv_b;
            }
        }
    }
    return total * inv_b;
}

// Backprop through y = x / |x| given unit rows y and norms |x|.
Matrix normalize_backward(const Matrix& unit, const std::vector<double>& norms, const Matrix& grad_unit) {
    Matrix out(unit.rows(), unit.cols());
    for (std::size_t r = 0; r < unit.rows(); ++r) {
        double proj = 0.0;
        for (std::size_t c = 0; c < unit.cols(); ++c) {
            proj += unit(r, c) * grad_unit(r, c);
        }
        for (std::size_t c = 0; c < unit.cols(); ++c) {
            out(r, c) = (grad_unit(r, c) - unit(r, c) * proj) / norms[r];
        }
    }
    return out;
}

// W-gradient contribution x^T g.
void accumulate_xtg(const Matrix& x, const Matrix& g, Matrix& out) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double a = x(r, k);
            for (std::size_t c = 0; c < g.cols(); ++c) {
                out(k, c) += a * g(r, c);
            }
        }
    }
}

Matrix gather(const EmbeddingMatrix& store, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), store.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = store.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::size_t resolve_row(const EmbeddingMatrix& store, const DocId& id) {
    if (!store.contains(id)) {
        throw Error(ErrorCode::UnknownId, "training id '" + id.str() + "' has no embedding");
    }
    return store.index_of(id);
}

}  // namespace

double info_nce_loss(const ContrastiveBatch& batch) {
    check_batch(batch);
    const Matrix q = normalize_rows(batch.queries);
    const Matrix c = normalize_rows(batch.positives);
    return nce_from_logits(logits(q, c, batch.temperature), nullptr);
}

Matrix project(const Matrix& x, const ProjectionHead& head) { return normalize_rows(multiply(x, head.weights)); }

double info_nce_loss(const ContrastiveBatch& batch, const ProjectionHead& head) {
    check_batch(batch);
    const Matrix q = project(batch.queries, head);
    const Matrix c = project(batch.positives, head);
    return nce_from_logits(logits(q, c, batch.temperature), nullptr);
}

HeadLossGrad info_nce_loss_and_grad(const ContrastiveBatch& batch, const ProjectionHead& head) {
    check_batch(batch);
    const double tau = batch.temperature;
    std::vector<double> qnorm, cnorm;
    const Matrix qhat = normalize_rows(multiply(batch.queries, head.weights), &qnorm);
    const Matrix chat = normalize_rows(multiply(batch.positives, head.weights), &cnorm);

    Matrix ds;
    const double loss = nce_from_logits(logits(qhat, chat, tau), &ds);

    const std::size_t b = qhat.rows();
    const std::size_t d = qhat.cols();
    Matrix gq(b, d);
    Matrix gc(b, d);
    for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t m = 0; m < b; ++m) {
            const double g = ds(n, m) / tau;
            if (g == 0.0) {
                continue;
            }
            for (std::size_t k = 0; k < d; ++k) {
                gq(n, k) += g * chat(m, k);
                gc(m, k) += g * qhat(n, k);
            }
        }
    }
    HeadLossGrad out{loss, Matrix(head.in_dim(), head.out_dim())};
    accumulate_xtg(batch.queries, normalize_backward(qhat, qnorm, gq), out.grad);
    accumulate_xtg(batch.positives, normalize_backward(chat, cnorm, gc), out.grad);
    return out;
}

Matrix info_nce_grad(const ContrastiveBatch& batch, const ProjectionHead& head) {
    return info_nce_loss_and_grad(batch, head).grad;
}

EmbeddingMatrix apply_head(const ProjectionHead& head, const EmbeddingMatrix& m) {
    if (m.dim() != head.in_dim()) {
        throw Error(ErrorCode::DimMismatch, "store dim " + std::to_string(m.dim()) + " != head input dim " +
                                                std::to_string(head.in_dim()));
    }
    Matrix x(m.size(), m.dim());
    std::copy(m.data().begin(), m.data().end(), x.data().begin());
    const Matrix p = project(x, head);
    std::vector<float> data(p.data().size());
    std::transform(p.data().begin(), p.data().end(), data.begin(), [](double v) { return static_cast<float>(v); });
    return EmbeddingMatrix(head.out_dim(), m.ids(), std::move(data));
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.temperature > 0.0)) {
        throw Error(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
    }
    if (!(cfg.learning_rate > 0.0) || cfg.epochs == 0 || cfg.batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "learning rate, epochs and batch size must be positive");
    }
}

ProjectionTrainResult train_projection(const std::vector<TrainingPair>& pairs, const EmbeddingMatrix& queries,
                                       const EmbeddingMatrix& candidates, const TrainConfig& cfg,
                                       const ProjectionHead* init) {
    validate(cfg);
    if (pairs.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no training pairs");
    }
    if (queries.dim() != candidates.dim()) {
        throw Error(ErrorCode::DimMismatch, "query and candidate stores differ in dim");
    }
    const std::size_t dim = queries.dim();
    const std::size_t out_dim = cfg.out_dim == 0 ? dim : cfg.out_dim;
    if (out_dim > dim) {
        throw Error(ErrorCode::InvalidArgument, "projection output dim exceeds input dim");
    }

    std::vector<std::size_t> qrows(pairs.size());
    std::vector<std::size_t> crows(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        qrows[i] = resolve_row(queries, pairs[i].query_id);
        crows[i] = resolve_row(candidates, pairs[i].positive_id);
    }

    ProjectionTrainResult result;
    result.head = init ? *init : ProjectionHead::identity(dim, out_dim);
    if (result.head.in_dim() != dim) {
        throw Error(ErrorCode::DimMismatch, "initial head does not match the embedding dim");
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::shuffle(order.begin(), order.end(), rng);

        double weighted = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> bq, bc;
            for (std::size_t i = start; i < end; ++i) {
                bq.push_back(qrows[order[i]]);
                bc.push_back(crows[order[i]]);
            }
            const ContrastiveBatch batch{gather(queries, bq), gather(candidates, bc), cfg.temperature};
            const auto lg = info_nce_loss_and_grad(batch, result.head);
            weighted += lg.loss * static_cast<double>(end - start);
            auto& w = result.head.weights.data();
            for (std::size_t k = 0; k < w.size(); ++k) {
                w[k] -= cfg.learning_rate * lg.grad.data()[k];
            }
        }
        result.loss_trace.push_back(weighted / static_cast<double>(order.size()));
    }
    return result;
}

ProjectionTrainResult train_projection(const std::vector<TrainingPair>& pairs, const EmbeddingMatrix& base,
                                       const TrainConfig& cfg) {
    return train_projection(pairs, base, base, cfg);
}

ProjectionTrainResult train_projection_staged(const std::vector<TrainingPair>& pairs, const EmbeddingMatrix& queries,
                                              const EmbeddingMatrix& candidates, const TrainConfig& cfg) {
    std::vector<TrainingPair> pretrain, instruction;
    for (const auto& p : pairs) {
        if (p.stage == "pretrain") {
            pretrain.push_back(p);
        } else if (p.stage == "instruction") {
            instruction.push_back(p);
        } else {
            throw Error(ErrorCode::FormatError, "unknown training stage '" + p.stage + "'");
        }
    }
    if (pretrain.empty() && instruction.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no training pairs");
    }
    ProjectionTrainResult result;
    bool have_head = false;
    for (const auto* stage : {&pretrain, &instruction}) {
        if (stage->empty()) {
            continue;
        }
        auto r = train_projection(*stage, queries, candidates, cfg, have_head ? &result.head : nullptr);
        result.head = std::move(r.head);
        result.loss_trace.insert(result.loss_trace.end(), r.loss_trace.begin(), r.loss_trace.end());
        have_head = true;
    }
    return result;
}

std::vector<TrainingPair> read_pairs_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    std::vector<TrainingPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            TrainingPair p{DocId(j.at("query_id").get<std::string>()), DocId(j.at("positive_id").get<std::string>()),
                           j.value("stage", std::string("instruction"))};
            pairs.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

void write_pairs_jsonl(const std::string& path, const std::vector<TrainingPair>& pairs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    for (const auto& p : pairs) {
        out << nlohmann::json{{"query_id", p.query_id.str()}, {"positive_id", p.positive_id.str()}, {"stage", p.stage}}
                   .dump()
            << '\n';
    }
}

void save_head(const std::string& path, const ProjectionHead& head) {
    const nlohmann::json j = {
        {"in_dim", head.in_dim()}, {"out_dim", head.out_dim()}, {"weights", head.weights.data()}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    out << j.dump() << '\n';
}

ProjectionHead load_head(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    try {
        const auto j = nlohmann::json::parse(in);
        ProjectionHead head{Matrix(j.at("in_dim").get<std::size_t>(), j.at("out_dim").get<std::size_t>())};
        const auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != head.weights.data().size()) {
            throw Error(ErrorCode::FormatError, "head weight count does not match its shape");
        }
        for (double v : w) {
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteValue, "head has a non-finite weight");
            }
        }
        head.weights.data() = w;
        return head;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, "bad head file " + path + ": " + e.what());
    }
}

std::string format_loss_trace(const std::vector<double>& trace) {
    std::string out = "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.12g\n", i + 1, trace[i]);
        out += buf;
    }
    return out;
}

}  // namespace retrank
