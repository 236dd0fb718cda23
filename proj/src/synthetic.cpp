#include "retrank/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "retrank/evaluator.hpp"

namespace retrank {

namespace {

std::string make_id(char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i);
    return buf;
}

// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
std::vector<double> random_rotation(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> m(n * n);
    for (auto& v : m) {
        v = normal(rng);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double* row = m.data() + i * n;
        for (std::size_t j = 0; j < i; ++j) {
            const double* prev = m.data() + j * n;
            double dot = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                dot += row[k] * prev[k];
            }
            for (std::size_t k = 0; k < n; ++k) {
                row[k] -= dot * prev[k];
            }
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            norm += row[k] * row[k];
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < n; ++k) {
            row[k] /= norm;
        }
    }
    return m;
}

Record doc_record(const DocId& id, std::size_t i) {
    switch (i % 3) {
        case 0: return {id, Modality::Image, {ImageRef{"assets/" + id.str() + ".png"}}, std::nullopt};
        case 1: return {id, Modality::Text, {TextSegment{"synthetic passage " + id.str()}}, std::nullopt};
        default:
            return {id, Modality::Interleaved,
                    {ImageRef{"assets/" + id.str() + ".png"}, TextSegment{"caption of " + id.str()}}, std::nullopt};
    }
}

Record query_record(const DocId& id, std::size_t i) {
    if (i % 2 == 0) {
        return {id, Modality::Text, {TextSegment{"find the item for " + id.str()}}, "retrieve a matching candidate."};
    }
    return {id, Modality::Image, {ImageRef{"assets/" + id.str() + ".png"}}, "retrieve a similar image."};
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticConfig& cfg) {
    if (cfg.n_docs == 0 || cfg.signal_dim == 0 || cfg.n_clusters == 0 || cfg.datasets.empty()) {
        throw Error(ErrorCode::InvalidArgument, "synthetic corpus needs docs, signal dims, clusters and datasets");
    }
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t ds = cfg.signal_dim;
    const std::size_t dn = cfg.nuisance_dim;
    const std::size_t dim = ds + dn;

    const auto rotation = random_rotation(ds, rng);

    std::vector<double> centers(cfg.n_clusters * ds);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        double norm = 0.0;
        for (std::size_t k = 0; k < ds; ++k) {
            centers[c * ds + k] = normal(rng);
            norm += centers[c * ds + k] * centers[c * ds + k];
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < ds; ++k) {
            centers[c * ds + k] /= norm;
        }
    }

    SyntheticCorpus corpus;
    std::vector<double> doc_signal(cfg.n_docs * ds);
    std::vector<float> doc_data(cfg.n_docs * dim);
    std::vector<DocId> doc_ids;
    for (std::size_t i = 0; i < cfg.n_docs; ++i) {
        const std::size_t cluster = i % cfg.n_clusters;
        const DocId id(make_id('d', i));
        doc_ids.push_back(id);
        // clusters alternate between datasets so distractors exist on both sides
        corpus.dataset_of[id] = cfg.datasets[cluster % cfg.datasets.size()];
        corpus.docs.push_back(doc_record(id, i));
        for (std::size_t k = 0; k < ds; ++k) {
            const double v = centers[cluster * ds + k] + cfg.cluster_spread / std::sqrt(double(ds)) * normal(rng);
            doc_signal[i * ds + k] = v;
            doc_data[i * dim + k] = static_cast<float>(v);
        }
        for (std::size_t k = 0; k < dn; ++k) {
            doc_data[i * dim + ds + k] = static_cast<float>(cfg.nuisance_scale * normal(rng));
        }
    }
    corpus.doc_emb = EmbeddingMatrix(dim, doc_ids, std::move(doc_data));

    auto make_queries = [&](char prefix, std::size_t n, std::vector<Record>& records, Qrels& qrels,
                            EmbeddingMatrix& emb) {
        std::vector<float> data(n * dim);
        std::vector<DocId> ids;
        std::uniform_int_distribution<std::size_t> pick_doc(0, cfg.n_docs - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const DocId id(make_id(prefix, i));
            ids.push_back(id);
            records.push_back(query_record(id, i));
            const std::size_t target = pick_doc(rng);
            qrels.add(id, doc_ids[target]);
            const double* s = doc_signal.data() + target * ds;
            for (std::size_t r = 0; r < ds; ++r) {
                double rotated = 0.0;
                for (std::size_t k = 0; k < ds; ++k) {
                    rotated += rotation[r * ds + k] * s[k];
                }
                const double v = (1.0 - cfg.rotated_share) * s[r] + cfg.rotated_share * rotated +
                                 cfg.query_noise * normal(rng);
                data[i * dim + r] = static_cast<float>(v);
            }
            for (std::size_t k = 0; k < dn; ++k) {
                data[i * dim + ds + k] = static_cast<float>(cfg.nuisance_scale * normal(rng));
            }
        }
        emb = EmbeddingMatrix(dim, std::move(ids), std::move(data));
    };
    make_queries('q', cfg.n_queries, corpus.queries, corpus.qrels, corpus.query_emb);
    make_queries('t', cfg.n_train_queries, corpus.train_queries, corpus.train_qrels, corpus.train_query_emb);

    // first quarter of the training queries form the "pretrain" stage
    for (std::size_t i = 0; i < corpus.train_queries.size(); ++i) {
        const auto& q = corpus.train_queries[i].id;
        corpus.pairs.push_back(
            {q, *corpus.train_qrels.relevant(q).begin(), i < corpus.train_queries.size() / 4 ? "pretrain" : "instruction"});
    }
    return corpus;
}

void write_corpus(const std::string& dir, const SyntheticCorpus& corpus) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());
    }
    const std::filesystem::path base(dir);
    write_records_jsonl((base / "docs.jsonl").string(), corpus.docs);
    write_records_jsonl((base / "queries.jsonl").string(), corpus.queries);
    write_records_jsonl((base / "train_queries.jsonl").string(), corpus.train_queries);
    write_store(corpus.doc_emb, (base / "doc_emb.bin").string());
    write_store(corpus.query_emb, (base / "query_emb.bin").string());
    write_store(corpus.train_query_emb, (base / "train_query_emb.bin").string());
    write_qrels((base / "qrels.txt").string(), corpus.qrels);
    write_qrels((base / "train_qrels.txt").string(), corpus.train_qrels);
    write_pairs_jsonl((base / "pairs.jsonl").string(), corpus.pairs);
    write_dataset_assignment((base / "datasets.tsv").string(), corpus.dataset_of);
}

}  // namespace retrank
