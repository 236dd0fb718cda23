#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <unordered_map>

#include <CLI11.hpp>

#include "retrank/contrastive.hpp"
#include "retrank/embed_store.hpp"
#include "retrank/evaluator.hpp"
#include "retrank/prompts.hpp"
#include "retrank/rank_training.hpp"
#include "retrank/reranker.hpp"
#include "retrank/retriever.hpp"
#include "retrank/synthetic.hpp"

namespace retrank::cli {

namespace {

using Clock = std::chrono::steady_clock;

struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::optional<std::uint64_t> seed;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

// Written next to the primary output as `<out>.run.json`, via rename.
void write_run_manifest(const std::string& out_path, const RunManifest& m, Clock::time_point started) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
    nlohmann::json j = {{"command", m.command},
                        {"config", m.config},
                        {"seed", m.seed ? nlohmann::json(*m.seed) : nlohmann::json(nullptr)},
                        {"inputs", m.inputs},
                        {"outputs", m.outputs},
                        {"engine_version", RETRANK_VERSION},
                        {"duration_ms", ms}};
    const std::string path = out_path + ".run.json";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoError, "cannot write " + tmp);
        }
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    out << text;
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path);
    }
}

PoolFilter parse_pool(const std::string& pool, const std::string& datasets_path) {
    if (pool == "global") {
        return PoolFilter::all();
    }
    if (pool.rfind("local:", 0) != 0 || pool.size() == 6) {
        throw Error(ErrorCode::InvalidArgument, "--pool must be 'global' or 'local:<dataset>'");
    }
    if (datasets_path.empty()) {
        throw Error(ErrorCode::InvalidArgument, "--pool local:<dataset> needs --datasets");
    }
    return build_pool(PoolSpec{PoolMode::Local, read_dataset_assignment(datasets_path)}, pool.substr(6));
}

std::unordered_map<DocId, Record> index_records(const std::string& path) {
    std::unordered_map<DocId, Record> out;
    if (path.empty()) {
        return out;
    }
    for (auto& r : read_records_jsonl(path)) {
        out.emplace(r.id, std::move(r));
    }
    return out;
}

RecordResolver resolver_for(std::shared_ptr<const std::unordered_map<DocId, Record>> records) {
    return [records](const DocId& id) {
        auto it = records->find(id);
        return it != records->end() ? it->second : placeholder_record(id);
    };
}

struct HttpOptions {
    double timeout = 30.0;
    std::size_t retries = 2;
    std::size_t inflight = 8;
};

ScorerHandle make_scorer(const ScorerSpec& spec, const std::string& qrels_path, const std::string& queries_path,
                         const std::string& store_path, const HttpOptions& http) {
    if (spec.kind == "mock") {
        return std::make_shared<MockHashScorer>(spec.value.empty() ? 0 : std::stoull(spec.value));
    }
    if (spec.kind == "oracle") {
        if (qrels_path.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--scorer oracle needs --qrels");
        }
        return std::make_shared<OracleScorer>(read_qrels(qrels_path));
    }
    if (spec.kind == "http") {
        HttpClientConfig cfg;
        cfg.endpoint = spec.value;
        cfg.timeout_seconds = http.timeout;
        cfg.max_retries = http.retries;
        cfg.max_inflight = http.inflight;
        return std::make_shared<HttpScorer>(cfg);
    }
    if (spec.kind == "model") {
        if (queries_path.empty() || store_path.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--scorer model:<path> needs --queries and --store");
        }
        auto queries = std::make_shared<const EmbeddingMatrix>(l2_normalize(read_store(queries_path)));
        auto docs = std::make_shared<const EmbeddingMatrix>(l2_normalize(read_store(store_path)));
        return std::make_shared<ModelScorer>(load_scorer(spec.value), EmbeddingLookup(queries, docs));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown scorer kind '" + spec.kind + "'");
}

void print_error(ErrorCode code, const std::string& message) {
    std::cerr << nlohmann::json{{"error", error_code_name(code)}, {"message", message}}.dump() << std::endl;
}

// Options shared by the store-reading commands.
struct StoreInputs {
    std::string store;
    std::string queries;
    std::string head;
};

std::pair<EmbeddingMatrix, EmbeddingMatrix> load_projected(const StoreInputs& in) {
    auto store = read_store(in.store);
    auto queries = read_store(in.queries);
    if (store.dim() != queries.dim()) {
        throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(queries.dim()) + " != store dim " +
                                                std::to_string(store.dim()));
    }
    if (!in.head.empty()) {
        const auto head = load_head(in.head);
        return {apply_head(head, store), apply_head(head, queries)};
    }
    return {std::move(store), std::move(queries)};
}

}  // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::AlphaOutOfRange:
        case ErrorCode::NonPositiveTemperature:
            return kUsage;
        case ErrorCode::Timeout:
        case ErrorCode::TransportError:
        case ErrorCode::ProtocolViolation:
            return kTransport;
        default:
            return kData;
    }
}

ScorerSpec parse_scorer_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    ScorerSpec out{spec.substr(0, colon), colon == std::string::npos ? "" : spec.substr(colon + 1)};
    if (out.kind == "http" || out.kind == "https") {
        if (out.value.rfind("//", 0) == 0) {
            out = {"http", spec};
        }
        if (const char* env = std::getenv(kScorerUrlEnv); env && *env) {
            out.value = env;
        }
        if (out.value.empty()) {
            throw Error(ErrorCode::InvalidArgument, "http scorer needs a URL (http:<url> or $RETRANK_SCORER_URL)");
        }
    } else if (out.kind == "model" && out.value.empty()) {
        throw Error(ErrorCode::InvalidArgument, "model scorer needs a path (model:<path>)");
    } else if (out.kind != "mock" && out.kind != "oracle" && out.kind != "model") {
        throw Error(ErrorCode::InvalidArgument, "unknown scorer '" + spec + "'");
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"retrank: multimodal retrieve-then-rerank engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(RETRANK_VERSION));
    const auto started = Clock::now();

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "Write the seeded synthetic corpus");
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    SyntheticConfig gen_cfg;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Random seed")->required();
    gen->add_option("--docs", gen_cfg.n_docs, "Number of documents")->capture_default_str();
    gen->add_option("--queries", gen_cfg.n_queries, "Number of test queries")->capture_default_str();
    gen->add_option("--train-queries", gen_cfg.n_train_queries, "Number of training queries")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate records and write an embedding store");
    std::string ing_records, ing_embeddings, ing_embedder, ing_out;
    ingest->add_option("--records", ing_records, "Records JSONL")->required();
    auto* emb_opt = ingest->add_option("--embeddings", ing_embeddings, "Embedding store for the records");
    auto* endpoint_opt = ingest->add_option("--embedder", ing_embedder, "Embedder endpoint URL");
    emb_opt->excludes(endpoint_opt);
    ingest->add_option("--out", ing_out, "Output store path")->required();

    // search
    auto* search = app.add_subcommand("search", "Exact top-k cosine retrieval");
    StoreInputs s_in;
    std::size_t s_k = 10, s_threads = 0;
    std::string s_pool = "global", s_datasets, s_tag = "retrank", s_out;
    search->add_option("--store", s_in.store, "Candidate store")->required();
    search->add_option("--queries", s_in.queries, "Query embedding store")->required();
    search->add_option("--head", s_in.head, "Projection head applied to both sides");
    search->add_option("--k", s_k, "Results per query")->capture_default_str();
    search->add_option("--pool", s_pool, "global | local:<dataset>")->capture_default_str();
    search->add_option("--datasets", s_datasets, "doc_id<TAB>dataset file for local pools");
    search->add_option("--run-tag", s_tag, "Run tag")->capture_default_str();
    search->add_option("--threads", s_threads, "Worker cap, 0 = all cores")->capture_default_str();
    search->add_option("--out", s_out, "Output TREC run file")->required();

    // mine
    auto* mine = app.add_subcommand("mine", "Mine hard negatives from top-k retrieval");
    StoreInputs m_in;
    std::size_t m_depth = kDefaultMiningDepth, m_threads = 0;
    std::string m_qrels, m_pool = "global", m_datasets, m_out;
    mine->add_option("--store", m_in.store, "Candidate store")->required();
    mine->add_option("--queries", m_in.queries, "Query embedding store")->required();
    mine->add_option("--head", m_in.head, "Projection head applied to both sides");
    mine->add_option("--qrels", m_qrels, "TREC qrels")->required();
    mine->add_option("--depth", m_depth, "Retrieval depth")->capture_default_str();
    mine->add_option("--pool", m_pool, "global | local:<dataset>")->capture_default_str();
    mine->add_option("--datasets", m_datasets, "doc_id<TAB>dataset file for local pools");
    mine->add_option("--threads", m_threads, "Worker cap, 0 = all cores")->capture_default_str();
    mine->add_option("--out", m_out, "Output JSONL")->required();

    // train-head
    auto* thead = app.add_subcommand("train-head", "Train the contrastive projection head");
    std::string th_queries, th_store, th_pairs, th_out, th_trace;
    std::uint64_t th_seed = 0;
    TrainConfig th_cfg;
    thead->add_option("--queries", th_queries, "Query embedding store")->required();
    thead->add_option("--store", th_store, "Candidate store")->required();
    thead->add_option("--pairs", th_pairs, "Pair dataset JSONL")->required();
    thead->add_option("--seed", th_seed, "Random seed")->required();
    thead->add_option("--epochs", th_cfg.epochs)->capture_default_str();
    thead->add_option("--lr", th_cfg.learning_rate)->capture_default_str();
    thead->add_option("--batch-size", th_cfg.batch_size)->capture_default_str();
    thead->add_option("--temperature", th_cfg.temperature)->capture_default_str();
    thead->add_option("--out-dim", th_cfg.out_dim, "0 keeps the input dim")->capture_default_str();
    thead->add_option("--trace", th_trace, "Loss trace CSV");
    thead->add_option("--out", th_out, "Output head JSON")->required();

    // train-reranker
    auto* trr = app.add_subcommand("train-reranker", "Train the toy reranker on mined negatives");
    std::string tr_queries, tr_store, tr_negs, tr_qrels, tr_out, tr_trace, tr_samples_out;
    std::uint64_t tr_seed = 0;
    std::size_t tr_per_query = 4;
    RerankTrainConfig tr_cfg;
    trr->add_option("--queries", tr_queries, "Query embedding store")->required();
    trr->add_option("--store", tr_store, "Candidate store")->required();
    trr->add_option("--negatives", tr_negs, "Hard negatives JSONL")->required();
    trr->add_option("--qrels", tr_qrels, "TREC qrels")->required();
    trr->add_option("--seed", tr_seed, "Random seed")->required();
    trr->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
    trr->add_option("--lr", tr_cfg.learning_rate)->capture_default_str();
    trr->add_option("--batch-size", tr_cfg.batch_size)->capture_default_str();
    trr->add_option("--w-point", tr_cfg.w_point)->capture_default_str();
    trr->add_option("--w-list", tr_cfg.w_list)->capture_default_str();
    trr->add_option("--samples-per-query", tr_per_query)->capture_default_str();
    trr->add_option("--samples-out", tr_samples_out, "Write the assembled samples as JSONL");
    trr->add_option("--trace", tr_trace, "Loss trace CSV");
    trr->add_option("--out", tr_out, "Output scorer JSON")->required();

    // rerank
    auto* rr = app.add_subcommand("rerank", "Rerank a run with a scorer and fuse scores");
    std::string r_run, r_mode = "pointwise", r_scorer = "mock", r_qrels, r_queries, r_store, r_query_records,
                       r_records, r_tag, r_out;
    RerankConfig r_cfg;
    HttpOptions r_http;
    rr->add_option("--run", r_run, "Input TREC run")->required();
    rr->add_option("--mode", r_mode, "pointwise | listwise")->capture_default_str();
    rr->add_option("--depth", r_cfg.depth, "Entries to rerank per query")->capture_default_str();
    rr->add_option("--alpha", r_cfg.alpha, "Weight of the retrieval score")->capture_default_str();
    rr->add_flag("--normalize-ret", r_cfg.normalize_ret, "Min-max scale retrieval scores in the block");
    rr->add_option("--scorer", r_scorer, "mock[:seed] | oracle | http:<url> | model:<path>")->capture_default_str();
    rr->add_option("--qrels", r_qrels, "Qrels for the oracle scorer");
    rr->add_option("--queries", r_queries, "Query embedding store for the model scorer");
    rr->add_option("--store", r_store, "Candidate store for the model scorer");
    rr->add_option("--query-records", r_query_records, "Query records JSONL");
    rr->add_option("--records", r_records, "Candidate records JSONL");
    rr->add_option("--timeout", r_http.timeout, "HTTP timeout in seconds")->capture_default_str();
    rr->add_option("--retries", r_http.retries, "HTTP retries")->capture_default_str();
    rr->add_option("--inflight", r_http.inflight, "Concurrent HTTP requests")->capture_default_str();
    rr->add_option("--run-tag", r_tag, "Base run tag (default: the input run's tag)");
    rr->add_option("--out", r_out, "Output TREC run")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a run against qrels");
    std::string e_run, e_qrels, e_metrics = "recall@1,recall@5,recall@10,map@5", e_run_id, e_pool = "global", e_out,
                       e_csv;
    ev->add_option("--run", e_run, "TREC run")->required();
    ev->add_option("--qrels", e_qrels, "TREC qrels")->required();
    ev->add_option("--metrics", e_metrics, "Comma-separated metric names")->capture_default_str();
    ev->add_option("--run-id", e_run_id, "Run identifier (default: file stem)");
    ev->add_option("--pool-mode", e_pool, "Pool label recorded in the report")->capture_default_str();
    ev->add_option("--out", e_out, "Also write the JSON report here");
    ev->add_option("--csv", e_csv, "Also write metric,value CSV here");

    // serve-scorer
    auto* serve = app.add_subcommand("serve-scorer", "Serve an in-process scorer over HTTP");
    std::string sv_scorer = "mock", sv_qrels, sv_queries, sv_store, sv_host = "127.0.0.1";
    int sv_port = 8080;
    serve->add_option("--scorer", sv_scorer, "mock[:seed] | oracle | model:<path>")->capture_default_str();
    serve->add_option("--qrels", sv_qrels, "Qrels for the oracle scorer");
    serve->add_option("--queries", sv_queries, "Query store for the model scorer");
    serve->add_option("--store", sv_store, "Candidate store for the model scorer");
    serve->add_option("--host", sv_host)->capture_default_str();
    serve->add_option("--port", sv_port)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        print_error(ErrorCode::InvalidArgument, e.what());
        return kUsage;
    }

    try {
        if (*gen) {
            gen_cfg.seed = gen_seed;
            const auto corpus = generate_corpus(gen_cfg);
            write_corpus(gen_out, corpus);
            RunManifest m{"gen-corpus",
                          {{"docs", gen_cfg.n_docs}, {"queries", gen_cfg.n_queries},
                           {"train_queries", gen_cfg.n_train_queries}},
                          gen_seed, {}, {gen_out}};
            write_run_manifest((std::filesystem::path(gen_out) / "corpus").string(), m, started);
            return kOk;
        }

        if (*ingest) {
            const auto records = read_records_jsonl(ing_records);
            std::vector<DocId> ids;
            std::vector<float> data;
            std::size_t dim = 0;
            if (!ing_embeddings.empty()) {
                const auto emb = read_store(ing_embeddings);
                std::vector<std::string> missing, extra;
                std::unordered_map<DocId, bool> in_records;
                for (const auto& r : records) {
                    in_records[r.id] = true;
                    if (!emb.contains(r.id)) {
                        missing.push_back(r.id.str());
                    }
                }
                for (const auto& id : emb.ids()) {
                    if (!in_records.count(id)) {
                        extra.push_back(id.str());
                    }
                }
                if (!missing.empty() || !extra.empty()) {
                    std::string msg;
                    for (const auto& id : missing) {
                        msg += (msg.empty() ? "" : ", ") + ("missing embedding: " + id);
                    }
                    for (const auto& id : extra) {
                        msg += (msg.empty() ? "" : ", ") + ("no record: " + id);
                    }
                    throw Error(ErrorCode::IdMismatch, msg);
                }
                dim = emb.dim();
                for (const auto& r : records) {
                    ids.push_back(r.id);
                    const auto row = emb.row(emb.index_of(r.id));
                    data.insert(data.end(), row.begin(), row.end());
                }
            } else if (!ing_embedder.empty()) {
                HttpClientConfig cfg;
                cfg.endpoint = ing_embedder;
                const HttpEmbedder embedder(cfg);
                for (const auto& r : records) {
                    const auto v = embedder.embed(r, build_eol_prompt(r));
                    if (dim == 0) {
                        dim = v.size();
                    } else if (v.size() != dim) {
                        throw Error(ErrorCode::DimMismatch, "embedder returned dim " + std::to_string(v.size()) +
                                                                " for '" + r.id.str() + "', expected " +
                                                                std::to_string(dim));
                    }
                    ids.push_back(r.id);
                    data.insert(data.end(), v.begin(), v.end());
                }
            } else {
                throw Error(ErrorCode::InvalidArgument, "ingest needs --embeddings or --embedder");
            }
            if (ids.empty()) {
                throw Error(ErrorCode::EmptyDataset, "no records to ingest");
            }
            const auto manifest = write_store(EmbeddingMatrix(dim, std::move(ids), std::move(data)), ing_out);
            RunManifest m{"ingest", {{"count", manifest.count}, {"dim", manifest.dim}}, std::nullopt,
                          {ing_records, ing_embeddings.empty() ? ing_embedder : ing_embeddings}, {ing_out}};
            write_run_manifest(ing_out, m, started);
            return kOk;
        }

        if (*search) {
            const auto [store, queries] = load_projected(s_in);
            const auto filter = parse_pool(s_pool, s_datasets);
            const auto lists = batch_retrieve(queries, store, s_k, filter, ScanOptions{s_threads});
            write_run_file(s_out, lists, s_tag);
            RunManifest m{"search",
                          {{"k", s_k}, {"pool", s_pool}, {"run_tag", s_tag}, {"threads", s_threads},
                           {"head", s_in.head}},
                          std::nullopt, {s_in.store, s_in.queries}, {s_out}};
            write_run_manifest(s_out, m, started);
            return kOk;
        }

        if (*mine) {
            const auto [store, queries] = load_projected(m_in);
            const auto qrels = read_qrels(m_qrels);
            const ExactIndex index(store);
            const auto sets =
                mine_hard_negatives(queries, index, qrels, m_depth, parse_pool(m_pool, m_datasets), ScanOptions{m_threads});
            write_hard_negatives_jsonl(m_out, sets);
            RunManifest m{"mine", {{"depth", m_depth}, {"pool", m_pool}, {"head", m_in.head}}, std::nullopt,
                          {m_in.store, m_in.queries, m_qrels}, {m_out}};
            write_run_manifest(m_out, m, started);
            return kOk;
        }

        if (*thead) {
            th_cfg.seed = th_seed;
            const auto queries = read_store(th_queries);
            const auto store = read_store(th_store);
            const auto result = train_projection_staged(read_pairs_jsonl(th_pairs), queries, store, th_cfg);
            save_head(th_out, result.head);
            if (!th_trace.empty()) {
                write_text(th_trace, format_loss_trace(result.loss_trace));
            }
            RunManifest m{"train-head",
                          {{"epochs", th_cfg.epochs}, {"learning_rate", th_cfg.learning_rate},
                           {"batch_size", th_cfg.batch_size}, {"temperature", th_cfg.temperature},
                           {"out_dim", th_cfg.out_dim}},
                          th_seed, {th_queries, th_store, th_pairs}, {th_out}};
            write_run_manifest(th_out, m, started);
            return kOk;
        }

        if (*trr) {
            tr_cfg.seed = tr_seed;
            auto queries = std::make_shared<const EmbeddingMatrix>(l2_normalize(read_store(tr_queries)));
            auto docs = std::make_shared<const EmbeddingMatrix>(l2_normalize(read_store(tr_store)));
            const auto qrels = read_qrels(tr_qrels);
            std::mt19937_64 rng(tr_seed);
            const auto examples = build_rerank_examples(read_hard_negatives_jsonl(tr_negs), qrels, rng, tr_per_query);
            if (!tr_samples_out.empty()) {
                write_examples_jsonl(tr_samples_out, examples);
            }
            const EmbeddingLookup emb(queries, docs);
            const auto result = train_reranker(examples, ToyScorer(docs->dim()), emb, tr_cfg);
            save_scorer(tr_out, result.scorer);
            if (!tr_trace.empty()) {
                write_text(tr_trace, format_loss_trace(result.rank_trace));
            }
            RunManifest m{"train-reranker",
                          {{"epochs", tr_cfg.epochs}, {"learning_rate", tr_cfg.learning_rate},
                           {"batch_size", tr_cfg.batch_size}, {"w_point", tr_cfg.w_point},
                           {"w_list", tr_cfg.w_list}, {"samples_per_query", tr_per_query}},
                          tr_seed, {tr_queries, tr_store, tr_negs, tr_qrels}, {tr_out}};
            write_run_manifest(tr_out, m, started);
            return kOk;
        }

        if (*rr) {
            r_cfg.mode = parse_score_mode(r_mode);
            const auto spec = parse_scorer_spec(r_scorer);
            const auto scorer = make_scorer(spec, r_qrels, r_queries, r_store, r_http);
            std::string input_tag;
            const auto run = read_run_file(r_run, &input_tag);
            const std::string tag = (r_tag.empty() ? (input_tag.empty() ? std::string("retrank") : input_tag) : r_tag) +
                                    ".rerank";
            auto query_records = std::make_shared<const std::unordered_map<DocId, Record>>(index_records(r_query_records));
            auto cand_records = std::make_shared<const std::unordered_map<DocId, Record>>(index_records(r_records));
            const auto out =
                rerank_run(run, scorer, r_cfg, resolver_for(query_records), resolver_for(cand_records));
            write_run_file(r_out, out, tag);
            RunManifest m{"rerank",
                          {{"mode", r_mode}, {"depth", r_cfg.depth}, {"alpha", r_cfg.alpha},
                           {"normalize_ret", r_cfg.normalize_ret}, {"scorer", scorer->identity()},
                           {"run_tag", tag}},
                          std::nullopt, {r_run}, {r_out}};
            if (spec.kind == "mock") {
                m.seed = spec.value.empty() ? 0 : std::stoull(spec.value);
            }
            write_run_manifest(r_out, m, started);
            return kOk;
        }

        if (*ev) {
            const auto run = read_run_file(e_run);
            const auto qrels = read_qrels(e_qrels);
            const std::string run_id = e_run_id.empty() ? std::filesystem::path(e_run).stem().string() : e_run_id;
            const auto report = evaluate(run, qrels, split_metric_list(e_metrics), run_id, e_pool);
            const std::string json = report_to_json(report).dump(2);
            std::cout << json << std::endl;
            if (!e_out.empty()) {
                write_text(e_out, json + "\n");
            }
            if (!e_csv.empty()) {
                std::string csv = "metric,value\n";
                for (const auto& [name, value] : report.metrics) {
                    csv += name + "," + nlohmann::json(value).dump() + "\n";
                }
                write_text(e_csv, csv);
            }
            return kOk;
        }

        if (*serve) {
            const auto spec = parse_scorer_spec(sv_scorer);
            if (spec.kind == "http") {
                throw Error(ErrorCode::InvalidArgument, "serve-scorer cannot proxy another http scorer");
            }
            ScoringServer server(make_scorer(spec, sv_qrels, sv_queries, sv_store, {}));
            std::cerr << "serving " << sv_scorer << " on http://" << sv_host << ":" << sv_port << std::endl;
            server.run(sv_host, sv_port);
            return kOk;
        }
    } catch (const Error& e) {
        print_error(e.code(), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        print_error(ErrorCode::InvalidArgument, e.what());
        return kUsage;
    }
    return kUsage;
}

}  // namespace retrank::cli
