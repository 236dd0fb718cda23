#include "retrank/scorer_gateway.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>

#include <httplib.h>

namespace retrank {

namespace {

constexpr const char* kScorePath = "/v1/score";
constexpr const char* kEmbedPath = "/v1/embed";

[[noreturn]] void violation(const std::string& field, const std::string& detail) {
    throw Error(ErrorCode::ProtocolViolation, "violation(" + field + "): " + detail);
}

class Fnv64 {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) {
            b[i] = static_cast<unsigned char>(v >> (8 * i));
        }
        bytes(b, 8);
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    std::uint64_t finish() const {
        // splitmix64 finalizer
        std::uint64_t z = h_ + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

double unit_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

httplib::Client make_client(const HttpClientConfig& cfg) {
    httplib::Client cli(cfg.endpoint);
    cli.set_tcp_nodelay(true);
    const auto secs = static_cast<time_t>(cfg.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    return cli;
}

// POSTs with retries on transport failures and 5xx. Returns the 200 body.
std::string post_with_retries(const HttpClientConfig& cfg, const char* path, const std::string& body) {
    std::string last_error = "no attempt made";
    ErrorCode last_code = ErrorCode::TransportError;
    for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        auto cli = make_client(cfg);
        auto res = cli.Post(path, body, "application/json");
        if (!res) {
            const auto err = res.error();
            last_code = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
                            ? ErrorCode::Timeout
                            : ErrorCode::TransportError;
            last_error = httplib::to_string(err);
            continue;
        }
        if (res->status == 200) {
            return res->body;
        }
        if (res->status >= 400 && res->status < 500) {
            violation("http", "server rejected request with status " + std::to_string(res->status) + ": " + res->body);
        }
        last_code = ErrorCode::TransportError;
        last_error = "status " + std::to_string(res->status);
    }
    throw Error(last_code, cfg.endpoint + path + " failed after " + std::to_string(cfg.max_retries + 1) +
                               " attempts: " + last_error);
}

}  // namespace

std::string_view score_mode_name(ScoreMode mode) { return mode == ScoreMode::Pointwise ? "pointwise" : "listwise"; }

ScoreMode parse_score_mode(std::string_view s) {
    if (s == "pointwise") return ScoreMode::Pointwise;
    if (s == "listwise") return ScoreMode::Listwise;
    throw Error(ErrorCode::InvalidArgument, "unknown score mode '" + std::string(s) + "'");
}

void validate_request(const ScoreRequest& req) {
    if (req.request_id.empty()) {
        violation("request_id", "empty request id");
    }
    if (req.mode == ScoreMode::Pointwise && req.candidates.size() != 1) {
        violation("length", "pointwise request needs exactly 1 candidate, got " + std::to_string(req.candidates.size()));
    }
    if (req.mode == ScoreMode::Listwise && req.candidates.empty()) {
        violation("length", "listwise request has no candidates");
    }
    try {
        validate_record(req.query, RecordRole::Query);
        for (const auto& c : req.candidates) {
            validate_record(c, RecordRole::Candidate);
        }
    } catch (const Error& e) {
        violation("record", e.what());
    }
}

void validate_response(const ScoreRequest& req, const ScoreResponse& resp) {
    if (resp.request_id != req.request_id) {
        violation("correlation", "response id '" + resp.request_id + "' does not match request '" + req.request_id + "'");
    }
    if (req.mode == ScoreMode::Pointwise) {
        if (!resp.p_yes || resp.position_probs) {
            violation("mode", "pointwise response must carry p_yes only");
        }
        if (!std::isfinite(*resp.p_yes) || *resp.p_yes < 0.0 || *resp.p_yes > 1.0) {
            violation("range", "p_yes " + std::to_string(*resp.p_yes) + " outside [0, 1]");
        }
        return;
    }
    if (!resp.position_probs || resp.p_yes) {
        violation("mode", "listwise response must carry position_probs only");
    }
    if (resp.position_probs->size() != req.candidates.size()) {
        violation("length", "expected " + std::to_string(req.candidates.size()) + " position probabilities, got " +
                                std::to_string(resp.position_probs->size()));
    }
    for (double p : *resp.position_probs) {
        if (!std::isfinite(p) || p < 0.0) {
            violation("range", "position probability " + std::to_string(p) + " is negative or non-finite");
        }
    }
}

nlohmann::json request_to_json(const ScoreRequest& req) {
    nlohmann::json query = record_to_json(req.query);
    query["prompt"] = req.query_prompt;
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : req.candidates) {
        cands.push_back(record_to_json(c));
    }
    return {{"request_id", req.request_id},
            {"mode", score_mode_name(req.mode)},
            {"query", std::move(query)},
            {"candidates", std::move(cands)}};
}

ScoreRequest request_from_json(const nlohmann::json& j) {
    try {
        ScoreRequest req;
        req.request_id = j.at("request_id").get<std::string>();
        req.mode = parse_score_mode(j.at("mode").get<std::string>());
        req.query = record_from_json(j.at("query"));
        req.query_prompt = j.at("query").value("prompt", std::string());
        for (const auto& c : j.at("candidates")) {
            req.candidates.push_back(record_from_json(c));
        }
        return req;
    } catch (const nlohmann::json::exception& e) {
        violation("body", e.what());
    } catch (const Error& e) {
        violation("body", e.what());
    }
}

nlohmann::json response_to_json(const ScoreResponse& resp) {
    nlohmann::json j = {{"request_id", resp.request_id}};
    if (resp.p_yes) {
        j["p_yes"] = *resp.p_yes;
    }
    if (resp.position_probs) {
        j["position_probs"] = *resp.position_probs;
    }
    return j;
}

ScoreResponse response_from_json(const nlohmann::json& j) {
    try {
        ScoreResponse resp;
        resp.request_id = j.at("request_id").get<std::string>();
        if (j.contains("p_yes")) {
            resp.p_yes = j.at("p_yes").get<double>();
        }
        if (j.contains("position_probs")) {
            resp.position_probs = j.at("position_probs").get<std::vector<double>>();
        }
        return resp;
    } catch (const nlohmann::json::exception& e) {
        violation("body", e.what());
    }
}

ScoreRequest make_request(std::string request_id, ScoreMode mode, const Record& query, std::vector<Record> candidates) {
    ScoreRequest req;
    req.request_id = std::move(request_id);
    req.mode = mode;
    req.query = query;
    req.query_prompt = build_eol_prompt(query).text;
    req.candidates = std::move(candidates);
    return req;
}

ScoreResponse score(const ScorerHandle& handle, const ScoreRequest& req) {
    validate_request(req);
    auto resp = handle->score(req);
    validate_response(req, resp);
    return resp;
}

ScoreResponse OracleScorer::score(const ScoreRequest& req) const {
    ScoreResponse resp{req.request_id, std::nullopt, std::nullopt};
    if (req.mode == ScoreMode::Pointwise) {
        resp.p_yes = qrels_.is_relevant(req.query.id, req.candidates.front().id) ? 1.0 : 0.0;
        return resp;
    }
    std::vector<double> probs(req.candidates.size(), 0.0);
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (qrels_.is_relevant(req.query.id, req.candidates[i].id)) {
            probs[i] = 1.0;
            ++relevant;
        }
    }
    if (relevant == 0) {
        std::fill(probs.begin(), probs.end(), 1.0 / static_cast<double>(probs.size()));
    } else {
        for (double& p : probs) {
            p /= static_cast<double>(relevant);
        }
    }
    resp.position_probs = std::move(probs);
    return resp;
}

ScoreResponse MockHashScorer::score(const ScoreRequest& req) const {
    Fnv64 base;
    base.u64(seed_);
    base.str(std::string(score_mode_name(req.mode)));
    base.str(req.query.id.str());
    for (const auto& c : req.candidates) {
        base.str(c.id.str());
    }
    ScoreResponse resp{req.request_id, std::nullopt, std::nullopt};
    if (req.mode == ScoreMode::Pointwise) {
        resp.p_yes = unit_from_hash(base.finish());
        return resp;
    }
    std::vector<double> weights(req.candidates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        Fnv64 h = base;
        h.u64(i);
        weights[i] = unit_from_hash(h.finish()) + 0x1.0p-53;
        total += weights[i];
    }
    for (double& w : weights) {
        w /= total;
    }
    resp.position_probs = std::move(weights);
    return resp;
}

// Counting gate bounding concurrent requests per handle.
struct HttpScorer::Gate {
    explicit Gate(std::size_t limit) : limit(std::max<std::size_t>(1, limit)) {}
    void acquire() {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return in_flight < limit; });
        ++in_flight;
    }
    void release() {
        {
            std::lock_guard lock(mutex);
            --in_flight;
        }
        cv.notify_one();
    }
    std::size_t limit;
    std::size_t in_flight = 0;
    std::mutex mutex;
    std::condition_variable cv;
};

HttpScorer::HttpScorer(HttpClientConfig cfg) : cfg_(std::move(cfg)), gate_(std::make_unique<Gate>(cfg_.max_inflight)) {}

HttpScorer::~HttpScorer() = default;

ScoreResponse HttpScorer::score(const ScoreRequest& req) const {
    gate_->acquire();
    struct Release {
        Gate* g;
        ~Release() { g->release(); }
    } release{gate_.get()};

    const std::string body = post_with_retries(cfg_, kScorePath, request_to_json(req).dump());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        violation("body", e.what());
    }
    return response_from_json(j);
}

std::vector<float> HttpEmbedder::embed(const Record& record, const EolPrompt& prompt) const {
    nlohmann::json rec = record_to_json(record);
    rec["prompt"] = prompt.text;
    const std::string id = "embed#" + std::to_string(next_id_.fetch_add(1));
    const nlohmann::json req = {{"request_id", id}, {"record", std::move(rec)}};
    const std::string body = post_with_retries(cfg_, kEmbedPath, req.dump());
    try {
        const auto j = nlohmann::json::parse(body);
        if (j.at("request_id").get<std::string>() != id) {
            violation("correlation", "embedding response id mismatch");
        }
        auto v = j.at("embedding").get<std::vector<float>>();
        if (v.empty()) {
            violation("length", "empty embedding");
        }
        return v;
    } catch (const nlohmann::json::exception& e) {
        violation("body", e.what());
    }
}

ScoringServer::ScoringServer(ScorerHandle scorer, std::shared_ptr<const Embedder> embedder)
    : scorer_(std::move(scorer)), embedder_(std::move(embedder)), server_(std::make_unique<httplib::Server>()) {
    server_->set_tcp_nodelay(true);
    install_routes();
}

ScoringServer::~ScoringServer() { stop(); }

void ScoringServer::install_routes() {
    server_->Post(kScorePath, [this](const httplib::Request& http_req, httplib::Response& http_res) {
        auto reply = [&](int status, const nlohmann::json& body) {
            http_res.status = status;
            http_res.set_content(body.dump(), "application/json");
        };
        ScoreRequest req;
        try {
            req = request_from_json(nlohmann::json::parse(http_req.body));
            validate_request(req);
        } catch (const std::exception& e) {
            reply(400, {{"error", e.what()}});
            return;
        }
        if (!scorer_) {
            reply(404, {{"error", "no scorer configured"}});
            return;
        }
        try {
            reply(200, response_to_json(score(scorer_, req)));
        } catch (const std::exception& e) {
            reply(500, {{"error", e.what()}});
        }
    });
    server_->Post(kEmbedPath, [this](const httplib::Request& http_req, httplib::Response& http_res) {
        auto reply = [&](int status, const nlohmann::json& body) {
            http_res.status = status;
            http_res.set_content(body.dump(), "application/json");
        };
        if (!embedder_) {
            reply(404, {{"error", "no embedder configured"}});
            return;
        }
        std::string id;
        Record record;
        try {
            const auto j = nlohmann::json::parse(http_req.body);
            id = j.at("request_id").get<std::string>();
            record = record_from_json(j.at("record"));
            validate_record(record);
        } catch (const std::exception& e) {
            reply(400, {{"error", e.what()}});
            return;
        }
        try {
            reply(200, {{"request_id", id}, {"embedding", embedder_->embed(record, build_eol_prompt(record))}});
        } catch (const std::exception& e) {
            reply(500, {{"error", e.what()}});
        }
    });
}

int ScoringServer::start(const std::string& host, int port) {
    host_ = host;
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ < 0) {
        throw Error(ErrorCode::TransportError, "cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void ScoringServer::run(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!server_->listen(host, port)) {
        throw Error(ErrorCode::TransportError, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void ScoringServer::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

}  // namespace retrank
