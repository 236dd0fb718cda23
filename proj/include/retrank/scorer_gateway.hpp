#ifndef RETRANK_SCORER_GATEWAY_HPP
#define RETRANK_SCORER_GATEWAY_HPP

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/prompts.hpp"

namespace httplib {
class Server;
}

namespace retrank {

enum class ScoreMode { Pointwise, Listwise };

std::string_view score_mode_name(ScoreMode mode);
ScoreMode parse_score_mode(std::string_view s);

/// One scoring call. Pointwise carries exactly one candidate, listwise K >= 1.
/// Listwise candidates are numbered 1..K on the wire (serial numbers) and
/// `position_probs[i]` in the response belongs to serial number i + 1.
struct ScoreRequest {
    std::string request_id;
    ScoreMode mode = ScoreMode::Pointwise;
    Record query;
    std::string query_prompt;
    std::vector<Record> candidates;
};

struct ScoreResponse {
    std::string request_id;
    std::optional<double> p_yes;
    std::optional<std::vector<double>> position_probs;
};

void validate_request(const ScoreRequest& req);
/// Throws ProtocolViolation naming the offending field: correlation, mode, length or range.
void validate_response(const ScoreRequest& req, const ScoreResponse& resp);

nlohmann::json request_to_json(const ScoreRequest& req);
ScoreRequest request_from_json(const nlohmann::json& j);
nlohmann::json response_to_json(const ScoreResponse& resp);
ScoreResponse response_from_json(const nlohmann::json& j);

/// Builds a request with the EOL prompt of the query attached.
ScoreRequest make_request(std::string request_id, ScoreMode mode, const Record& query, std::vector<Record> candidates);

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual ScoreResponse score(const ScoreRequest& req) const = 0;
    virtual std::string identity() const = 0;
    virtual std::size_t max_list_length() const { return std::numeric_limits<std::size_t>::max(); }
    virtual std::size_t max_inflight() const { return 1; }
};

using ScorerHandle = std::shared_ptr<const Scorer>;

/// Validates the request, scores it and validates the response.
ScoreResponse score(const ScorerHandle& handle, const ScoreRequest& req);

/// p_yes = 1 for relevant candidates, 0 otherwise. Listwise: uniform over the
/// relevant serials, or uniform over all when none is relevant.
class OracleScorer final : public Scorer {
public:
    explicit OracleScorer(Qrels qrels) : qrels_(std::move(qrels)) {}
    ScoreResponse score(const ScoreRequest& req) const override;
    std::string identity() const override { return "oracle"; }

private:
    Qrels qrels_;
};

/// Deterministic pseudo-scores from an integer hash of
/// (seed, mode, query id, candidate ids). No floating-point input is hashed.
class MockHashScorer final : public Scorer {
public:
    explicit MockHashScorer(std::uint64_t seed) : seed_(seed) {}
    ScoreResponse score(const ScoreRequest& req) const override;
    std::string identity() const override { return "mock:" + std::to_string(seed_); }

private:
    std::uint64_t seed_;
};

struct HttpClientConfig {
    std::string endpoint;            ///< e.g. http://127.0.0.1:8080
    double timeout_seconds = 30.0;
    std::size_t max_retries = 2;     ///< extra attempts after the first
    std::size_t max_inflight = 8;
    std::size_t max_list_length = 100;
};

/// POST /v1/score client. 5xx and transport failures are retried; 4xx maps to
/// ProtocolViolation. Concurrent calls beyond `max_inflight` block.
class HttpScorer final : public Scorer {
public:
    explicit HttpScorer(HttpClientConfig cfg);
    ~HttpScorer() override;
    ScoreResponse score(const ScoreRequest& req) const override;
    std::string identity() const override { return "http:" + cfg_.endpoint; }
    std::size_t max_list_length() const override { return cfg_.max_list_length; }
    std::size_t max_inflight() const override { return cfg_.max_inflight; }

private:
    struct Gate;
    HttpClientConfig cfg_;
    std::unique_ptr<Gate> gate_;
};

/// Boundary to an embedding model: maps a record and its EOL prompt to a vector.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const Record& record, const EolPrompt& prompt) const = 0;
};

class FunctionEmbedder final : public Embedder {
public:
    using Fn = std::function<std::vector<float>(const Record&, const EolPrompt&)>;
    explicit FunctionEmbedder(Fn fn) : fn_(std::move(fn)) {}
    std::vector<float> embed(const Record& record, const EolPrompt& prompt) const override { return fn_(record, prompt); }

private:
    Fn fn_;
};

/// POST /v1/embed client: `{"request_id","record":{...,"prompt"}}` -> `{"request_id","embedding":[...]}`.
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}
    std::vector<float> embed(const Record& record, const EolPrompt& prompt) const override;

private:
    HttpClientConfig cfg_;
    mutable std::atomic<std::uint64_t> next_id_{0};
};

/// Serves a scorer (and optionally an embedder) over HTTP on 127.0.0.1.
class ScoringServer {
public:
    explicit ScoringServer(ScorerHandle scorer, std::shared_ptr<const Embedder> embedder = nullptr);
    ~ScoringServer();
    ScoringServer(const ScoringServer&) = delete;
    ScoringServer& operator=(const ScoringServer&) = delete;

    /// Binds (port 0 picks a free port), starts serving in the background and
    /// returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Serves in the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();
    std::string endpoint() const { return "http://" + host_ + ":" + std::to_string(port_); }

private:
    void install_routes();

    ScorerHandle scorer_;
    std::shared_ptr<const Embedder> embedder_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::string host_ = "127.0.0.1";
    int port_ = 0;
};

/// Session-unique request ids `<prefix>#<n>`.
class RequestIdSource {
public:
    std::string next(const std::string& prefix) { return prefix + "#" + std::to_string(counter_.fetch_add(1)); }

private:
    std::atomic<std::uint64_t> counter_{0};
};

}  // namespace retrank

#endif  // RETRANK_SCORER_GATEWAY_HPP
