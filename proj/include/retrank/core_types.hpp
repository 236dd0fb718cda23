#ifndef RETRANK_CORE_TYPES_HPP
#define RETRANK_CORE_TYPES_HPP

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace retrank {

/// Machine-readable error kinds. Every module throws `Error` tagged with one of these.
enum class ErrorCode {
    // records
    EmptyId,
    EmptySegments,
    InterleavedMissingModality,
    ModalityMismatch,
    InstructionOnCandidate,
    InvalidRecord,
    // files and formats
    IoError,
    FormatError,
    ChecksumMismatch,
    BadRunFile,
    IdMismatch,
    // embeddings and retrieval
    NonFiniteValue,
    DuplicateId,
    ZeroVector,
    NotFound,
    DimMismatch,
    EmptyPool,
    FilterNotSubset,
    InvalidArgument,
    // training
    UnknownId,
    NonPositiveTemperature,
    EmptyDataset,
    MissingQrels,
    NoNegativesAvailable,
    InsufficientNegatives,
    // reranking
    AlphaOutOfRange,
    DepthExceedsList,
    ListTooLong,
    NegativeProbability,
    AllZero,
    ScorerError,
    // transport
    Timeout,
    ProtocolViolation,
    TransportError,
    // evaluation
    WrongCandidateCount,
    UnknownDataset,
    IncompatibleReports,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Opaque identifier for a query or candidate. Ordered byte-wise.
class DocId {
public:
    DocId() = default;
    explicit DocId(std::string value) : value_(std::move(value)) {}

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    // char_traits<char>::compare orders as unsigned char, i.e. byte-wise.
    friend bool operator==(const DocId&, const DocId&) = default;
    friend std::strong_ordering operator<=>(const DocId& a, const DocId& b) noexcept {
        const int c = a.value_.compare(b.value_);
        return c < 0 ? std::strong_ordering::less
                     : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
    }

private:
    std::string value_;
};

enum class Modality { Text, Image, Interleaved };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view s);

struct TextSegment {
    std::string text;
    friend bool operator==(const TextSegment&, const TextSegment&) = default;
};

/// Path or URI of an image asset. The engine never decodes it.
struct ImageRef {
    std::string path;
    friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

using Segment = std::variant<TextSegment, ImageRef>;

struct Record {
    DocId id;
    Modality modality = Modality::Text;
    std::vector<Segment> segments;
    std::optional<std::string> instruction;

    friend bool operator==(const Record&, const Record&) = default;
};

enum class RecordRole { Query, Candidate };

/// Throws `Error` naming the first violated invariant.
void validate_record(const Record& r);
void validate_record(const Record& r, RecordRole role);

/// Text-only stand-in used when only an id is known.
Record placeholder_record(const DocId& id);

nlohmann::json record_to_json(const Record& r);
Record record_from_json(const nlohmann::json& j);

std::vector<Record> read_records_jsonl(const std::string& path);
void write_records_jsonl(const std::string& path, const std::vector<Record>& records);

struct ScoredCandidate {
    DocId id;
    double score = 0.0;
    std::uint32_t rank = 0;

    friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

/// Total order used everywhere for ranking: higher score first, then ascending id.
inline bool ranks_before(double score_a, const DocId& id_a, double score_b, const DocId& id_b) {
    if (score_a != score_b) {
        return score_a > score_b;
    }
    return id_a < id_b;
}

inline bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
    return ranks_before(a.score, a.id, b.score, b.id);
}

struct RankedList {
    DocId query_id;
    std::vector<ScoredCandidate> entries;
    std::size_t pool_size = 0;

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Sorts by `ranks_before` and assigns ranks 1..n.
void sort_and_rank(std::vector<ScoredCandidate>& entries);

/// Checks distinct ids, contiguous ranks and |entries| <= pool_size. With
/// `check_score_order` also requires (score desc, id asc) ordering.
void validate_ranked_list(const RankedList& list, bool check_score_order = true);

nlohmann::json ranked_list_to_json(const RankedList& list);
RankedList ranked_list_from_json(const nlohmann::json& j);

/// Query relevance judgments.
class Qrels {
public:
    void add(const DocId& query, const DocId& doc) { map_[query].insert(doc); }

    bool has_query(const DocId& query) const { return map_.count(query) != 0; }
    bool is_relevant(const DocId& query, const DocId& doc) const;
    /// Throws MissingQrels when the query has no judgments.
    const std::set<DocId>& relevant(const DocId& query) const;

    const std::map<DocId, std::set<DocId>>& all() const noexcept { return map_; }
    std::size_t size() const noexcept { return map_.size(); }

private:
    std::map<DocId, std::set<DocId>> map_;
};

}  // namespace retrank

template <>
struct std::hash<retrank::DocId> {
    std::size_t operator()(const retrank::DocId& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};

#endif  // RETRANK_CORE_TYPES_HPP
