#include "retrank/core_types.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

namespace retrank {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyId: return "EmptyId";
        case ErrorCode::EmptySegments: return "EmptySegments";
        case ErrorCode::InterleavedMissingModality: return "InterleavedMissingModality";
        case ErrorCode::ModalityMismatch: return "ModalityMismatch";
        case ErrorCode::InstructionOnCandidate: return "InstructionOnCandidate";
        case ErrorCode::InvalidRecord: return "InvalidRecord";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::BadRunFile: return "BadRunFile";
        case ErrorCode::IdMismatch: return "IdMismatch";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::EmptyPool: return "EmptyPool";
        case ErrorCode::FilterNotSubset: return "FilterNotSubset";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::MissingQrels: return "MissingQrels";
        case ErrorCode::NoNegativesAvailable: return "NoNegativesAvailable";
        case ErrorCode::InsufficientNegatives: return "InsufficientNegatives";
        case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
        case ErrorCode::DepthExceedsList: return "DepthExceedsList";
        case ErrorCode::ListTooLong: return "ListTooLong";
        case ErrorCode::NegativeProbability: return "NegativeProbability";
        case ErrorCode::AllZero: return "AllZero";
        case ErrorCode::ScorerError: return "ScorerError";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::ProtocolViolation: return "ProtocolViolation";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::WrongCandidateCount: return "WrongCandidateCount";
        case ErrorCode::UnknownDataset: return "UnknownDataset";
        case ErrorCode::IncompatibleReports: return "IncompatibleReports";
    }
    return "Unknown";
}

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::Text: return "text";
        case Modality::Image: return "image";
        case Modality::Interleaved: return "interleaved";
    }
    return "text";
}

Modality parse_modality(std::string_view s) {
    if (s == "text") return Modality::Text;
    if (s == "image") return Modality::Image;
    if (s == "interleaved") return Modality::Interleaved;
    throw Error(ErrorCode::FormatError, "unknown modality '" + std::string(s) + "'");
}

void validate_record(const Record& r) {
    if (r.id.empty()) {
        throw Error(ErrorCode::EmptyId, "record id must be non-empty");
    }
    if (r.segments.empty()) {
        throw Error(ErrorCode::EmptySegments, "record '" + r.id.str() + "' has no segments");
    }
    std::size_t images = 0;
    std::size_t texts = 0;
    for (const auto& seg : r.segments) {
        if (std::holds_alternative<ImageRef>(seg)) {
            ++images;
        } else {
            ++texts;
        }
    }
    switch (r.modality) {
        case Modality::Interleaved:
            if (images == 0 || texts == 0) {
                throw Error(ErrorCode::InterleavedMissingModality,
                            "interleaved record '" + r.id.str() + "' needs at least one image and one text segment");
            }
            break;
        case Modality::Text:
            if (images != 0) {
                throw Error(ErrorCode::ModalityMismatch, "text record '" + r.id.str() + "' contains an image segment");
            }
            break;
        case Modality::Image:
            if (texts != 0) {
                throw Error(ErrorCode::ModalityMismatch, "image record '" + r.id.str() + "' contains a text segment");
            }
            break;
    }
}

void validate_record(const Record& r, RecordRole role) {
    validate_record(r);
    if (role == RecordRole::Candidate && r.instruction.has_value()) {
        throw Error(ErrorCode::InstructionOnCandidate, "candidate '" + r.id.str() + "' carries an instruction");
    }
}

Record placeholder_record(const DocId& id) {
    return Record{id, Modality::Text, {TextSegment{id.str()}}, std::nullopt};
}

nlohmann::json record_to_json(const Record& r) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& seg : r.segments) {
        if (const auto* t = std::get_if<TextSegment>(&seg)) {
            segs.push_back({{"text", t->text}});
        } else {
            segs.push_back({{"image", std::get<ImageRef>(seg).path}});
        }
    }
    nlohmann::json j = {{"id", r.id.str()}, {"modality", modality_name(r.modality)}, {"segments", std::move(segs)}};
    if (r.instruction) {
        j["instruction"] = *r.instruction;
    }
    return j;
}

Record record_from_json(const nlohmann::json& j) {
    try {
        Record r;
        r.id = DocId(j.at("id").get<std::string>());
        r.modality = parse_modality(j.at("modality").get<std::string>());
        for (const auto& s : j.at("segments")) {
            if (s.contains("text")) {
                r.segments.emplace_back(TextSegment{s.at("text").get<std::string>()});
            } else if (s.contains("image")) {
                r.segments.emplace_back(ImageRef{s.at("image").get<std::string>()});
            } else {
                throw Error(ErrorCode::FormatError, "segment must have 'text' or 'image'");
            }
        }
        if (j.contains("instruction") && !j.at("instruction").is_null()) {
            r.instruction = j.at("instruction").get<std::string>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad record json: ") + e.what());
    }
}

std::vector<Record> read_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    std::vector<Record> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(record_from_json(j));
        validate_record(out.back());
    }
    return out;
}

void write_records_jsonl(const std::string& path, const std::vector<Record>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    for (const auto& r : records) {
        out << record_to_json(r).dump() << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path);
    }
}

void sort_and_rank(std::vector<ScoredCandidate>& entries) {
    std::sort(entries.begin(), entries.end(),
              [](const ScoredCandidate& a, const ScoredCandidate& b) { return ranks_before(a, b); });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        entries[i].rank = static_cast<std::uint32_t>(i + 1);
    }
}

void validate_ranked_list(const RankedList& list, bool check_score_order) {
    if (list.entries.size() > list.pool_size) {
        throw Error(ErrorCode::InvalidArgument, "ranked list for '" + list.query_id.str() + "' is longer than its pool");
    }
    std::unordered_set<DocId> seen;
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        const auto& e = list.entries[i];
        if (e.rank != i + 1) {
            throw Error(ErrorCode::InvalidArgument, "ranks are not contiguous at position " + std::to_string(i));
        }
        if (!seen.insert(e.id).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate entry '" + e.id.str() + "'");
        }
        if (check_score_order && i > 0 && !ranks_before(list.entries[i - 1], e)) {
            throw Error(ErrorCode::InvalidArgument, "entries out of (score desc, id asc) order at rank " +
                                                        std::to_string(e.rank));
        }
    }
}

nlohmann::json ranked_list_to_json(const RankedList& list) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : list.entries) {
        entries.push_back({{"id", e.id.str()}, {"score", e.score}, {"rank", e.rank}});
    }
    return {{"query_id", list.query_id.str()}, {"pool_size", list.pool_size}, {"entries", std::move(entries)}};
}

RankedList ranked_list_from_json(const nlohmann::json& j) {
    try {
        RankedList list;
        list.query_id = DocId(j.at("query_id").get<std::string>());
        list.pool_size = j.at("pool_size").get<std::size_t>();
        for (const auto& e : j.at("entries")) {
            list.entries.push_back(
                {DocId(e.at("id").get<std::string>()), e.at("score").get<double>(), e.at("rank").get<std::uint32_t>()});
        }
        return list;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad ranked list json: ") + e.what());
    }
}

bool Qrels::is_relevant(const DocId& query, const DocId& doc) const {
    auto it = map_.find(query);
    return it != map_.end() && it->second.count(doc) != 0;
}

const std::set<DocId>& Qrels::relevant(const DocId& query) const {
    auto it = map_.find(query);
    if (it == map_.end() || it->second.empty()) {
        throw Error(ErrorCode::MissingQrels, "no relevance judgments for query '" + query.str() + "'");
    }
    return it->second;
}

}  // namespace retrank
