#include "retrank/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace retrank {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename PerQuery>
double mean_over_queries(const std::vector<RankedList>& run, const Qrels& qrels, PerQuery&& per_query) {
    if (run.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& list : run) {
        total += per_query(list, qrels.relevant(list.query_id));
    }
    return total / static_cast<double>(run.size());
}

void require_positive_k(std::size_t k) {
    if (k == 0) {
        throw Error(ErrorCode::InvalidArgument, "metric cutoff must be at least 1");
    }
}

std::size_t parse_cutoff(const std::string& name, std::size_t at) {
    std::size_t k = 0;
    const char* first = name.data() + at + 1;
    const char* last = name.data() + name.size();
    auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec != std::errc() || ptr != last || k == 0) {
        throw Error(ErrorCode::InvalidArgument, "bad metric cutoff in '" + name + "'");
    }
    return k;
}

}  // namespace

Qrels parse_qrels(const std::string& text) {
    Qrels qrels;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string q, iter, doc;
        int rel = 0;
        if (!(fields >> q >> iter >> doc >> rel)) {
            throw Error(ErrorCode::FormatError, "malformed qrels line " + std::to_string(lineno));
        }
        if (rel > 0) {
            qrels.add(DocId(q), DocId(doc));
        }
    }
    return qrels;
}

Qrels read_qrels(const std::string& path) { return parse_qrels(slurp(path)); }

void write_qrels(const std::string& path, const Qrels& qrels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    for (const auto& [q, docs] : qrels.all()) {
        for (const auto& d : docs) {
            out << q.str() << " 0 " << d.str() << " 1\n";
        }
    }
}

double recall_at_k(const std::vector<RankedList>& run, const Qrels& qrels, std::size_t k) {
    require_positive_k(k);
    return mean_over_queries(run, qrels, [k](const RankedList& list, const std::set<DocId>& rel) {
        const std::size_t n = std::min(k, list.entries.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (rel.count(list.entries[i].id)) {
                return 1.0;
            }
        }
        return 0.0;
    });
}

double recall_fraction_at_k(const std::vector<RankedList>& run, const Qrels& qrels, std::size_t k) {
    require_positive_k(k);
    return mean_over_queries(run, qrels, [k](const RankedList& list, const std::set<DocId>& rel) {
        const std::size_t n = std::min(k, list.entries.size());
        std::size_t found = 0;
        for (std::size_t i = 0; i < n; ++i) {
            found += rel.count(list.entries[i].id);
        }
        return static_cast<double>(found) / static_cast<double>(rel.size());
    });
}

double map_at_k(const std::vector<RankedList>& run, const Qrels& qrels, std::size_t k) {
    require_positive_k(k);
    return mean_over_queries(run, qrels, [k](const RankedList& list, const std::set<DocId>& rel) {
        const std::size_t n = std::min(k, list.entries.size());
        std::size_t hits = 0;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (rel.count(list.entries[i].id)) {
                ++hits;
                sum += static_cast<double>(hits) / static_cast<double>(i + 1);
            }
        }
        return sum / static_cast<double>(std::min(rel.size(), k));
    });
}

double itm_accuracy(const std::vector<std::pair<DocId, DocId>>& decisions, const Qrels& qrels) {
    if (decisions.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (const auto& [query, chosen] : decisions) {
        correct += qrels.relevant(query).count(chosen);
    }
    return static_cast<double>(correct) / static_cast<double>(decisions.size());
}

double itm_accuracy(const std::vector<RankedList>& run, const Qrels& qrels) {
    std::vector<std::pair<DocId, DocId>> decisions;
    decisions.reserve(run.size());
    for (const auto& list : run) {
        if (list.entries.size() != 2) {
            throw Error(ErrorCode::WrongCandidateCount, "query '" + list.query_id.str() + "' has " +
                                                            std::to_string(list.entries.size()) +
                                                            " candidates, matching needs exactly 2");
        }
        auto best = std::min_element(list.entries.begin(), list.entries.end(),
                                     [](const ScoredCandidate& a, const ScoredCandidate& b) { return ranks_before(a, b); });
        decisions.emplace_back(list.query_id, best->id);
    }
    return itm_accuracy(decisions, qrels);
}

std::map<DocId, std::string> read_dataset_assignment(const std::string& path) {
    std::map<DocId, std::string> out;
    std::istringstream in(slurp(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
            throw Error(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": expected id<TAB>dataset");
        }
        out[DocId(line.substr(0, tab))] = line.substr(tab + 1);
    }
    return out;
}

void write_dataset_assignment(const std::string& path, const std::map<DocId, std::string>& assignment) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    for (const auto& [id, tag] : assignment) {
        out << id.str() << '\t' << tag << '\n';
    }
}

PoolFilter build_pool(const PoolSpec& spec, const std::string& dataset) {
    if (spec.mode == PoolMode::Global) {
        return PoolFilter::all();
    }
    std::set<DocId> ids;
    for (const auto& [id, tag] : spec.dataset_of) {
        if (tag == dataset) {
            ids.insert(id);
        }
    }
    if (ids.empty()) {
        throw Error(ErrorCode::UnknownDataset, "no candidates tagged '" + dataset + "'");
    }
    return PoolFilter::only(std::move(ids));
}

EvalReport evaluate(const std::vector<RankedList>& run, const Qrels& qrels, const std::vector<std::string>& metrics,
                    const std::string& run_id, const std::string& pool_mode) {
    EvalReport report;
    report.run_id = run_id;
    report.pool_mode = pool_mode;
    report.query_count = run.size();
    for (const auto& list : run) {
        report.query_ids.push_back(list.query_id);
    }
    std::sort(report.query_ids.begin(), report.query_ids.end());

    for (const auto& name : metrics) {
        const auto at = name.find('@');
        const std::string family = name.substr(0, at);
        if (name == "accuracy") {
            report.metrics[name] = itm_accuracy(run, qrels);
        } else if (at == std::string::npos) {
            throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
        } else if (family == "recall") {
            report.metrics[name] = recall_at_k(run, qrels, parse_cutoff(name, at));
        } else if (family == "recall_frac") {
            report.metrics[name] = recall_fraction_at_k(run, qrels, parse_cutoff(name, at));
        } else if (family == "map") {
            report.metrics[name] = map_at_k(run, qrels, parse_cutoff(name, at));
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
        }
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, value] : report.metrics) {
        metrics[name] = value;
    }
    nlohmann::json queries = nlohmann::json::array();
    for (const auto& q : report.query_ids) {
        queries.push_back(q.str());
    }
    return {{"run_id", report.run_id},
            {"pool", report.pool_mode},
            {"query_count", report.query_count},
            {"metrics", std::move(metrics)},
            {"query_ids", std::move(queries)}};
}

EvalReport report_from_json(const nlohmann::json& j) {
    try {
        EvalReport r;
        r.run_id = j.at("run_id").get<std::string>();
        r.pool_mode = j.at("pool").get<std::string>();
        r.query_count = j.at("query_count").get<std::size_t>();
        for (const auto& [name, value] : j.at("metrics").items()) {
            r.metrics[name] = value.get<double>();
        }
        for (const auto& q : j.at("query_ids")) {
            r.query_ids.emplace_back(q.get<std::string>());
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad report json: ") + e.what());
    }
}

std::map<std::string, double> compare_runs(const EvalReport& a, const EvalReport& b) {
    if (a.query_ids != b.query_ids) {
        throw Error(ErrorCode::IncompatibleReports, "reports cover different query sets");
    }
    std::map<std::string, double> delta;
    if (a.metrics.size() != b.metrics.size()) {
        throw Error(ErrorCode::IncompatibleReports, "reports carry different metric sets");
    }
    for (const auto& [name, value] : a.metrics) {
        auto it = b.metrics.find(name);
        if (it == b.metrics.end()) {
            throw Error(ErrorCode::IncompatibleReports, "metric '" + name + "' missing from second report");
        }
        delta[name] = it->second - value;
    }
    return delta;
}

std::vector<std::string> split_metric_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

}  // namespace retrank
