#pragma once

// JSON Lines readers/writers for the record formats: one record per line,
// UTF-8, keys matching the field names. Doubles are emitted with nlohmann's
// shortest round-trip representation, so write -> read reproduces every score
// bit-for-bit. The retain-all threshold serializes as the string "retain_all"
// in the tau field.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "confilter/errors.hpp"
#include "confilter/types.hpp"

namespace confilter {

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw SchemaError(std::string("missing required field \"") + key + "\"");
    }
    return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
    const auto& v = require_field(j, key);
    if (!v.is_string()) {
        throw SchemaError(std::string("field \"") + key + "\" must be a string");
    }
    return v.get<std::string>();
}

inline double require_number(const nlohmann::json& j, const char* key) {
    const auto& v = require_field(j, key);
    if (!v.is_number()) {
        throw SchemaError(std::string("field \"") + key + "\" must be a number");
    }
    return v.get<double>();
}

inline std::int64_t require_integer(const nlohmann::json& j, const char* key) {
    const auto& v = require_field(j, key);
    if (!v.is_number_integer()) {
        throw SchemaError(std::string("field \"") + key + "\" must be an integer");
    }
    return v.get<std::int64_t>();
}

inline bool require_bool(const nlohmann::json& j, const char* key) {
    const auto& v = require_field(j, key);
    if (!v.is_boolean()) {
        throw SchemaError(std::string("field \"") + key + "\" must be a boolean");
    }
    return v.get<bool>();
}

inline std::size_t require_offset(const nlohmann::json& j, const char* key) {
    const std::int64_t v = require_integer(j, key);
    if (v < 0) {
        throw SchemaError(std::string("field \"") + key + "\" must be >= 0");
    }
    return static_cast<std::size_t>(v);
}

}  // namespace detail

// Shortest decimal representation that reparses to the same double.
inline std::string format_double(double x) {
    return nlohmann::json(x).dump();
}

// --- to_json / from_json ----------------------------------------------------

inline void to_json(nlohmann::json& j, const Query& q) {
    j = nlohmann::json{{"id", q.id}, {"text", q.text}};
}

inline void from_json(const nlohmann::json& j, Query& q) {
    q.id = detail::require_string(j, "id");
    q.text = detail::require_string(j, "text");
    validate(q);
}

inline void to_json(nlohmann::json& j, const Document& d) {
    j = nlohmann::json{{"id", d.id}, {"query_id", d.query_id}, {"text", d.text}};
    if (d.rank) j["rank"] = *d.rank;
}

// Loading stays lenient about empty text so a bad document surfaces as a
// per-document segmentation failure (with its id) instead of killing the
// whole file read; validate(Document) still enforces the full invariant.
inline void from_json(const nlohmann::json& j, Document& d) {
    d.id = detail::require_string(j, "id");
    d.query_id = detail::require_string(j, "query_id");
    d.text = detail::require_string(j, "text");
    if (j.contains("rank") && !j.at("rank").is_null()) {
        d.rank = detail::require_integer(j, "rank");
    } else {
        d.rank.reset();
    }
    if (d.id.empty()) throw SchemaError("document id must be non-empty");
    if (d.rank && *d.rank < 1) {
        throw SchemaError("document rank must be >= 1 (id=" + d.id + ")");
    }
}

inline void to_json(nlohmann::json& j, const Snippet& s) {
    j = nlohmann::json{{"id", s.id},
                       {"doc_id", s.doc_id},
                       {"query_id", s.query_id},
                       {"text", s.text},
                       {"char_start", s.char_start},
                       {"char_end", s.char_end}};
}

inline void from_json(const nlohmann::json& j, Snippet& s) {
    s.id = detail::require_string(j, "id");
    s.doc_id = detail::require_string(j, "doc_id");
    s.query_id = detail::require_string(j, "query_id");
    s.text = detail::require_string(j, "text");
    s.char_start = detail::require_offset(j, "char_start");
    s.char_end = detail::require_offset(j, "char_end");
    validate(s);
}

inline void to_json(nlohmann::json& j, const RelevanceLabel& l) {
    j = nlohmann::json{{"query_id", l.query_id},
                       {"snippet_id", l.snippet_id},
                       {"relevant", l.relevant},
                       {"source", to_string(l.source)}};
}

inline void from_json(const nlohmann::json& j, RelevanceLabel& l) {
    l.query_id = detail::require_string(j, "query_id");
    l.snippet_id = detail::require_string(j, "snippet_id");
    l.relevant = detail::require_bool(j, "relevant");
    l.source = label_source_from_string(detail::require_string(j, "source"));
}

inline void to_json(nlohmann::json& j, const ScoredSnippet& s) {
    j = nlohmann::json{{"query_id", s.query_id},
                       {"snippet_id", s.snippet_id},
                       {"score", s.score},
                       {"scorer_id", s.scorer_id}};
}

inline void from_json(const nlohmann::json& j, ScoredSnippet& s) {
    s.query_id = detail::require_string(j, "query_id");
    s.snippet_id = detail::require_string(j, "snippet_id");
    s.score = detail::require_number(j, "score");
    s.scorer_id = detail::require_string(j, "scorer_id");
    validate(s);
}

inline void to_json(nlohmann::json& j, const CalibrationRecord& r) {
    j = nlohmann::json{{"query_id", r.query_id}, {"snippet_id", r.snippet_id},
                       {"score", r.score},       {"scorer_id", r.scorer_id},
                       {"relevant", r.relevant}, {"source", to_string(r.source)}};
}

inline void from_json(const nlohmann::json& j, CalibrationRecord& r) {
    r.query_id = detail::require_string(j, "query_id");
    r.snippet_id = detail::require_string(j, "snippet_id");
    r.score = detail::require_number(j, "score");
    r.scorer_id = detail::require_string(j, "scorer_id");
    r.relevant = detail::require_bool(j, "relevant");
    r.source = label_source_from_string(detail::require_string(j, "source"));
    if (!std::isfinite(r.score)) {
        throw SchemaError("calibration score must be finite (snippet_id=" + r.snippet_id + ")");
    }
}

inline void to_json(nlohmann::json& j, const ConformalThreshold& t) {
    j = nlohmann::json{{"alpha", t.alpha},
                       {"n_positives", t.n_positives},
                       {"rank", t.rank},
                       {"scorer_id", t.scorer_id}};
    if (t.tau) {
        j["tau"] = *t.tau;
    } else {
        j["tau"] = "retain_all";
    }
}

inline void from_json(const nlohmann::json& j, ConformalThreshold& t) {
    t.alpha = detail::require_number(j, "alpha");
    t.n_positives = detail::require_integer(j, "n_positives");
    t.rank = detail::require_integer(j, "rank");
    t.scorer_id = detail::require_string(j, "scorer_id");
    const auto& tau = detail::require_field(j, "tau");
    if (tau.is_string()) {
        if (tau.get<std::string>() != "retain_all") {
            throw SchemaError("tau must be a number or the string \"retain_all\"");
        }
        t.tau.reset();
    } else if (tau.is_number()) {
        t.tau = tau.get<double>();
    } else {
        throw SchemaError("tau must be a number or the string \"retain_all\"");
    }
    validate(t);
}

inline void to_json(nlohmann::json& j, const FilterOutcome& o) {
    j = nlohmann::json{{"query_id", o.query_id},
                       {"snippet_id", o.snippet_id},
                       {"score", o.score},
                       {"retained", o.retained},
                       {"threshold", o.threshold}};
}

inline void from_json(const nlohmann::json& j, FilterOutcome& o) {
    o.query_id = detail::require_string(j, "query_id");
    o.snippet_id = detail::require_string(j, "snippet_id");
    o.score = detail::require_number(j, "score");
    o.retained = detail::require_bool(j, "retained");
    detail::require_field(j, "threshold").get_to(o.threshold);
}

inline void to_json(nlohmann::json& j, const CoverageReport& r) {
    j = nlohmann::json{{"alpha", r.alpha},
                       {"scorer_id", r.scorer_id},
                       {"n_relevant", r.n_relevant},
                       {"n_relevant_retained", r.n_relevant_retained},
                       {"n_total", r.n_total},
                       {"n_removed", r.n_removed},
                       {"removal_rate", r.removal_rate}};
    if (r.empirical_coverage) {
        j["empirical_coverage"] = *r.empirical_coverage;
    } else {
        j["empirical_coverage"] = nullptr;
    }
}

inline void from_json(const nlohmann::json& j, CoverageReport& r) {
    r.alpha = detail::require_number(j, "alpha");
    r.scorer_id = detail::require_string(j, "scorer_id");
    r.n_relevant = detail::require_integer(j, "n_relevant");
    r.n_relevant_retained = detail::require_integer(j, "n_relevant_retained");
    r.n_total = detail::require_integer(j, "n_total");
    r.n_removed = detail::require_integer(j, "n_removed");
    r.removal_rate = detail::require_number(j, "removal_rate");
    const auto& cov = detail::require_field(j, "empirical_coverage");
    if (cov.is_null()) {
        r.empirical_coverage.reset();
    } else if (cov.is_number()) {
        r.empirical_coverage = cov.get<double>();
    } else {
        throw SchemaError("empirical_coverage must be a number or null");
    }
    validate(r);
}

// --- file I/O ----------------------------------------------------------------

template <typename Record>
constexpr const char* record_kind_name();

template <> constexpr const char* record_kind_name<Query>() { return "query"; }
template <> constexpr const char* record_kind_name<Document>() { return "document"; }
template <> constexpr const char* record_kind_name<Snippet>() { return "snippet"; }
template <> constexpr const char* record_kind_name<RelevanceLabel>() { return "relevance_label"; }
template <> constexpr const char* record_kind_name<ScoredSnippet>() { return "scored_snippet"; }
template <> constexpr const char* record_kind_name<CalibrationRecord>() { return "calibration_record"; }
template <> constexpr const char* record_kind_name<ConformalThreshold>() { return "conformal_threshold"; }
template <> constexpr const char* record_kind_name<FilterOutcome>() { return "filter_outcome"; }
template <> constexpr const char* record_kind_name<CoverageReport>() { return "coverage_report"; }

// Reads all records in file order. Blank lines are skipped; duplicates are
// preserved for later validation. Errors carry the 1-based line number.
template <typename Record>
std::vector<Record> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::vector<Record> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed " +
                             record_kind_name<Record>() + " record: " + e.what());
        }
        try {
            records.push_back(j.template get<Record>());
        } catch (const SchemaError& e) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

// Writes one record per line, atomically (temp file then rename).
template <typename Record>
void write_records(const std::vector<Record>& records, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        for (const Record& r : records) {
            out << nlohmann::json(r).dump() << '\n';
        }
        out.flush();
        if (!out) {
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                      ec.message());
    }
}

// Label datasets admit exactly one label per (query_id, snippet_id); a
// duplicate is a hard error here rather than last-write-wins, since silent
// label conflicts would corrupt calibration.
inline std::vector<RelevanceLabel> read_labels_checked(const std::filesystem::path& path) {
    auto labels = read_records<RelevanceLabel>(path);
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        const std::string key = l.query_id + '\x1f' + l.snippet_id;
        if (!seen.insert(key).second) {
            throw SchemaError(path.string() + ": duplicate label for (" + l.query_id + ", " +
                              l.snippet_id + ")");
        }
    }
    return labels;
}

}  // namespace confilter
