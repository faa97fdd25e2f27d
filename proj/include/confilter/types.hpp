#pragma once

// Domain types shared by all modules. Every type is an immutable value after
// construction and safe to share across threads.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "confilter/errors.hpp"
#include "confilter/unicode.hpp"

namespace confilter {

struct Query {
    std::string id;
    std::string text;
};

struct Document {
    std::string id;
    std::string query_id;
    std::string text;
    std::optional<std::int64_t> rank;  // retriever rank, 1 = best
};

// A character-window slice of a retrieved document. Offsets count Unicode
// scalar values; text must equal the parent slice [char_start, char_end).
struct Snippet {
    std::string id;
    std::string doc_id;
    std::string query_id;
    std::string text;
    std::size_t char_start = 0;  // inclusive
    std::size_t char_end = 0;    // exclusive
};

// Canonical snippet id scheme: "<doc_id>:<char_start>-<char_end>". Any unique
// scheme would do; this one makes offsets self-describing.
inline std::string make_snippet_id(const std::string& doc_id, std::size_t char_start,
                                   std::size_t char_end) {
    return doc_id + ":" + std::to_string(char_start) + "-" + std::to_string(char_end);
}

enum class LabelSource { llm_judge, human, synthetic };

inline std::string_view to_string(LabelSource s) {
    switch (s) {
        case LabelSource::llm_judge: return "llm-judge";
        case LabelSource::human: return "human";
        case LabelSource::synthetic: return "synthetic";
    }
    return "unknown";
}

inline LabelSource label_source_from_string(std::string_view s) {
    if (s == "llm-judge") return LabelSource::llm_judge;
    if (s == "human") return LabelSource::human;
    if (s == "synthetic") return LabelSource::synthetic;
    throw SchemaError("unknown label source: \"" + std::string(s) + "\"");
}

struct RelevanceLabel {
    std::string query_id;
    std::string snippet_id;
    bool relevant = false;
    LabelSource source = LabelSource::synthetic;
};

// Nonconformity-scored snippet; lower score = more relevant.
struct ScoredSnippet {
    std::string query_id;
    std::string snippet_id;
    double score = 0.0;
    std::string scorer_id;
};

// The unit of calibration: a scored snippet together with its binary label.
struct CalibrationRecord {
    std::string query_id;
    std::string snippet_id;
    double score = 0.0;
    std::string scorer_id;
    bool relevant = false;
    LabelSource source = LabelSource::synthetic;
};

// Quantile threshold from split conformal calibration. tau == nullopt is the
// retain-all sentinel, which holds iff rank > n_positives.
struct ConformalThreshold {
    double alpha = 0.0;
    std::int64_t n_positives = 0;
    std::int64_t rank = 0;  // ceiling((n_positives + 1) * (1 - alpha))
    std::optional<double> tau;
    std::string scorer_id;

    bool retain_all() const { return !tau.has_value(); }
};

// Per-snippet filtering decision: retained iff score <= tau, with the
// retain-all sentinel forcing retained = true.
struct FilterOutcome {
    std::string query_id;
    std::string snippet_id;
    double score = 0.0;
    bool retained = false;
    ConformalThreshold threshold;
};

// Coverage / removal metrics for one (alpha, scorer, dataset) cell.
// empirical_coverage is nullopt when the test set had no relevant snippets;
// it is never reported as 0.0 or 1.0 in that case.
struct CoverageReport {
    double alpha = 0.0;
    std::string scorer_id;
    std::int64_t n_relevant = 0;
    std::int64_t n_relevant_retained = 0;
    std::optional<double> empirical_coverage;
    std::int64_t n_total = 0;
    std::int64_t n_removed = 0;
    double removal_rate = 0.0;
};

// Fixed-length embedding; the dimension is the vector length by construction.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

// A versioned prompt asset with {query} and {snippet} placeholders. The
// version participates in scorer ids so thresholds can never be applied
// across prompt changes.
struct PromptTemplate {
    std::string version;
    std::string text;

    bool has_placeholders() const {
        return text.find("{query}") != std::string::npos &&
               text.find("{snippet}") != std::string::npos;
    }

    std::string render(std::string_view query_text, std::string_view snippet_text) const {
        std::string out = text;
        replace_all(out, "{query}", query_text);
        replace_all(out, "{snippet}", snippet_text);
        return out;
    }

private:
    static void replace_all(std::string& s, std::string_view needle, std::string_view value) {
        std::size_t pos = 0;
        while ((pos = s.find(needle, pos)) != std::string::npos) {
            s.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
};

// --- invariant checks -------------------------------------------------------

inline void validate(const Query& q) {
    if (q.id.empty()) throw SchemaError("query id must be non-empty");
    if (q.text.empty()) throw SchemaError("query text must be non-empty (id=" + q.id + ")");
}

inline void validate(const Document& d) {
    if (d.id.empty()) throw SchemaError("document id must be non-empty");
    if (d.text.empty()) throw SchemaError("document text must be non-empty (id=" + d.id + ")");
    if (d.rank && *d.rank < 1) {
        throw SchemaError("document rank must be >= 1 (id=" + d.id + ")");
    }
}

inline void validate(const Snippet& s) {
    if (s.id.empty()) throw SchemaError("snippet id must be non-empty");
    if (s.char_start >= s.char_end) {
        throw SchemaError("snippet char_start must be < char_end (id=" + s.id + ")");
    }
}

// Slice-equality check against the parent document, in scalar-value space.
inline void validate_against_parent(const Snippet& s, const Document& parent) {
    validate(s);
    if (s.doc_id != parent.id) {
        throw SchemaError("snippet " + s.id + " does not belong to document " + parent.id);
    }
    const std::string slice = unicode::scalar_slice(parent.text, s.char_start, s.char_end);
    if (slice != s.text) {
        throw SchemaError("snippet " + s.id + " text does not equal parent slice [" +
                          std::to_string(s.char_start) + ", " + std::to_string(s.char_end) + ")");
    }
}

inline void validate(const ScoredSnippet& s) {
    if (!std::isfinite(s.score)) {
        throw SchemaError("score must be finite (snippet_id=" + s.snippet_id + ")");
    }
}

// The threshold invariant is assertable from the fields alone.
inline void validate(const ConformalThreshold& t) {
    if (!(t.alpha > 0.0 && t.alpha < 1.0)) {
        throw SchemaError("threshold alpha must lie in (0,1)");
    }
    if (t.n_positives < 0) throw SchemaError("threshold n_positives must be >= 0");
    const auto expected_rank = static_cast<std::int64_t>(
        std::ceil(static_cast<double>(t.n_positives + 1) * (1.0 - t.alpha)));
    if (t.rank != expected_rank) {
        throw SchemaError("threshold rank " + std::to_string(t.rank) +
                          " does not satisfy ceiling((n+1)(1-alpha)) = " +
                          std::to_string(expected_rank));
    }
    const bool must_retain_all = t.rank > t.n_positives;
    if (must_retain_all != t.retain_all()) {
        throw SchemaError("threshold tau sentinel inconsistent with rank > n_positives");
    }
    if (t.tau && !std::isfinite(*t.tau)) throw SchemaError("threshold tau must be finite");
}

inline void validate(const CoverageReport& r) {
    if (r.n_relevant_retained > r.n_relevant || r.n_relevant > r.n_total) {
        throw SchemaError("coverage report counts are inconsistent");
    }
    if (r.n_relevant == 0 && r.empirical_coverage.has_value()) {
        throw SchemaError("coverage must be undefined when n_relevant = 0");
    }
}

}  // namespace confilter
