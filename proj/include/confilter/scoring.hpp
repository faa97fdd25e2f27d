#pragma once

// Nonconformity scoring functions A(q, s), lower = more relevant:
//   - embedding: 1 - cos(emb(q), emb(s)), range [0, 2]
//   - llm-rating: 1 - rating, rating parsed from a model response in [0, 1]
//   - lexical: 1 - token overlap coefficient, deterministic and offline
//
// Every scorer returns exactly one score per snippet, in input order. Parsed
// LLM ratings are preserved as-is (no re-binning), so quantization effects in
// model output stay observable downstream.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "confilter/errors.hpp"
#include "confilter/gateway.hpp"
#include "confilter/types.hpp"

namespace confilter {

enum class ScorerKind { embedding, llm_rating, lexical };

inline std::string_view to_string(ScorerKind k) {
    switch (k) {
        case ScorerKind::embedding: return "embedding";
        case ScorerKind::llm_rating: return "llm-rating";
        case ScorerKind::lexical: return "lexical";
    }
    return "unknown";
}

inline ScorerKind scorer_kind_from_string(std::string_view s) {
    if (s == "embedding") return ScorerKind::embedding;
    if (s == "llm-rating") return ScorerKind::llm_rating;
    if (s == "lexical") return ScorerKind::lexical;
    throw ConfigError("unknown scorer kind: \"" + std::string(s) + "\"");
}

struct ScorerSpec {
    std::string scorer_id;
    ScorerKind kind = ScorerKind::lexical;
    std::string model_name;    // required for embedding and llm-rating
    std::string endpoint_ref;  // key into the configured gateways
};

inline void validate(const ScorerSpec& spec) {
    if (spec.scorer_id.empty()) throw ConfigError("scorer_id must be non-empty");
    if (spec.kind == ScorerKind::embedding || spec.kind == ScorerKind::llm_rating) {
        if (spec.model_name.empty()) {
            throw ConfigError("scorer kind \"" + std::string(to_string(spec.kind)) +
                              "\" requires model_name");
        }
        if (spec.endpoint_ref.empty()) {
            throw ConfigError("scorer kind \"" + std::string(to_string(spec.kind)) +
                              "\" requires endpoint_ref");
        }
    }
}

// 1 - (u.v)/(|u||v|), clamped to [0, 2] against rounding drift.
inline double cosine_distance(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim()) {
        throw DomainError("cosine_distance dimension mismatch: " + std::to_string(u.dim()) +
                          " vs " + std::to_string(v.dim()));
    }
    if (u.dim() == 0) {
        throw DomainError("cosine_distance requires non-empty vectors");
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) {
        if (!std::isfinite(u.values[i]) || !std::isfinite(v.values[i])) {
            throw DomainError("cosine_distance requires finite entries");
        }
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        throw DomainError("cosine_distance is undefined for zero-norm vectors");
    }
    const double d = 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(d, 0.0, 2.0);
}

inline PromptTemplate load_prompt_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open prompt template " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return {path.stem().string(), buf.str()};
}

// First decimal numeral in the response, optionally prefixed by a label
// token ("relevance: 0.7"). Nothing numeric -> nullopt.
inline std::optional<double> parse_rating(std::string_view response) {
    for (std::size_t i = 0; i < response.size(); ++i) {
        const auto c = static_cast<unsigned char>(response[i]);
        const bool digit = std::isdigit(c) != 0;
        const bool dot_digit = response[i] == '.' && i + 1 < response.size() &&
                               std::isdigit(static_cast<unsigned char>(response[i + 1]));
        if (!digit && !dot_digit) continue;
        std::size_t end = i;
        bool seen_dot = false;
        while (end < response.size()) {
            const char ch = response[end];
            if (std::isdigit(static_cast<unsigned char>(ch))) {
                ++end;
            } else if (ch == '.' && !seen_dot && end + 1 < response.size() &&
                       std::isdigit(static_cast<unsigned char>(response[end + 1]))) {
                seen_dot = true;
                ++end;
            } else {
                break;
            }
        }
        return std::stod(std::string(response.substr(i, end - i)));
    }
    return std::nullopt;
}

// Scorer id for LLM-rated scores carries the prompt template version, so a
// threshold calibrated under one prompt can never be applied to scores from
// another (apply_filter enforces the equality).
inline std::string versioned_scorer_id(const ScorerSpec& spec, const PromptTemplate& tpl) {
    if (tpl.version.empty()) return spec.scorer_id;
    return spec.scorer_id + "@" + tpl.version;
}

// Conformal-Embedding scoring: the query is embedded once and reused across
// its snippets; the gateway batches the snippet texts.
inline std::vector<ScoredSnippet> score_embedding(const Query& query,
                                                  const std::vector<Snippet>& snippets,
                                                  const ScorerSpec& spec, Gateway& gateway) {
    if (spec.kind != ScorerKind::embedding) {
        throw ConfigError("score_embedding requires a scorer spec of kind embedding");
    }
    validate(spec);
    if (snippets.empty()) return {};

    const EmbeddingVector query_vec = gateway.embed({query.text}).front();
    std::vector<std::string> texts;
    texts.reserve(snippets.size());
    for (const auto& s : snippets) texts.push_back(s.text);
    const std::vector<EmbeddingVector> vecs = gateway.embed(texts);

    std::vector<ScoredSnippet> scored;
    scored.reserve(snippets.size());
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        scored.push_back({snippets[i].query_id, snippets[i].id,
                          cosine_distance(query_vec, vecs[i]), spec.scorer_id});
    }
    return scored;
}

// Conformal-LLM scoring: score = 1 - rating. An unparseable response gets one
// re-ask; out-of-range ratings are clamped to [0, 1] and logged rather than
// failing a long batch run.
inline std::vector<ScoredSnippet> score_llm(const Query& query,
                                            const std::vector<Snippet>& snippets,
                                            const ScorerSpec& spec, Gateway& gateway,
                                            const PromptTemplate& rating_template) {
    if (spec.kind != ScorerKind::llm_rating) {
        throw ConfigError("score_llm requires a scorer spec of kind llm-rating");
    }
    validate(spec);
    if (!rating_template.has_placeholders()) {
        throw ConfigError("rating template must contain {query} and {snippet} placeholders");
    }
    const std::string scorer_id = versioned_scorer_id(spec, rating_template);

    std::vector<ScoredSnippet> scored;
    scored.reserve(snippets.size());
    for (const auto& snippet : snippets) {
        const std::string prompt = rating_template.render(query.text, snippet.text);
        std::optional<double> rating;
        std::string response;
        for (int ask = 0; ask < 2 && !rating; ++ask) {
            response = gateway.complete(prompt);
            rating = parse_rating(response);
        }
        if (!rating) {
            throw LabelingError("unparseable rating for snippet " + snippet.id +
                                "; raw response: " + response);
        }
        if (*rating < 0.0 || *rating > 1.0) {
            std::cerr << "confilter: clamping out-of-range rating " << *rating
                      << " for snippet " << snippet.id << "\n";
            rating = std::clamp(*rating, 0.0, 1.0);
        }
        scored.push_back({snippet.query_id, snippet.id, 1.0 - *rating, scorer_id});
    }
    return scored;
}

// Deterministic offline scorer: 1 - |T(q) & T(s)| / max(1, min(|T(q)|, |T(s)|))
// over lowercased whitespace-delimited token sets.
inline std::vector<ScoredSnippet> score_lexical(const Query& query,
                                                const std::vector<Snippet>& snippets,
                                                const std::string& scorer_id = "lexical") {
    auto tokens = [](std::string_view text) {
        std::unordered_set<std::string> set;
        std::string current;
        auto flush = [&] {
            if (!current.empty()) {
                set.insert(current);
                current.clear();
            }
        };
        for (char ch : text) {
            if (std::isspace(static_cast<unsigned char>(ch))) {
                flush();
            } else {
                current.push_back(
                    static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            }
        }
        flush();
        return set;
    };

    const auto query_tokens = tokens(query.text);
    std::vector<ScoredSnippet> scored;
    scored.reserve(snippets.size());
    for (const auto& snippet : snippets) {
        const auto snippet_tokens = tokens(snippet.text);
        std::size_t overlap = 0;
        const auto& smaller =
            query_tokens.size() <= snippet_tokens.size() ? query_tokens : snippet_tokens;
        const auto& larger =
            query_tokens.size() <= snippet_tokens.size() ? snippet_tokens : query_tokens;
        for (const auto& t : smaller) {
            if (larger.count(t)) ++overlap;
        }
        const double denom = static_cast<double>(std::max<std::size_t>(
            1, std::min(query_tokens.size(), snippet_tokens.size())));
        scored.push_back({snippet.query_id, snippet.id,
                          1.0 - static_cast<double>(overlap) / denom, scorer_id});
    }
    return scored;
}

}  // namespace confilter
