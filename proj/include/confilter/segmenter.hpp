#pragma once

// Splits retrieved documents into overlapping character windows, optionally
// snapping window ends to nearby sentence boundaries. All offsets count
// Unicode scalar values.

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "confilter/errors.hpp"
#include "confilter/types.hpp"
#include "confilter/unicode.hpp"

namespace confilter {

struct SegmenterConfig {
    std::size_t window_chars = 500;
    std::size_t overlap_total_chars = 100;  // split as overlap_total/2 per side
    bool respect_sentences = true;
    std::size_t max_boundary_shift_chars = 100;
};

inline void validate(const SegmenterConfig& cfg) {
    if (cfg.window_chars == 0) {
        throw DomainError("segmenter window_chars must be > 0");
    }
    if (cfg.overlap_total_chars >= cfg.window_chars) {
        throw DomainError("segmenter overlap_total_chars must be < window_chars");
    }
    if (2 * cfg.max_boundary_shift_chars >= cfg.window_chars) {
        throw DomainError("segmenter max_boundary_shift_chars must be < window_chars / 2");
    }
}

namespace detail {

inline bool is_latin_terminator(char32_t c) {
    return c == U'.' || c == U'!' || c == U'?';
}

// Full-width CJK sentence enders finish a sentence without trailing space.
inline bool is_cjk_terminator(char32_t c) {
    return c == U'。' || c == U'！' || c == U'？';
}

inline bool is_space_scalar(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == U'　';
}

// Boundary offsets over decoded scalars; offset 0 and text length excluded.
inline std::vector<std::size_t> sentence_boundaries(const std::u32string& scalars) {
    std::vector<std::size_t> boundaries;
    const std::size_t n = scalars.size();
    for (std::size_t i = 1; i < n; ++i) {
        const char32_t prev = scalars[i - 1];
        if (is_cjk_terminator(prev)) {
            boundaries.push_back(i);
        } else if (is_latin_terminator(prev) && is_space_scalar(scalars[i])) {
            boundaries.push_back(i);
        }
    }
    return boundaries;
}

// Nearest boundary to `target` within +-max_shift, strictly inside
// (floor, limit); earlier boundary wins ties. Returns target when none fits.
inline std::size_t snap_to_boundary(const std::vector<std::size_t>& boundaries,
                                    std::size_t target, std::size_t max_shift,
                                    std::size_t floor, std::size_t limit) {
    std::size_t best = target;
    std::size_t best_dist = max_shift + 1;
    auto lo = std::lower_bound(boundaries.begin(), boundaries.end(),
                               target > max_shift ? target - max_shift : 0);
    for (auto it = lo; it != boundaries.end() && *it <= target + max_shift; ++it) {
        if (*it <= floor || *it >= limit) continue;
        const std::size_t dist = (*it > target) ? *it - target : target - *it;
        if (dist < best_dist) {
            best = *it;
            best_dist = dist;
        }
    }
    return best;
}

}  // namespace detail

// Offsets immediately after a sentence terminator {., !, ?} followed by
// whitespace, or after a CJK terminator {U+3002, U+FF01, U+FF1F}. Offsets are
// strictly increasing; 0 and the text length never appear.
inline std::vector<std::size_t> detect_sentence_boundaries(std::string_view text) {
    return detail::sentence_boundaries(unicode::decode_text(text).scalars);
}

// Cuts the document into windows of window_chars, each consecutive pair
// overlapping. With respect_sentences = false the windows advance by exactly
// window_chars - overlap_total_chars. With respect_sentences = true each
// window end may shift by up to max_boundary_shift_chars to the nearest
// sentence boundary, and the next window starts one half-overlap before the
// (possibly snapped) end, so coverage is never broken. The final window ends
// at the text end and may be shorter than window_chars.
inline std::vector<Snippet> segment(const Document& document, const SegmenterConfig& config) {
    validate(config);
    if (document.text.empty()) {
        throw DomainError("cannot segment empty document (id=" + document.id + ")");
    }

    const unicode::DecodedText decoded = unicode::decode_text(document.text);
    const std::size_t n = decoded.scalars.size();
    const std::vector<std::size_t> boundaries =
        config.respect_sentences ? detail::sentence_boundaries(decoded.scalars)
                                 : std::vector<std::size_t>{};

    auto slice_bytes = [&](std::size_t from, std::size_t to) {
        return std::string(document.text.substr(decoded.byte_starts[from],
                                                decoded.byte_starts[to] - decoded.byte_starts[from]));
    };

    std::vector<Snippet> snippets;
    std::size_t start = 0;
    while (true) {
        const std::size_t nominal_end = start + config.window_chars;
        if (nominal_end >= n) {
            snippets.push_back({make_snippet_id(document.id, start, n), document.id,
                                document.query_id, slice_bytes(start, n), start, n});
            break;
        }
        std::size_t end = nominal_end;
        if (config.respect_sentences) {
            end = detail::snap_to_boundary(boundaries, nominal_end,
                                           config.max_boundary_shift_chars, start, n);
        }
        snippets.push_back({make_snippet_id(document.id, start, end), document.id,
                            document.query_id, slice_bytes(start, end), start, end});
        start = config.respect_sentences ? end - config.overlap_total_chars / 2
                                         : end - config.overlap_total_chars;
    }
    return snippets;
}

}  // namespace confilter
