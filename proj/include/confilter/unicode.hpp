#pragma once

// UTF-8 decoding helpers. All character offsets in this library count Unicode
// scalar values, not bytes, so multilingual text segments identically
// regardless of encoding width.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "confilter/errors.hpp"

namespace confilter::unicode {

struct DecodedText {
    std::u32string scalars;
    // byte_starts[i] is the byte offset where scalar i begins;
    // byte_starts.size() == scalars.size() + 1, the last entry is the byte length.
    std::vector<std::size_t> byte_starts;
};

// Decodes and validates UTF-8. Rejects truncated sequences, overlong
// encodings, surrogates and scalar values above U+10FFFF.
inline DecodedText decode_text(std::string_view text) {
    DecodedText out;
    out.scalars.reserve(text.size());
    out.byte_starts.reserve(text.size() + 1);

    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        out.byte_starts.push_back(i);
        const auto b0 = static_cast<unsigned char>(text[i]);
        char32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            throw ParseError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (i + len > n) {
            throw ParseError("truncated UTF-8 sequence at offset " + std::to_string(i));
        }
        for (std::size_t k = 1; k < len; ++k) {
            const auto bk = static_cast<unsigned char>(text[i + k]);
            if ((bk & 0xC0) != 0x80) {
                throw ParseError("invalid UTF-8 continuation byte at offset " +
                                 std::to_string(i + k));
            }
            cp = (cp << 6) | (bk & 0x3F);
        }
        static constexpr char32_t kMinForLen[5] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMinForLen[len]) {
            throw ParseError("overlong UTF-8 encoding at offset " + std::to_string(i));
        }
        if (cp >= 0xD800 && cp <= 0xDFFF) {
            throw ParseError("UTF-8 encoded surrogate at offset " + std::to_string(i));
        }
        if (cp > 0x10FFFF) {
            throw ParseError("scalar value out of range at offset " + std::to_string(i));
        }
        out.scalars.push_back(cp);
        i += len;
    }
    out.byte_starts.push_back(n);
    return out;
}

inline std::size_t scalar_length(std::string_view text) {
    return decode_text(text).scalars.size();
}

// Slice [from, to) in scalar-value offsets, returned as UTF-8 bytes.
inline std::string scalar_slice(std::string_view text, std::size_t from, std::size_t to) {
    const DecodedText decoded = decode_text(text);
    const std::size_t count = decoded.scalars.size();
    if (from > to || to > count) {
        throw DomainError("scalar_slice: range [" + std::to_string(from) + ", " +
                          std::to_string(to) + ") out of bounds for length " +
                          std::to_string(count));
    }
    return std::string(text.substr(decoded.byte_starts[from],
                                   decoded.byte_starts[to] - decoded.byte_starts[from]));
}

inline std::string encode_utf8(std::u32string_view scalars) {
    std::string out;
    out.reserve(scalars.size());
    for (char32_t cp : scalars) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

}  // namespace confilter::unicode
