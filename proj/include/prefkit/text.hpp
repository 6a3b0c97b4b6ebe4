#pragma once

#include <cstdint>
#include <string_view>

namespace prefkit::text {

// Decodes the code point starting at byte offset i and advances i past it.
// Invalid or truncated sequences decode as U+FFFD and consume one byte, so
// iteration is total on arbitrary input.
inline char32_t decode(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    if (b0 >= 0xF0) {
        len = 4;
    } else if (b0 >= 0xE0) {
        len = 3;
    } else if (b0 >= 0xC0) {
        len = 2;
    }
    if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return 0xFFFD;
    }
    char32_t cp = b0 & (0x7Fu >> len);
    for (int k = 1; k < len; ++k) {
        const auto bk = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (bk & 0x3Fu);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

// Character counts throughout the toolkit are Unicode code points, not
// bytes; byte counts would triple-weight CJK text.
inline std::size_t count_codepoints(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size();) {
        decode(s, i);
        ++n;
    }
    return n;
}

// CJK unified ideographs (URO, extensions A-G) plus the compatibility block.
inline bool is_cjk_ideograph(char32_t c) {
    return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
           (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x20000 && c <= 0x2A6DF) ||
           (c >= 0x2A700 && c <= 0x2EBEF) || (c >= 0x30000 && c <= 0x3134F);
}

inline bool is_whitespace(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == 0xA0 || (c >= 0x2000 && c <= 0x200B) || c == 0x2028 || c == 0x2029 ||
           c == 0x205F || c == 0x3000;
}

inline bool is_ascii_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

// ASCII punctuation, general punctuation, CJK symbols, and fullwidth forms.
inline bool is_punctuation(char32_t c) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E) || (c >= 0x2010 && c <= 0x2027) ||
           (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x303F) ||
           (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
           (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65);
}

}  // namespace prefkit::text
