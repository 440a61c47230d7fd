#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace codemix::detail {

// Byte offsets of code point starts plus the total byte length. Invalid
// bytes are treated as single one-byte code points rather than rejected.
struct Utf8View {
    std::vector<std::size_t> offsets; // offsets.size() == code point count + 1
    std::vector<std::uint32_t> cps;
};

inline Utf8View decode_utf8(const std::string& s) {
    Utf8View view;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        view.offsets.push_back(i);
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        std::uint32_t cp = b0;
        if (b0 >= 0xF0) {
            len = 4;
            cp = b0 & 0x07u;
        } else if (b0 >= 0xE0) {
            len = 3;
            cp = b0 & 0x0Fu;
        } else if (b0 >= 0xC0) {
            len = 2;
            cp = b0 & 0x1Fu;
        }
        if (i + len > n) len = 1, cp = b0;
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0u) != 0x80u) {
                len = 1;
                cp = b0;
                break;
            }
            cp = (cp << 6) | (b & 0x3Fu);
        }
        view.cps.push_back(cp);
        i += len;
    }
    view.offsets.push_back(n);
    return view;
}

inline bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_punct(std::uint32_t cp) {
    if ((cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
        (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E)) {
        return true;
    }
    switch (cp) {
        case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
            return true;
        default:
            return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E);
    }
}

} // namespace codemix::detail
