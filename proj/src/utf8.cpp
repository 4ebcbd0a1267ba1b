#include "dwc/utf8.hpp"

namespace dwc::utf8 {

namespace {

// Returns the byte length of a valid sequence starting at s[pos], or 0.
std::size_t valid_sequence_length(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return 1;
    const std::size_t left = s.size() - pos;
    auto cont = [&](std::size_t i) {
        return i < left && (static_cast<unsigned char>(s[pos + i]) & 0xC0) == 0x80;
    };
    if (b0 >= 0xC2 && b0 <= 0xDF) return cont(1) ? 2 : 0;
    if (b0 >= 0xE0 && b0 <= 0xEF) {
        if (!cont(1) || !cont(2)) return 0;
        const auto b1 = static_cast<unsigned char>(s[pos + 1]);
        if (b0 == 0xE0 && b1 < 0xA0) return 0;  // overlong
        if (b0 == 0xED && b1 >= 0xA0) return 0;  // surrogates
        return 3;
    }
    if (b0 >= 0xF0 && b0 <= 0xF4) {
        if (!cont(1) || !cont(2) || !cont(3)) return 0;
        const auto b1 = static_cast<unsigned char>(s[pos + 1]);
        if (b0 == 0xF0 && b1 < 0x90) return 0;
        if (b0 == 0xF4 && b1 >= 0x90) return 0;
        return 4;
    }
    return 0;
}

// Length of the maximal invalid subpart at pos (at least 1), following the
// Unicode "substitution of maximal subparts" practice.
std::size_t invalid_subpart_length(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    std::size_t need = 0;
    unsigned char lo = 0x80, hi = 0xBF;
    if (b0 >= 0xC2 && b0 <= 0xDF) {
        need = 1;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
        need = 2;
        if (b0 == 0xE0) lo = 0xA0;
        if (b0 == 0xED) hi = 0x9F;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
        need = 3;
        if (b0 == 0xF0) lo = 0x90;
        if (b0 == 0xF4) hi = 0x8F;
    } else {
        return 1;
    }
    std::size_t n = 1;
    for (std::size_t i = 0; i < need && pos + n < s.size(); ++i) {
        const auto b = static_cast<unsigned char>(s[pos + n]);
        const unsigned char l = i == 0 ? lo : 0x80;
        const unsigned char h = i == 0 ? hi : 0xBF;
        if (b < l || b > h) break;
        ++n;
    }
    return n;
}

}  // namespace

Sanitized sanitize(std::string_view bytes) {
    Sanitized out;
    out.text.reserve(bytes.size());
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto n = valid_sequence_length(bytes, pos);
        if (n > 0) {
            out.text.append(bytes.substr(pos, n));
            pos += n;
        } else {
            append(out.text, kReplacement);
            ++out.replacements;
            pos += invalid_subpart_length(bytes, pos);
        }
    }
    return out;
}

std::size_t sequence_length(std::string_view s, std::size_t pos) { return valid_sequence_length(s, pos); }

bool is_valid(std::string_view bytes) {
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto n = valid_sequence_length(bytes, pos);
        if (n == 0) return false;
        pos += n;
    }
    return true;
}

char32_t next(std::string_view s, std::size_t& pos) {
    const auto n = valid_sequence_length(s, pos);
    const auto b0 = static_cast<unsigned char>(s[pos]);
    auto c = [&](std::size_t i) { return static_cast<char32_t>(static_cast<unsigned char>(s[pos + i]) & 0x3F); };
    char32_t cp;
    switch (n) {
        case 1: cp = b0; break;
        case 2: cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | c(1); break;
        case 3: cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (c(1) << 6) | c(2); break;
        case 4: cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (c(1) << 12) | (c(2) << 6) | c(3); break;
        default: pos += 1; return kReplacement;
    }
    pos += n;
    return cp;
}

void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        if (cp >= 0xD800 && cp <= 0xDFFF) cp = kReplacement;
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x110000) {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        append(out, kReplacement);
    }
}

std::u32string decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (pos < s.size()) out.push_back(next(s, pos));
    return out;
}

std::string encode(std::u32string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) append(out, cp);
    return out;
}

std::size_t length(std::string_view s) {
    std::size_t n = 0;
    for (char ch : s) {
        if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::string_view truncate(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return s;
    std::size_t end = max_bytes;
    while (end > 0 && (static_cast<unsigned char>(s[end]) & 0xC0) == 0x80) --end;
    return s.substr(0, end);
}

}  // namespace dwc::utf8
