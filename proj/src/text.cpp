#include "dwc/text.hpp"

#include "dwc/utf8.hpp"

namespace dwc::text {

bool is_whitespace(char32_t cp) noexcept {
    switch (cp) {
        case U' ':
        case U'\t':
        case U'\n':
        case U'\v':
        case U'\f':
        case U'\r':
        case 0x85:
        case 0xA0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_alnum(char32_t cp) noexcept {
    if (cp < 0x80) {
        return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
    }
    if (is_whitespace(cp)) return false;
    if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;
    if (cp >= 0x2E00 && cp <= 0x2E7F) return false;
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    if (cp >= 0xE000 && cp <= 0xF8FF) return false;
    if (cp >= 0xFE10 && cp <= 0xFE1F) return false;
    if (cp >= 0xFE30 && cp <= 0xFE6F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    if (cp >= 0xFF1A && cp <= 0xFF20) return false;
    if (cp >= 0xFF3B && cp <= 0xFF40) return false;
    if (cp >= 0xFF5B && cp <= 0xFF65) return false;
    if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;
    if (cp >= 0xF0000) return false;
    return true;
}

bool is_cjk(char32_t cp) noexcept {
    return (cp >= 0x3040 && cp <= 0x30FF)     // hiragana, katakana
           || (cp >= 0x3400 && cp <= 0x4DBF)  // ext A
           || (cp >= 0x4E00 && cp <= 0x9FFF)  // unified
           || (cp >= 0xAC00 && cp <= 0xD7AF)  // hangul
           || (cp >= 0xF900 && cp <= 0xFAFF)  // compatibility
           || (cp >= 0x20000 && cp <= 0x2FA1F);
}

bool is_sentence_terminal(char32_t cp) noexcept {
    return cp == U'.' || cp == U'!' || cp == U'?' || cp == 0x3002 || cp == 0xFF01 || cp == 0xFF1F;
}

char32_t to_lower(char32_t cp) noexcept {
    if (cp < 0x80) return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
    if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x138 && cp != 0x149 && cp != 0x178 && cp != 0x17F) {
        // Latin Extended-A alternates upper/lower in pairs, with the parity
        // flipping in 0x139..0x148 and 0x179..0x17E.
        const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
        const bool is_upper = odd_upper ? (cp % 2 == 1) : (cp % 2 == 0);
        return is_upper ? cp + 1 : cp;
    }
    return cp;
}

std::vector<std::string> words(std::string_view s, bool lowercase) {
    std::vector<std::string> out;
    std::string current;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t start = pos;
        const char32_t cp = utf8::next(s, pos);
        if (is_cjk(cp)) {
            if (!current.empty()) out.push_back(std::move(current)), current.clear();
            out.emplace_back(s.substr(start, pos - start));
        } else if (is_alnum(cp)) {
            if (lowercase) {
                utf8::append(current, to_lower(cp));
            } else {
                current.append(s.substr(start, pos - start));
            }
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    std::size_t token_start = std::string_view::npos;
    while (pos < s.size()) {
        const std::size_t start = pos;
        const char32_t cp = utf8::next(s, pos);
        if (is_whitespace(cp)) {
            if (token_start != std::string_view::npos) {
                out.push_back(s.substr(token_start, start - token_start));
                token_start = std::string_view::npos;
            }
        } else if (token_start == std::string_view::npos) {
            token_start = start;
        }
    }
    if (token_start != std::string_view::npos) out.push_back(s.substr(token_start));
    return out;
}

std::string normalize_space(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (auto tok : split_whitespace(s)) {
        if (!out.empty()) out.push_back(' ');
        out.append(tok);
    }
    return out;
}

}  // namespace dwc::text
