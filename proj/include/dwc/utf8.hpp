#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace dwc::utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

struct Sanitized {
    std::string text;
    std::size_t replacements = 0;
};

/// Replace every invalid byte sequence (including encoded surrogates and
/// overlong forms) with U+FFFD. One replacement per maximal invalid subpart.
Sanitized sanitize(std::string_view bytes);

bool is_valid(std::string_view bytes);

/// Byte length of the valid sequence starting at `pos`, or 0 if invalid.
std::size_t sequence_length(std::string_view s, std::size_t pos);

/// Decode the code point starting at `pos` and advance `pos`. Input must be
/// valid UTF-8; invalid bytes decode as U+FFFD and advance by one.
char32_t next(std::string_view s, std::size_t& pos);

void append(std::string& out, char32_t cp);

std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);

std::size_t length(std::string_view s);

/// Longest prefix of `s` no longer than `max_bytes` that does not split a
/// code point.
std::string_view truncate(std::string_view s, std::size_t max_bytes);

}  // namespace dwc::utf8
