#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dwc::text {

bool is_whitespace(char32_t cp) noexcept;

/// Letters, digits and marks in any script. Punctuation, symbol, emoji,
/// control and private-use ranges are excluded.
bool is_alnum(char32_t cp) noexcept;

/// Han ideographs, kana and hangul syllables: each forms a word on its own.
bool is_cjk(char32_t cp) noexcept;

bool is_sentence_terminal(char32_t cp) noexcept;

char32_t to_lower(char32_t cp) noexcept;

/// Word split on whitespace and punctuation. CJK characters are single-char
/// words. With `lowercase`, tokens are case-folded.
std::vector<std::string> words(std::string_view s, bool lowercase = false);

/// Whitespace-separated tokens, unmodified.
std::vector<std::string_view> split_whitespace(std::string_view s);

/// Collapse every whitespace run to one ASCII space and trim both ends.
std::string normalize_space(std::string_view s);

}  // namespace dwc::text
