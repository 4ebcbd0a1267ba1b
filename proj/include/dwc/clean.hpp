#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

enum class CaseFold { off, lower };
enum class ZhFold { off, to_simplified, to_traditional };

struct CleanOptions {
    bool normalize_whitespace = true;
    bool strip_emoji = true;
    bool strip_garbled = true;
    bool fold_width = true;
    CaseFold fold_case = CaseFold::off;
    ZhFold zh_fold = ZhFold::off;
};

CleanOptions clean_options_from_json(const Json& j);
Json to_json(const CleanOptions& opts);

/// Exact number of edits made by each option. Whitespace counts rewritten
/// runs; every other counter counts affected code points.
struct CleanCounts {
    std::uint64_t whitespace = 0;
    std::uint64_t emoji = 0;
    std::uint64_t garbled = 0;
    std::uint64_t width = 0;
    std::uint64_t case_folded = 0;
    std::uint64_t zh = 0;

    CleanCounts& operator+=(const CleanCounts& o);
    bool operator==(const CleanCounts&) const = default;
    Json to_json() const;
};

/// Emoji code point ranges and the one-to-one traditional/simplified table.
class CleanTables {
public:
    static const CleanTables& builtin();
    static CleanTables parse(std::string_view emoji_ranges, std::string_view zh_variants);
    static CleanTables load(const std::filesystem::path& emoji_ranges, const std::filesystem::path& zh_variants);

    bool is_emoji(char32_t cp) const noexcept;
    std::optional<char32_t> to_simplified(char32_t cp) const;
    std::optional<char32_t> to_traditional(char32_t cp) const;
    std::size_t variant_pairs() const noexcept { return to_simplified_.size(); }

private:
    std::vector<std::pair<char32_t, char32_t>> emoji_;
    std::unordered_map<char32_t, char32_t> to_simplified_;
    std::unordered_map<char32_t, char32_t> to_traditional_;
};

struct GeneralCleanResult {
    std::string text;
    CleanCounts counts;
};

/// Character-level cleaning. Idempotent for every option combination.
/// Input must be valid UTF-8.
GeneralCleanResult clean_general(std::string_view text, const CleanOptions& opts,
                                 const CleanTables& tables = CleanTables::builtin());

enum class Granularity { document, paragraph, sentence };

struct Predicate {
    enum class Kind { literal, prefix, regex, length };
    Kind kind = Kind::literal;
    std::string pattern;
    /// Inclusive code point length bounds for Kind::length.
    std::size_t min_length = 0;
    std::size_t max_length = std::numeric_limits<std::size_t>::max();
};

struct CleanRule {
    std::string name;
    Granularity granularity = Granularity::sentence;
    Predicate predicate;
    /// nullopt drops the unit; otherwise matches are replaced with this.
    std::optional<std::string> replacement;
};

std::vector<CleanRule> clean_rules_from_json(const Json& j);
Json to_json(const std::vector<CleanRule>& rules);

struct ChangeLogEntry {
    std::string rule;
    Granularity granularity = Granularity::sentence;
    bool dropped = false;
    std::string excerpt;
};

/// A validated, compiled rule list. Construction throws ConfigError for an
/// invalid pattern, so no document is touched with a broken rule set.
class CleanRuleSet {
public:
    CleanRuleSet();
    explicit CleanRuleSet(std::vector<CleanRule> rules);
    ~CleanRuleSet();
    CleanRuleSet(CleanRuleSet&&) noexcept;
    CleanRuleSet& operator=(CleanRuleSet&&) noexcept;

    const std::vector<CleanRule>& rules() const noexcept { return rules_; }
    bool empty() const noexcept { return rules_.empty(); }

    bool matches(std::size_t rule, std::string_view unit) const;
    std::string replace(std::size_t rule, std::string_view unit) const;

private:
    struct Compiled;
    std::vector<CleanRule> rules_;
    std::vector<std::unique_ptr<Compiled>> compiled_;
};

struct SpecializedCleanResult {
    Document doc;
    std::vector<ChangeLogEntry> log;
};

/// Apply rules in declared order. Paragraphs are separated by blank lines;
/// sentences end at terminal punctuation followed by whitespace or the end of
/// the paragraph (full-width terminals end a sentence unconditionally).
SpecializedCleanResult clean_specialized(Document doc, const CleanRuleSet& rules);

/// A text split into units with the exact whitespace between them, so that
/// joining undropped units reproduces the input byte for byte.
struct Segmented {
    struct Unit {
        std::string content;
        std::string separator;  // whitespace after the unit
    };
    std::string prefix;
    std::vector<Unit> units;

    /// Joins units with keep[i] set. Empty when nothing survives.
    std::string join(const std::vector<bool>& keep) const;
};

Segmented split_paragraphs(std::string_view text);
Segmented split_sentences(std::string_view text);

}  // namespace dwc
