#pragma once

// Canonical document and world-context data model shared by every phase.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dwc {

using Json = nlohmann::ordered_json;

enum class Rating { high, medium, low, unknown };
enum class DialogueType { none, casual_chat, question_answer, discussion, customer_service };
enum class AudienceLevel { child, teen, adult, expert, unknown };
enum class Sentiment { positive, neutral, negative, unknown };
enum class Difficulty { easy, medium, hard, unknown };
enum class RiskCategory { pornography, politics, illegality, advertising, bias, misinformation };
enum class Quality { high, medium, low };
enum class FilterStage { clean, filter, safety, dedup };
enum class Decision { keep, drop, flag };

template <typename E>
struct EnumNames;

template <> struct EnumNames<Rating> {
    static constexpr std::array<std::string_view, 4> names{"high", "medium", "low", "unknown"};
};
template <> struct EnumNames<DialogueType> {
    static constexpr std::array<std::string_view, 5> names{"none", "casual_chat", "question_answer", "discussion",
                                                           "customer_service"};
};
template <> struct EnumNames<AudienceLevel> {
    static constexpr std::array<std::string_view, 5> names{"child", "teen", "adult", "expert", "unknown"};
};
template <> struct EnumNames<Sentiment> {
    static constexpr std::array<std::string_view, 4> names{"positive", "neutral", "negative", "unknown"};
};
template <> struct EnumNames<Difficulty> {
    static constexpr std::array<std::string_view, 4> names{"easy", "medium", "hard", "unknown"};
};
template <> struct EnumNames<RiskCategory> {
    static constexpr std::array<std::string_view, 6> names{"pornography", "politics",  "illegality",
                                                           "advertising", "bias", "misinformation"};
};
template <> struct EnumNames<Quality> {
    static constexpr std::array<std::string_view, 3> names{"high", "medium", "low"};
};
template <> struct EnumNames<FilterStage> {
    static constexpr std::array<std::string_view, 4> names{"clean", "filter", "safety", "dedup"};
};
template <> struct EnumNames<Decision> {
    static constexpr std::array<std::string_view, 3> names{"keep", "drop", "flag"};
};

template <typename E>
constexpr std::string_view to_string(E value) {
    const auto i = static_cast<std::size_t>(value);
    return i < EnumNames<E>::names.size() ? EnumNames<E>::names[i] : std::string_view{"?"};
}

template <typename E>
constexpr std::optional<E> parse_enum(std::string_view name) {
    for (std::size_t i = 0; i < EnumNames<E>::names.size(); ++i) {
        if (EnumNames<E>::names[i] == name) return static_cast<E>(i);
    }
    return std::nullopt;
}

template <typename E>
constexpr bool is_declared(E value) {
    return static_cast<std::size_t>(value) < EnumNames<E>::names.size();
}

struct Provenance {
    std::string source_path;
    std::uint64_t record_index = 0;

    bool operator==(const Provenance&) const = default;
};

struct LanguageTag {
    std::string tag;
    double confidence = 0.0;

    bool operator==(const LanguageTag&) const = default;
};

struct SourceInfo {
    std::string site_or_venue;
    Rating authority = Rating::unknown;
    Rating popularity = Rating::unknown;

    bool operator==(const SourceInfo&) const = default;
};

struct DifficultyInfo {
    Difficulty level = Difficulty::unknown;
    bool requires_cot = false;

    bool operator==(const DifficultyInfo&) const = default;
};

struct SafetyInfo {
    bool risk_flag = false;
    std::set<RiskCategory> risk_categories;
    std::optional<std::string> source_bias_note;

    bool operator==(const SafetyInfo&) const = default;
};

struct ContextRecord {
    std::optional<std::string> time;  // ISO-8601 date
    std::optional<std::string> location;
    std::optional<std::string> author;
    std::optional<std::string> category_primary;
    std::optional<std::string> category_secondary;
    std::optional<SourceInfo> source;
    DialogueType dialogue_type = DialogueType::none;
    AudienceLevel audience_level = AudienceLevel::unknown;
    Sentiment sentiment_level = Sentiment::unknown;
    DifficultyInfo difficulty;
    SafetyInfo safety;

    bool operator==(const ContextRecord&) const = default;
};

struct IndicatorReport {
    double stopword_ratio = 0.0;
    double special_symbol_ratio = 0.0;
    std::uint64_t sensitive_term_count = 0;
    std::optional<double> perplexity;
    Quality quality = Quality::low;
    AudienceLevel audience = AudienceLevel::unknown;

    bool operator==(const IndicatorReport&) const = default;
};

struct FilterVerdict {
    FilterStage stage = FilterStage::filter;
    Decision decision = Decision::keep;
    std::string reason_code;
    std::optional<std::string> detail;

    bool operator==(const FilterVerdict&) const = default;
};

struct Document {
    std::string id;
    std::string text;
    std::optional<std::string> url;
    Provenance provenance;
    std::optional<LanguageTag> language;
    std::optional<ContextRecord> context;
    std::optional<IndicatorReport> indicators;
    std::vector<FilterVerdict> verdicts;

    bool operator==(const Document&) const = default;

    bool dropped() const noexcept {
        for (const auto& v : verdicts) {
            if (v.decision == Decision::drop) return true;
        }
        return false;
    }
};

/// Stable id derived from (source_path, record_index, first 256 bytes of text).
std::string make_document_id(std::string_view source_path, std::uint64_t record_index, std::string_view text);

/// Every invariant violation of one document. Empty means valid.
std::vector<std::string> validate_document(const Document& doc);

/// Hierarchy and well-formedness checks on a context that need no taxonomy.
std::vector<std::string> context_structure_violations(const ContextRecord& ctx);

/// Ids occurring more than once, in order of their second occurrence.
std::vector<std::string> duplicate_ids(std::span<const Document> docs);

bool is_iso_date(std::string_view s);

void to_json(Json& j, const Provenance& p);
void from_json(const Json& j, Provenance& p);
void to_json(Json& j, const LanguageTag& t);
void from_json(const Json& j, LanguageTag& t);
void to_json(Json& j, const SourceInfo& s);
void from_json(const Json& j, SourceInfo& s);
void to_json(Json& j, const ContextRecord& c);
void from_json(const Json& j, ContextRecord& c);
void to_json(Json& j, const IndicatorReport& r);
void from_json(const Json& j, IndicatorReport& r);
void to_json(Json& j, const FilterVerdict& v);
void from_json(const Json& j, FilterVerdict& v);
void to_json(Json& j, const Document& d);
void from_json(const Json& j, Document& d);

std::string encode_document(const Document& doc);

/// Throws dwc::ParseError on malformed input.
Document decode_document(std::string_view line);

}  // namespace dwc
