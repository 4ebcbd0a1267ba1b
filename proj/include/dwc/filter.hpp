#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

inline constexpr std::size_t kRiskCategories = EnumNames<RiskCategory>::names.size();

/// Stopwords plus one term list per risk category. Terms are matched as
/// token sequences after the same word split used for the ratio indicators.
class Lexicons {
public:
    static Lexicons parse(std::string_view stopwords, const std::array<std::string_view, kRiskCategories>& terms);
    /// `stopwords.txt` and `<category>.txt` for every risk category.
    static Lexicons load(const std::filesystem::path& dir);
    static const Lexicons& builtin();

    bool is_stopword(const std::string& token) const { return stopwords_.count(token) != 0; }

    /// Occurrences of each category's terms in `tokens`.
    std::array<std::uint64_t, kRiskCategories> count_hits(std::span<const std::string> tokens) const;

    std::size_t stopword_count() const noexcept { return stopwords_.size(); }
    std::size_t term_count(RiskCategory c) const;

private:
    struct Term {
        std::vector<std::string> tokens;
        std::size_t category;
    };
    std::unordered_set<std::string> stopwords_;
    std::unordered_map<std::string, std::vector<Term>> by_first_token_;
    std::array<std::size_t, kRiskCategories> term_counts_{};
};

/// Word n-gram model with add-alpha smoothing over a vocabulary of observed
/// tokens plus one UNK. Contexts are padded with a BOS marker. With alpha = 0
/// an unseen context backs off to the next shorter one.
class NGramLM {
public:
    /// Token sequences, one per document. Throws ConfigError for an empty
    /// corpus, n outside 1..3 or negative alpha.
    static NGramLM train(std::span<const std::vector<std::string>> corpus, int n, double alpha);
    static NGramLM train_on_texts(std::span<const std::string> texts, int n, double alpha);
    /// Every token equally likely: P = 1 / (vocab.size() + 1).
    static NGramLM uniform(std::span<const std::string> vocab);

    int order() const noexcept { return n_; }
    double alpha() const noexcept { return alpha_; }
    std::size_t vocab_size() const noexcept { return vocab_.size() + 1; }

    /// P(word | context), where context holds the preceding tokens (only the
    /// last n-1 are used; missing positions are BOS).
    double probability(std::span<const std::string> context, const std::string& word) const;

    /// exp(-mean log P) over the tokens. nullopt for an empty sequence.
    std::optional<double> perplexity(std::span<const std::string> tokens) const;
    std::optional<double> perplexity_of_text(std::string_view text) const;

    /// Probabilities below this are clamped, so perplexity stays finite.
    static constexpr double kProbabilityFloor = 1e-12;

private:
    using Id = std::uint32_t;
    static constexpr Id kUnk = 0;
    static constexpr Id kBos = std::numeric_limits<Id>::max();

    struct ContextCounts {
        std::uint64_t total = 0;
        std::unordered_map<Id, std::uint64_t> next;
    };

    Id id_of(const std::string& token) const;
    static std::string key(std::span<const Id> context);
    long double log_probability(std::span<const Id> history, Id word) const;

    int n_ = 1;
    double alpha_ = 0;
    std::unordered_map<std::string, Id> vocab_;
    // contexts_[k] holds contexts of length k.
    std::vector<std::unordered_map<std::string, ContextCounts>> contexts_;
};

/// Inclusive range; a missing side is unbounded.
struct Bounds {
    double min = -std::numeric_limits<double>::infinity();
    double max = std::numeric_limits<double>::infinity();

    bool contains(double v) const noexcept { return v >= min && v <= max; }
    bool within(const Bounds& outer) const noexcept { return min >= outer.min && max <= outer.max; }
    bool operator==(const Bounds&) const = default;
};

struct ClassBounds {
    Bounds stopword_ratio;
    Bounds special_symbol_ratio;
    Bounds sensitive_term_count;
    /// Skipped when no perplexity was computed.
    Bounds perplexity;

    bool accepts(const IndicatorReport& r) const;
    bool operator==(const ClassBounds&) const = default;
};

struct SafetyPolicy {
    /// Hit counts at or above a threshold flag or drop; 0 disables it.
    std::uint64_t flag_threshold = 1;
    std::uint64_t drop_threshold = 0;

    bool operator==(const SafetyPolicy&) const = default;
};

struct AudienceBands {
    /// Readability scores below `child` are child, below `teen` teen, below
    /// `adult` adult, anything else expert.
    double child = 6.0;
    double teen = 12.0;
    double adult = 16.0;
    std::size_t min_tokens = 10;

    bool operator==(const AudienceBands&) const = default;
};

struct Thresholds {
    ClassBounds high;
    ClassBounds medium;
    std::array<SafetyPolicy, kRiskCategories> safety;
    AudienceBands audience;

    /// Checks high within medium and ordered band cut-points.
    std::vector<std::string> validate() const;
    static const Thresholds& builtin();
    bool operator==(const Thresholds&) const = default;
};

Thresholds thresholds_from_json(const Json& j);
Json to_json(const Thresholds& t);

/// Highest class whose every bound is satisfied.
Quality classify_quality(const IndicatorReport& report, const Thresholds& thresholds);

/// Automated readability index: 4.71 * chars/word + 0.5 * words/sentence - 21.43.
/// nullopt when the text has no words.
std::optional<double> readability_score(std::string_view text);
AudienceLevel audience_level(std::string_view text, const AudienceBands& bands = AudienceBands{});

/// Ratios, sensitive-term count, perplexity (when `lm` is given), quality
/// class and audience. A text with no tokens is low quality.
IndicatorReport compute_indicators(const Document& doc, const Lexicons& lexicons, const NGramLM* lm,
                                   const Thresholds& thresholds);

struct SafetyResult {
    FilterVerdict verdict;
    std::set<RiskCategory> categories;
    std::array<std::uint64_t, kRiskCategories> hits{};
};

/// Counts lexicon hits and applies the policy. When the document carries a
/// context, its safety categories and risk flag are updated.
SafetyResult safety_screen(Document& doc, const Lexicons& lexicons, const Thresholds& thresholds);

struct ExternalScore {
    std::optional<Quality> quality;
    std::optional<AudienceLevel> audience;
    std::set<RiskCategory> safety_categories;
};

/// Client for an optional JSON-over-HTTP classifier: POST {id, text} and get
/// back {quality?, audience?, safety_categories?}.
class ExternalScorer {
public:
    explicit ExternalScorer(std::string url, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

    /// nullopt on timeout, connection failure or a malformed reply.
    std::optional<ExternalScore> score(const std::string& id, const std::string& text) const;

    std::uint64_t timeouts() const noexcept { return timeouts_; }
    std::uint64_t failures() const noexcept { return failures_; }

private:
    std::string scheme_host_port_;
    std::string path_;
    std::chrono::milliseconds timeout_;
    mutable std::atomic<std::uint64_t> timeouts_{0};
    mutable std::atomic<std::uint64_t> failures_{0};
};

struct FilterStats {
    std::uint64_t documents = 0;
    std::map<std::string, std::uint64_t> quality;
    std::map<std::string, std::uint64_t> audience;
    std::map<std::string, std::uint64_t> risk_categories;
    std::uint64_t dropped_low_quality = 0;
    std::uint64_t dropped_safety = 0;
    std::uint64_t flagged = 0;
    std::uint64_t scorer_used = 0;
    std::uint64_t scorer_fallbacks = 0;

    void add(const Document& doc, bool scorer_used, bool scorer_failed);
    Json to_json() const;
};

struct FilterOptions {
    bool drop_low_quality = true;
};

/// Indicators, quality class, audience, safety screen and (if configured) the
/// external scorer, in that order. Appends verdicts; never removes text.
class DocumentFilter {
public:
    DocumentFilter(const Lexicons& lexicons, const Thresholds& thresholds, const NGramLM* lm = nullptr,
                   const ExternalScorer* scorer = nullptr, FilterOptions options = {});

    struct Outcome {
        bool scorer_used = false;
        bool scorer_failed = false;
    };

    Outcome apply(Document& doc) const;

private:
    const Lexicons& lexicons_;
    const Thresholds& thresholds_;
    const NGramLM* lm_;
    const ExternalScorer* scorer_;
    FilterOptions options_;
};

}  // namespace dwc
