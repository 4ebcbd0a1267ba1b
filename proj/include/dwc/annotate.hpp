#pragma once

// World-context annotation: taxonomy validation and the conditioned
// pre-training preamble format.
//
//   preamble   := tagline? headerline* blankline?
//   tagline    := ("[" cat "]"){1,2} "\n"
//   headerline := key ": " value "\n"
//
// The blank line is present iff anything else was emitted. Header keys appear
// at most once, in kHeaderKeys order.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

inline constexpr std::array<std::string_view, 14> kHeaderKeys{
    "time",     "location",  "author",   "source",     "authority",    "popularity",      "dialogue",
    "audience", "sentiment", "difficulty", "requires_cot", "risk",      "risk_categories", "source_bias_note"};

class Taxonomy {
public:
    using Entry = std::pair<std::string, std::optional<std::string>>;

    /// {name, entries: [[primary, secondary|null], ...]}. Throws ConfigError
    /// on duplicates or a secondary whose primary has no standalone entry.
    static Taxonomy from_json(const Json& j);
    static Taxonomy load(const std::filesystem::path& path);
    /// Sample industrial taxonomy: 29 primaries, 200 secondaries.
    static const Taxonomy& builtin();

    const std::string& name() const noexcept { return name_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    bool contains(const std::string& primary, const std::optional<std::string>& secondary) const;

    std::size_t primary_count() const;
    std::size_t secondary_count() const;
    /// Counts plus min/max/mean secondaries per primary.
    Json stats() const;
    Json to_json() const;

private:
    std::string name_;
    std::vector<Entry> entries_;
    std::set<Entry> index_;
};

/// Structural violations plus category pairs missing from the taxonomy.
std::vector<std::string> validate_context(const ContextRecord& ctx, const Taxonomy& taxonomy);

/// Throws ValidationError if the context is structurally invalid.
std::string serialize_context(const ContextRecord& ctx);

/// Exact inverse of serialize_context. Throws ParseError with the 1-based
/// line and column of the first grammar violation.
ContextRecord parse_context(std::string_view preamble);

enum class DwcMode { preamble, none };

std::optional<DwcMode> parse_dwc_mode(std::string_view s);
std::string_view to_string(DwcMode m);

/// In preamble mode prepends serialize_context(doc.context); throws
/// ValidationError when the document has no context.
std::string compose_training_text(const Document& doc, DwcMode mode);

struct SplitText {
    ContextRecord context;
    std::string_view body;
};

/// Separates a composed text into its preamble and body. Text without a
/// well-formed leading preamble is all body.
SplitText split_training_text(std::string_view text);

struct AnnotateStats {
    std::uint64_t documents = 0;
    std::uint64_t with_context = 0;
    std::uint64_t invalid = 0;
    std::map<std::string, std::uint64_t> primary_categories;
    std::map<std::string, std::uint64_t> violations;

    Json to_json() const;
};

/// Checks a document's context against the taxonomy. Invalid contexts get a
/// drop verdict carrying the violations.
void annotate_document(Document& doc, const Taxonomy& taxonomy, AnnotateStats& stats);

}  // namespace dwc
