#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

/// Character n-gram language identifier. Profiles hold L2-normalized
/// frequency vectors of character unigrams, bigrams and trigrams built from
/// reference sample texts; the similarity is a weighted blend of the three
/// cosines, dominated by trigrams. Whitespace is removed before counting, so
/// results ignore whitespace-only edits.
class LanguageIdentifier {
public:
    struct Profile {
        std::string tag;
        /// One normalized vector per n-gram order (index 0 = unigrams).
        std::array<std::unordered_map<std::uint64_t, double>, 3> weights;
    };

    static constexpr std::array<double, 3> kOrderWeights{0.2, 0.3, 0.5};

    /// Minimum cosine similarity to report a language instead of "unknown".
    static constexpr double kMinSimilarity = 0.03;
    /// Softmax temperature applied to cosine similarities for the confidence.
    static constexpr double kTemperature = 0.03;

    LanguageIdentifier() = default;
    explicit LanguageIdentifier(std::vector<Profile> profiles) : profiles_(std::move(profiles)) {}

    static Profile build_profile(std::string tag, std::string_view sample);
    static LanguageIdentifier from_samples(const std::vector<std::pair<std::string, std::string>>& samples);
    /// One `<tag>.txt` sample file per language.
    static LanguageIdentifier from_directory(const std::filesystem::path& dir);
    /// Profiles for en, zh, ja and id compiled into the library.
    static const LanguageIdentifier& builtin();

    LanguageTag detect(std::string_view text) const;

    /// Cosine similarity of `text` against every profile, in profile order.
    std::vector<double> similarities(std::string_view text) const;

    const std::vector<Profile>& profiles() const noexcept { return profiles_; }

private:
    std::vector<Profile> profiles_;
};

/// Character n-gram counts (n = 1..3) of `text` after lower-casing and
/// removing whitespace.
std::array<std::unordered_map<std::uint64_t, double>, 3> ngram_counts(std::string_view text);

LanguageTag detect_language(std::string_view text);

enum class InputFormat { txt, jsonl, jsonl_gz };
enum class TxtMode { paragraph, line, whole };

struct IngestSpec {
    std::string path;
    InputFormat format = InputFormat::jsonl;
    std::string text_field = "text";
    /// Fields joined with "\n" to form the text. Empty means use text_field.
    std::vector<std::string> concat_fields;
    TxtMode txt_mode = TxtMode::paragraph;
    /// Mixing domain for records that carry no "domain" field.
    std::string domain = "general";

    std::vector<std::string> validate() const;
};

IngestSpec ingest_spec_from_json(const Json& j);
Json to_json(const IngestSpec& spec);

struct IngestReport {
    std::uint64_t records_in = 0;
    std::uint64_t documents_out = 0;
    std::uint64_t skipped = 0;
    std::uint64_t replacement_chars = 0;
    std::map<std::string, std::uint64_t> skip_reasons;

    void skip(const std::string& reason) {
        ++skipped;
        ++skip_reasons[reason];
    }
    void merge(const IngestReport& other);
    Json to_json() const;
};

struct IngestedDocument {
    Document doc;
    std::string domain;
};

using DocumentSink = std::function<void(IngestedDocument&&)>;

/// Streams one Document per record, in input order. Throws RuntimeError if
/// the path cannot be read; malformed records are skipped and counted.
IngestReport ingest(const IngestSpec& spec, const DocumentSink& sink,
                    const LanguageIdentifier& langid = LanguageIdentifier::builtin());

struct IngestResult {
    std::vector<IngestedDocument> documents;
    IngestReport report;
};

IngestResult ingest(const IngestSpec& spec, const LanguageIdentifier& langid = LanguageIdentifier::builtin());

}  // namespace dwc
