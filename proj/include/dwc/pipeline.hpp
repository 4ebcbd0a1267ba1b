#pragma once

// End-to-end curation run: ingest, clean, filter, annotate, dedup, vocabulary
// and encoding, stage sampling and packing.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dwc/annotate.hpp"
#include "dwc/clean.hpp"
#include "dwc/corpus.hpp"
#include "dwc/dedup.hpp"
#include "dwc/filter.hpp"
#include "dwc/ingest.hpp"
#include "dwc/mix.hpp"
#include "dwc/pack.hpp"
#include "dwc/vocab.hpp"

namespace dwc {

struct LmConfig {
    int order = 2;
    double alpha = 1.0;
    /// The model is trained on the first `train_docs` cleaned documents.
    std::size_t train_docs = 2000;
};

struct ScorerConfig {
    std::string url;
    std::chrono::milliseconds timeout{2000};
};

struct VocabConfig {
    std::optional<std::filesystem::path> base;
    std::optional<std::filesystem::path> merges;
    std::size_t num_merges = 1000;
    Pretokenizer pretokenizer = Pretokenizer::byte;
    /// BPE is trained on the first `train_docs` surviving documents; 0 = all.
    std::size_t train_docs = 5000;
};

struct PackConfig {
    std::uint32_t pad_id = 0;
    PackOrder order = PackOrder::size_desc;
    std::size_t sequences_per_shard = 1024;
};

struct PipelineConfig {
    std::vector<IngestSpec> inputs;
    CleanOptions clean;
    std::vector<CleanRule> clean_rules;
    std::optional<std::filesystem::path> lexicon_dir;
    Thresholds thresholds = Thresholds::builtin();
    FilterOptions filter;
    std::optional<LmConfig> lm;
    std::optional<ScorerConfig> scorer;
    std::optional<std::filesystem::path> taxonomy;
    std::vector<std::string> dedup_levels{"url", "exact", "near"};
    MinHashParams minhash;
    bool minhash_seed_from_run = true;
    VocabConfig vocab;
    PackConfig pack;
    StagePlan plan;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "dwc-out";
    std::size_t workers = 1;
    bool keep_intermediate = true;

    std::vector<std::string> validate() const;
};

/// Relative paths are resolved against `base_dir`. Throws ConfigError.
PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct PhaseCounts {
    std::string name;
    std::uint64_t in = 0;
    std::uint64_t out = 0;
    std::uint64_t dropped = 0;
    double seconds = 0;

    Json to_json() const;
};

// Phase helpers. Each processes the documents that have not been dropped and
// appends verdicts; dropped documents stay in the vector for auditing.

struct CleanPhaseStats {
    CleanCounts counts;
    std::uint64_t emptied = 0;
    std::uint64_t rule_changes = 0;
    std::map<std::string, std::uint64_t> rule_hits;

    Json to_json() const;
};

CleanPhaseStats clean_documents(std::vector<Document>& docs, const CleanOptions& opts, const CleanRuleSet& rules,
                                std::size_t workers, std::vector<std::string>* change_log = nullptr);
FilterStats filter_documents(std::vector<Document>& docs, const DocumentFilter& filter, std::size_t workers);
AnnotateStats annotate_documents(std::vector<Document>& docs, const Taxonomy& taxonomy);
/// Runs the given levels in order, each on the survivors of the previous one.
DedupReport dedup_documents(std::vector<Document>& docs, const std::vector<std::string>& levels,
                            const MinHasher& hasher, std::size_t workers);

std::uint64_t count_alive(const std::vector<Document>& docs);

struct RunOptions {
    std::optional<std::size_t> workers;
    std::optional<bool> keep_intermediate;
    std::optional<std::filesystem::path> output_dir;
};

/// Runs every phase and writes artifacts plus `report.json` (last). A fatal
/// error inside a phase is rethrown with the phase name prefixed (ConfigError
/// stays ConfigError, anything else becomes RuntimeError) after a partial
/// report has been written.
Json run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Phase table, pad ratio, mix shares and warnings of a run report.
std::string render_report(const Json& report);

}  // namespace dwc
