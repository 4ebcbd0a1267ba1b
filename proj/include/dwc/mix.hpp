#pragma once

// Stage token budgets and deterministic per-stage document sampling.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dwc/annotate.hpp"
#include "dwc/corpus.hpp"
#include "dwc/pack.hpp"

namespace dwc {

/// Stage proportions of the three-stage schedule, in billions of tokens.
inline constexpr std::array<std::uint64_t, 3> kPaperStageProportions{4500, 1500, 200};

struct StageSpec {
    std::string name;
    std::uint64_t token_budget = 0;
    std::map<std::string, double> domain_weights;
    DwcMode dwc_mode = DwcMode::none;
    std::vector<LengthClass> sequence_lengths{{4096, 1.0}};
};

struct StagePlan {
    std::vector<StageSpec> stages;

    std::vector<std::string> validate() const;
};

/// Splits `total` in proportion to `weights` by largest remainder; the parts
/// sum to `total` exactly.
std::vector<std::uint64_t> apportion(std::uint64_t total, std::span<const std::uint64_t> weights);

/// The three-stage template (general, dwc_safety, long_context) scaled to
/// `total_tokens`. Only the second stage carries preambles.
StagePlan paper_stage_plan(std::uint64_t total_tokens, const std::map<std::string, double>& domain_weights);

/// Either {"stages": [...]} or {"template": "paper", "total_tokens": N,
/// "domain_weights": {...}}. Throws ConfigError on invalid plans.
StagePlan build_stage_plan(const Json& config);
Json to_json(const StagePlan& plan);

struct PoolDoc {
    std::string id;
    std::string domain;
    std::uint64_t tokens = 0;
};

struct ManifestEntry {
    std::string doc_id;
    std::string domain;
    std::uint64_t tokens = 0;

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    std::string stage;
    std::uint64_t budget = 0;
    std::vector<ManifestEntry> entries;
    std::map<std::string, std::uint64_t> realized;
    std::uint64_t total_tokens = 0;
    std::vector<std::string> warnings;

    std::map<std::string, double> shares() const;
    /// One {doc_id, stage, domain, tokens} object per line.
    std::string to_jsonl() const;
    Json summary_json() const;
};

/// Each domain's pool is visited in a seeded random order without
/// replacement; the next document always comes from the domain furthest
/// below its target, until the stage budget is reached. Exhausted domains
/// produce warnings.
Manifest sample_stage(const StageSpec& stage, std::span<const PoolDoc> pool, std::uint64_t seed);

}  // namespace dwc
