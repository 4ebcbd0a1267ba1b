#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

struct CanonicalUrl {
    std::string url;
    /// False when the input could not be parsed; `url` is then the input.
    bool ok = true;
};

/// Tracking query keys; an entry ending in '*' matches by prefix.
const std::vector<std::string>& default_tracking_keys();

/// Lower-cases scheme and host, drops the fragment and tracking keys, sorts
/// the remaining query parameters by key and strips a trailing path slash.
CanonicalUrl canonicalize_url(std::string_view url,
                              const std::vector<std::string>& tracking_keys = default_tracking_keys());

struct DedupCluster {
    std::string survivor;
    std::vector<std::string> duplicates;

    bool operator==(const DedupCluster&) const = default;
};

struct DedupReport {
    /// Ordered by the survivor's input position.
    std::vector<DedupCluster> clusters;
    /// Removed documents per level ("url", "exact", "near").
    std::map<std::string, std::uint64_t> removed;
    std::uint64_t unparseable_urls = 0;

    /// Folds a report computed on this report's survivors into it, keeping
    /// every document in at most one cluster.
    void merge(const DedupReport& later);
    std::uint64_t total_removed() const;
    Json to_json() const;

    bool operator==(const DedupReport&) const = default;
};

struct MinHashParams {
    std::size_t shingle_size = 5;
    std::size_t num_perms = 128;
    std::size_t bands = 16;
    std::size_t rows = 8;
    double threshold = 0.8;
    std::uint64_t seed = 0x5eed;

    std::vector<std::string> validate() const;
};

MinHashParams minhash_params_from_json(const Json& j);
Json to_json(const MinHashParams& p);

/// An empty signature marks a text with fewer than k words.
using Signature = std::vector<std::uint64_t>;

class MinHasher {
public:
    /// Throws ConfigError for invalid parameters.
    explicit MinHasher(MinHashParams params);

    const MinHashParams& params() const noexcept { return params_; }

    /// Hashes of the k-word shingles of `text` (lower-cased word split),
    /// sorted and distinct.
    std::vector<std::uint64_t> shingles(std::string_view text) const;
    Signature signature(std::string_view text) const;
    Signature signature_of_set(std::span<const std::uint64_t> shingle_hashes) const;

    /// Fraction of equal slots; 0 when either signature is empty.
    static double similarity(const Signature& a, const Signature& b);
    /// True when the two signatures agree on every row of at least one band.
    bool share_band(const Signature& a, const Signature& b) const;

private:
    MinHashParams params_;
    std::vector<std::uint64_t> a_;
    std::vector<std::uint64_t> b_;
};

/// Documents without a url never match.
DedupReport dedup_url(std::span<const Document> docs,
                      const std::vector<std::string>& tracking_keys = default_tracking_keys());
/// Hash of whitespace-normalized text, confirmed by comparing the texts.
DedupReport dedup_exact(std::span<const Document> docs);
/// Signatures are computed in parallel; bucketing and clustering are serial.
DedupReport dedup_near(std::span<const Document> docs, const MinHasher& hasher, std::size_t workers = 1);
DedupReport dedup_near_signatures(std::span<const Document> docs, std::span<const Signature> signatures,
                                  const MinHasher& hasher);

/// Adds a dedup drop verdict to every duplicate listed in `report`.
void mark_duplicates(std::vector<Document>& docs, const DedupReport& report, std::string_view level);

}  // namespace dwc
