#pragma once

// Best-fit packing of tokenized documents into fixed-length sequences.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

struct TokenizedDoc {
    std::string id;
    std::vector<std::uint32_t> tokens;
};

struct Chunk {
    std::string doc_id;
    std::vector<std::uint32_t> tokens;
    std::uint32_t chunk_index = 0;
    /// True iff the parent document was longer than L.
    bool is_split = false;
};

/// ceil(len / L) chunks; all but the last have exactly L tokens.
std::vector<Chunk> chunk_tokens(const TokenizedDoc& doc, std::size_t L);

struct Span {
    std::string doc_id;
    std::uint32_t chunk_index = 0;
    std::uint32_t start = 0;
    std::uint32_t end = 0;

    bool operator==(const Span&) const = default;
};

struct PackedSequence {
    std::uint32_t length = 0;
    std::vector<std::uint32_t> tokens;
    std::vector<Span> spans;
    std::uint32_t pad_count = 0;

    bool operator==(const PackedSequence&) const = default;
};

struct PackStats {
    std::uint64_t sequences = 0;
    std::uint64_t chunks = 0;
    std::uint64_t tokens = 0;
    std::uint64_t pad_tokens = 0;
    std::uint64_t documents = 0;
    std::uint64_t split_documents = 0;

    double pad_ratio() const;
    void add(const PackStats& o);
    Json to_json() const;
};

/// Residual capacities 0..L with one LIFO stack of bin ids per capacity and a
/// segment tree over "stack is non-empty".
class CapacityIndex {
public:
    explicit CapacityIndex(std::size_t L);

    /// Smallest residual c >= s whose stack is non-empty.
    std::optional<std::size_t> best_fit(std::size_t s) const;
    void push(std::size_t residual, std::size_t bin);
    /// Pops the most recently pushed bin at `residual`.
    std::size_t pop(std::size_t residual);
    std::size_t open_bins() const noexcept { return open_; }

private:
    void set(std::size_t residual, bool non_empty);

    std::size_t capacity_;
    std::size_t leaves_;
    std::vector<std::uint8_t> tree_;
    std::vector<std::vector<std::size_t>> stacks_;
    std::size_t open_ = 0;
};

enum class PackOrder { size_desc, input };

std::optional<PackOrder> parse_pack_order(std::string_view s);

/// Best fit over item lengths; returns bins as lists of item indices in
/// placement order. Throws ConfigError if an item is empty or longer than L.
std::vector<std::vector<std::size_t>> best_fit_assign(std::span<const std::size_t> lengths, std::size_t L,
                                                       PackOrder order);

struct PackResult {
    std::vector<PackedSequence> sequences;
    PackStats stats;
};

PackResult pack_best_fit(std::span<const Chunk> chunks, std::size_t L, PackOrder order = PackOrder::size_desc,
                         std::uint32_t pad_id = 0);

/// Chunks every document at L and packs the chunks.
PackResult pack_documents(std::span<const TokenizedDoc> docs, std::size_t L,
                          PackOrder order = PackOrder::size_desc, std::uint32_t pad_id = 0);

/// Baseline: concatenate all documents and slice every L tokens.
/// split_documents counts documents cut by a slice boundary.
PackStats naive_concat_stats(std::span<const TokenizedDoc> docs, std::size_t L);

struct LengthClass {
    std::size_t length = 0;
    double ratio = 0;
};

/// Parses "8192:1,16384:1,32768:1". Throws ConfigError.
std::vector<LengthClass> parse_length_classes(std::string_view spec);

struct MixedPackResult {
    std::vector<LengthClass> classes;
    std::vector<PackResult> packs;
    /// Tokens assigned to each class before chunking.
    std::vector<std::uint64_t> assigned_tokens;
};

/// Assigns each document to a length class by a seeded weighted draw, then
/// packs every class on its own (in parallel).
MixedPackResult pack_mixed(std::span<const TokenizedDoc> docs, const std::vector<LengthClass>& classes,
                           std::uint64_t seed, PackOrder order = PackOrder::size_desc, std::uint32_t pad_id = 0,
                           std::size_t workers = 1);

// Shard files: consecutive little-endian records
//   u32 L, u32 pad_count, L x u32 tokens, u32 span_count,
//   span_count x {u32 id_len, id bytes, u32 chunk_index, u32 start, u32 end}

struct ShardInfo {
    std::string file;
    std::uint64_t sequences = 0;
    std::uint64_t bytes = 0;
    std::string sha256;
};

/// Writes `prefix-00000.bin`, ... with at most `per_shard` sequences each.
std::vector<ShardInfo> write_shards(const std::filesystem::path& dir, const std::string& prefix,
                                    std::span<const PackedSequence> sequences, std::size_t per_shard);
std::vector<PackedSequence> read_shard(const std::filesystem::path& path);
Json shard_index_json(const std::vector<ShardInfo>& shards, std::size_t L, std::uint32_t pad_id);

}  // namespace dwc
