#pragma once

// Byte-pair-encoding vocabulary training, vocabulary merging and encoding.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc {

/// Size of the Qwen base vocabulary and of the learned extension.
inline constexpr std::uint64_t kQwenBaseVocabSize = 151'643;
inline constexpr std::uint64_t kLearnedVocabSize = 15'901;
inline constexpr std::uint64_t kMergedVocabSize = 167'544;

/// whitespace: pieces are split at whitespace, which is dropped, and the base
/// symbols are code points. byte: whitespace is kept at the front of the
/// following piece and the base symbols are single bytes.
enum class Pretokenizer { whitespace, byte };

std::optional<Pretokenizer> parse_pretokenizer(std::string_view s);
std::string_view to_string(Pretokenizer p);

/// Text is cut into runs of letters and digits, runs of other visible
/// characters, and (byte mode) trailing whitespace. Pieces longer than 64
/// code points are cut further.
std::vector<std::string_view> pretokenize(std::string_view text, Pretokenizer p);

/// Base symbols of one piece: bytes or code points.
std::vector<std::string> base_symbols(std::string_view piece, Pretokenizer p);

using MergeRule = std::pair<std::string, std::string>;

struct BpeResult {
    std::vector<MergeRule> merges;
    /// Distinct base symbols (sorted) followed by merged symbols in the order
    /// they were first produced.
    std::vector<std::string> entries;
};

/// Piece frequencies over a corpus; shards are counted in parallel and summed.
std::map<std::string, std::uint64_t> count_pieces(std::span<const std::string> texts, Pretokenizer p,
                                                  std::size_t workers = 1);

/// Repeatedly merges the most frequent adjacent pair; ties go to the
/// lexicographically smaller (left, right). Stops early when no pair is left.
BpeResult train_bpe(const std::map<std::string, std::uint64_t>& piece_counts, std::size_t num_merges,
                    Pretokenizer p);
BpeResult train_bpe(std::span<const std::string> texts, std::size_t num_merges, Pretokenizer p,
                    std::size_t workers = 1);

/// Escapes '\\', control bytes and bytes outside valid UTF-8 as \xHH (\n, \r
/// and \t keep their short forms). With `escape_space`, ' ' becomes \x20.
std::string escape_token(std::string_view token, bool escape_space = false);
/// Throws ConfigError on a malformed escape.
std::string unescape_token(std::string_view line);

struct VocabMerge;

class Vocabulary {
public:
    Vocabulary() = default;
    /// Throws ConfigError on duplicate or empty tokens.
    explicit Vocabulary(std::vector<std::string> tokens);

    /// The 256 single-byte tokens, id = byte value.
    static Vocabulary byte_level();
    /// Token-per-line file (escaped); ids are line numbers.
    static Vocabulary load(const std::filesystem::path& path);
    /// Optional merges file: "left right" per line, escaped, in rank order.
    void load_merges(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    void save_merges(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t base_size() const noexcept { return base_size_; }
    std::size_t added_size() const noexcept { return tokens_.size() - base_size_; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<MergeRule>& merges() const noexcept { return merges_; }
    std::optional<std::uint32_t> id_of(std::string_view token) const;
    /// Throws RuntimeError naming the id when it is out of range.
    const std::string& token(std::uint32_t id) const;

    /// Appends a merge rule; both sides and their concatenation must be
    /// tokens. Throws ConfigError otherwise.
    void add_merge(MergeRule rule);

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_ && merges_ == o.merges_; }

private:
    friend VocabMerge merge_vocab(const Vocabulary& base, const BpeResult& learned);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<MergeRule> merges_;
    std::size_t base_size_ = 0;
};

struct VocabMerge {
    Vocabulary vocab;
    std::size_t learned = 0;
    std::size_t collisions = 0;

    Json to_json() const;
};

/// Learned entries already in `base` are dropped and counted as collisions;
/// the rest get ids base.size(), base.size()+1, ... in learned order. Merge
/// rules are appended after the base's own rules.
VocabMerge merge_vocab(const Vocabulary& base, const BpeResult& learned);

class BpeEncoder {
public:
    BpeEncoder(const Vocabulary& vocab, Pretokenizer p);

    /// Applies the merges in rank order to each piece. Throws RuntimeError
    /// when a base symbol is not in the vocabulary.
    std::vector<std::uint32_t> encode(std::string_view text) const;
    /// Concatenates token strings; decode(encode(t)) == t in byte mode.
    std::string decode(std::span<const std::uint32_t> ids) const;

    const Vocabulary& vocab() const noexcept { return *vocab_; }

private:
    void encode_piece(std::string_view piece, std::vector<std::uint32_t>& out) const;

    const Vocabulary* vocab_;
    Pretokenizer pretokenizer_;
    /// (left id << 32 | right id) -> (rank, merged id). The first rank wins.
    std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> ranks_;
};

}  // namespace dwc
