#include "dwc/pack.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <numeric>

#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/io.hpp"
#include "dwc/parallel.hpp"
#include "dwc/random.hpp"

namespace dwc {

std::vector<Chunk> chunk_tokens(const TokenizedDoc& doc, std::size_t L) {
    if (L == 0) throw ConfigError("sequence length must be at least 1");
    std::vector<Chunk> out;
    const std::size_t n = doc.tokens.size();
    const bool split = n > L;
    for (std::size_t start = 0, idx = 0; start < n; start += L, ++idx) {
        const std::size_t end = std::min(n, start + L);
        Chunk c;
        c.doc_id = doc.id;
        c.tokens.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                        doc.tokens.begin() + static_cast<std::ptrdiff_t>(end));
        c.chunk_index = static_cast<std::uint32_t>(idx);
        c.is_split = split;
        out.push_back(std::move(c));
    }
    return out;
}

double PackStats::pad_ratio() const {
    const auto total = tokens + pad_tokens;
    return total == 0 ? 0.0 : static_cast<double>(pad_tokens) / static_cast<double>(total);
}

void PackStats::add(const PackStats& o) {
    sequences += o.sequences;
    chunks += o.chunks;
    tokens += o.tokens;
    pad_tokens += o.pad_tokens;
    documents += o.documents;
    split_documents += o.split_documents;
}

Json PackStats::to_json() const {
    return Json{{"sequences", sequences},   {"chunks", chunks},        {"tokens", tokens},
                {"pad_tokens", pad_tokens}, {"pad_ratio", pad_ratio()}, {"documents", documents},
                {"split_documents", split_documents}};
}

// ---------------------------------------------------------------------------
// Capacity index

CapacityIndex::CapacityIndex(std::size_t L)
    : capacity_(L), leaves_(std::bit_ceil(L + 1)), tree_(2 * leaves_, 0), stacks_(L + 1) {}

void CapacityIndex::set(std::size_t residual, bool non_empty) {
    std::size_t node = leaves_ + residual;
    if (tree_[node] == static_cast<std::uint8_t>(non_empty)) return;
    tree_[node] = non_empty;
    for (node /= 2; node >= 1; node /= 2) {
        const std::uint8_t v = tree_[2 * node] | tree_[2 * node + 1];
        if (tree_[node] == v) break;
        tree_[node] = v;
    }
}

std::optional<std::size_t> CapacityIndex::best_fit(std::size_t s) const {
    if (s > capacity_) return std::nullopt;
    // Walk up from leaf s; at each left child, the right sibling covers the
    // next block of larger residuals.
    std::size_t node = leaves_ + s;
    if (!tree_[node]) {
        while (true) {
            if (node == 1) return std::nullopt;
            if (node % 2 == 0 && tree_[node + 1]) {
                node = node + 1;
                break;
            }
            node /= 2;
        }
        while (node < leaves_) node = tree_[2 * node] ? 2 * node : 2 * node + 1;
    }
    return node - leaves_;
}

void CapacityIndex::push(std::size_t residual, std::size_t bin) {
    auto& st = stacks_.at(residual);
    st.push_back(bin);
    ++open_;
    if (st.size() == 1) set(residual, true);
}

std::size_t CapacityIndex::pop(std::size_t residual) {
    auto& st = stacks_.at(residual);
    if (st.empty()) throw std::logic_error("pop from empty capacity stack");
    const auto bin = st.back();
    st.pop_back();
    --open_;
    if (st.empty()) set(residual, false);
    return bin;
}

std::optional<PackOrder> parse_pack_order(std::string_view s) {
    if (s == "size_desc") return PackOrder::size_desc;
    if (s == "input") return PackOrder::input;
    return std::nullopt;
}

std::vector<std::vector<std::size_t>> best_fit_assign(std::span<const std::size_t> lengths, std::size_t L,
                                                       PackOrder order) {
    std::vector<std::size_t> idx(lengths.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (auto len : lengths) {
        if (len == 0 || len > L) {
            throw ConfigError("chunk of length " + std::to_string(len) + " does not fit sequence length " +
                              std::to_string(L));
        }
    }
    if (order == PackOrder::size_desc) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
    }
    CapacityIndex index(L);
    std::vector<std::vector<std::size_t>> bins;
    for (const auto i : idx) {
        const auto s = lengths[i];
        std::size_t bin;
        std::size_t residual;
        if (const auto c = index.best_fit(s)) {
            bin = index.pop(*c);
            residual = *c - s;
        } else {
            bin = bins.size();
            bins.emplace_back();
            residual = L - s;
        }
        bins[bin].push_back(i);
        // A full bin can never take another chunk.
        if (residual > 0) index.push(residual, bin);
    }
    return bins;
}

namespace {

PackResult materialize(std::span<const Chunk> chunks, const std::vector<std::vector<std::size_t>>& bins,
                       std::size_t L, std::uint32_t pad_id) {
    PackResult out;
    out.sequences.reserve(bins.size());
    for (const auto& bin : bins) {
        PackedSequence seq;
        seq.length = static_cast<std::uint32_t>(L);
        seq.tokens.reserve(L);
        for (const auto i : bin) {
            const auto& c = chunks[i];
            const auto start = static_cast<std::uint32_t>(seq.tokens.size());
            seq.tokens.insert(seq.tokens.end(), c.tokens.begin(), c.tokens.end());
            seq.spans.push_back({c.doc_id, c.chunk_index, start, static_cast<std::uint32_t>(seq.tokens.size())});
        }
        seq.pad_count = static_cast<std::uint32_t>(L - seq.tokens.size());
        out.stats.tokens += seq.tokens.size();
        out.stats.pad_tokens += seq.pad_count;
        seq.tokens.resize(L, pad_id);
        out.sequences.push_back(std::move(seq));
    }
    out.stats.sequences = bins.size();
    out.stats.chunks = chunks.size();
    for (const auto& c : chunks) {
        if (c.chunk_index == 0) {
            ++out.stats.documents;
            if (c.is_split) ++out.stats.split_documents;
        }
    }
    return out;
}

}  // namespace

PackResult pack_best_fit(std::span<const Chunk> chunks, std::size_t L, PackOrder order, std::uint32_t pad_id) {
    if (L == 0) throw ConfigError("sequence length must be at least 1");
    std::vector<std::size_t> lengths;
    lengths.reserve(chunks.size());
    for (const auto& c : chunks) lengths.push_back(c.tokens.size());
    return materialize(chunks, best_fit_assign(lengths, L, order), L, pad_id);
}

PackResult pack_documents(std::span<const TokenizedDoc> docs, std::size_t L, PackOrder order, std::uint32_t pad_id) {
    std::vector<Chunk> chunks;
    for (const auto& d : docs) {
        auto c = chunk_tokens(d, L);
        std::move(c.begin(), c.end(), std::back_inserter(chunks));
    }
    return pack_best_fit(chunks, L, order, pad_id);
}

PackStats naive_concat_stats(std::span<const TokenizedDoc> docs, std::size_t L) {
    if (L == 0) throw ConfigError("sequence length must be at least 1");
    PackStats s;
    std::uint64_t offset = 0;
    for (const auto& d : docs) {
        const std::uint64_t n = d.tokens.size();
        if (n == 0) continue;
        ++s.documents;
        // Cut if the first and last token land in different slices.
        if (offset / L != (offset + n - 1) / L) ++s.split_documents;
        offset += n;
    }
    s.tokens = offset;
    s.sequences = (offset + L - 1) / L;
    s.pad_tokens = s.sequences * L - offset;
    s.chunks = s.sequences;
    return s;
}

std::vector<LengthClass> parse_length_classes(std::string_view spec) {
    std::vector<LengthClass> out;
    std::string_view rest = spec;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = rest.substr(0, comma);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        const auto colon = item.find(':');
        LengthClass c;
        const auto len_s = item.substr(0, colon);
        const auto [p, ec] = std::from_chars(len_s.data(), len_s.data() + len_s.size(), c.length);
        if (ec != std::errc{} || p != len_s.data() + len_s.size() || c.length == 0) {
            throw ConfigError("bad sequence length in '" + std::string(item) + "'");
        }
        c.ratio = 1.0;
        if (colon != std::string_view::npos) {
            const auto r = std::string(item.substr(colon + 1));
            try {
                std::size_t used = 0;
                c.ratio = std::stod(r, &used);
                if (used != r.size()) throw std::invalid_argument(r);
            } catch (const std::exception&) {
                throw ConfigError("bad ratio in '" + std::string(item) + "'");
            }
        }
        out.push_back(c);
    }
    if (out.empty()) throw ConfigError("no length classes in '" + std::string(spec) + "'");
    return out;
}

MixedPackResult pack_mixed(std::span<const TokenizedDoc> docs, const std::vector<LengthClass>& classes,
                           std::uint64_t seed, PackOrder order, std::uint32_t pad_id, std::size_t workers) {
    if (classes.empty()) throw ConfigError("pack_mixed needs at least one length class");
    std::vector<double> weights;
    for (const auto& c : classes) {
        if (c.length == 0) throw ConfigError("sequence length must be at least 1");
        if (!(c.ratio > 0)) throw ConfigError("length class ratios must be positive");
        weights.push_back(c.ratio);
    }
    MixedPackResult out;
    out.classes = classes;
    out.assigned_tokens.assign(classes.size(), 0);
    std::vector<std::vector<Chunk>> chunks(classes.size());
    Rng rng(seed);
    for (const auto& d : docs) {
        const auto k = classes.size() == 1 ? 0 : rng.weighted(weights);
        out.assigned_tokens[k] += d.tokens.size();
        auto c = chunk_tokens(d, classes[k].length);
        std::move(c.begin(), c.end(), std::back_inserter(chunks[k]));
    }
    out.packs.resize(classes.size());
    parallel_for(classes.size(), workers,
                 [&](std::size_t k) { out.packs[k] = pack_best_fit(chunks[k], classes[k].length, order, pad_id); });
    return out;
}

// ---------------------------------------------------------------------------
// Shards

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw RuntimeError("truncated shard record");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

void encode_sequence(std::string& out, const PackedSequence& s) {
    put_u32(out, s.length);
    put_u32(out, s.pad_count);
    for (auto t : s.tokens) put_u32(out, t);
    put_u32(out, static_cast<std::uint32_t>(s.spans.size()));
    for (const auto& sp : s.spans) {
        put_u32(out, static_cast<std::uint32_t>(sp.doc_id.size()));
        out += sp.doc_id;
        put_u32(out, sp.chunk_index);
        put_u32(out, sp.start);
        put_u32(out, sp.end);
    }
}

}  // namespace

std::vector<ShardInfo> write_shards(const std::filesystem::path& dir, const std::string& prefix,
                                    std::span<const PackedSequence> sequences, std::size_t per_shard) {
    if (per_shard == 0) throw ConfigError("sequences per shard must be at least 1");
    std::filesystem::create_directories(dir);
    std::vector<ShardInfo> out;
    for (std::size_t begin = 0; begin < sequences.size(); begin += per_shard) {
        const std::size_t end = std::min(sequences.size(), begin + per_shard);
        std::string buf;
        for (std::size_t i = begin; i < end; ++i) encode_sequence(buf, sequences[i]);
        char name[32];
        std::snprintf(name, sizeof name, "-%05zu.bin", out.size());
        ShardInfo info;
        info.file = prefix + name;
        info.sequences = end - begin;
        info.bytes = buf.size();
        info.sha256 = sha256_hex(buf);
        io::write_file(dir / info.file, buf);
        out.push_back(std::move(info));
    }
    return out;
}

std::vector<PackedSequence> read_shard(const std::filesystem::path& path) {
    const auto data = io::read_file(path);
    std::vector<PackedSequence> out;
    std::size_t pos = 0;
    while (pos < data.size()) {
        PackedSequence s;
        s.length = get_u32(data, pos);
        s.pad_count = get_u32(data, pos);
        if (s.pad_count > s.length) throw RuntimeError(path.string() + ": pad count exceeds length");
        s.tokens.resize(s.length);
        for (auto& t : s.tokens) t = get_u32(data, pos);
        const auto spans = get_u32(data, pos);
        for (std::uint32_t i = 0; i < spans; ++i) {
            Span sp;
            const auto n = get_u32(data, pos);
            if (pos + n > data.size()) throw RuntimeError(path.string() + ": truncated span id");
            sp.doc_id = data.substr(pos, n);
            pos += n;
            sp.chunk_index = get_u32(data, pos);
            sp.start = get_u32(data, pos);
            sp.end = get_u32(data, pos);
            s.spans.push_back(std::move(sp));
        }
        out.push_back(std::move(s));
    }
    return out;
}

Json shard_index_json(const std::vector<ShardInfo>& shards, std::size_t L, std::uint32_t pad_id) {
    Json list = Json::array();
    std::uint64_t sequences = 0;
    for (const auto& s : shards) {
        list.push_back(Json{{"file", s.file}, {"sequences", s.sequences}, {"bytes", s.bytes}, {"sha256", s.sha256}});
        sequences += s.sequences;
    }
    return Json{{"format", "dwc-packed-v1"}, {"byte_order", "little"}, {"length", L},
                {"pad_id", pad_id},          {"sequences", sequences}, {"shards", list}};
}

}  // namespace dwc
