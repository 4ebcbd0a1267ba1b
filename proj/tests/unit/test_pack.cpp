#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/io.hpp"
#include "dwc/pack.hpp"
#include "dwc/random.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dwc;

namespace {

TokenizedDoc tdoc(std::string id, std::size_t n, std::uint32_t base = 1) {
    TokenizedDoc d;
    d.id = std::move(id);
    for (std::size_t i = 0; i < n; ++i) d.tokens.push_back(base + static_cast<std::uint32_t>(i));
    return d;
}

std::vector<Chunk> chunks_of(const std::vector<std::size_t>& lengths) {
    std::vector<Chunk> out;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        auto c = chunk_tokens(tdoc("c" + std::to_string(i), lengths[i]), 1'000'000);
        out.push_back(c.at(0));
    }
    return out;
}

}  // namespace

TEST_CASE("chunk_tokens examples") {
    auto c = chunk_tokens(tdoc("d", 25), 10);
    REQUIRE(c.size() == 3);
    CHECK(c[0].tokens.size() == 10);
    CHECK(c[1].tokens.size() == 10);
    CHECK(c[2].tokens.size() == 5);
    CHECK(c[2].chunk_index == 2);
    CHECK(c[0].is_split);
    std::vector<std::uint32_t> joined;
    for (const auto& ch : c) joined.insert(joined.end(), ch.tokens.begin(), ch.tokens.end());
    CHECK(joined == tdoc("d", 25).tokens);

    c = chunk_tokens(tdoc("d", 10), 10);
    REQUIRE(c.size() == 1);
    CHECK_FALSE(c[0].is_split);
    CHECK(chunk_tokens(tdoc("d", 0), 10).empty());
    CHECK_THROWS_AS(chunk_tokens(tdoc("d", 3), 0), ConfigError);
}

TEST_CASE("capacity index") {
    CapacityIndex idx(10);
    CHECK_FALSE(idx.best_fit(1));
    idx.push(3, 0);
    idx.push(7, 1);
    idx.push(3, 2);
    CHECK(idx.best_fit(1) == 3u);
    CHECK(idx.best_fit(3) == 3u);
    CHECK(idx.best_fit(4) == 7u);
    CHECK_FALSE(idx.best_fit(8));
    CHECK(idx.pop(3) == 2);
    CHECK(idx.pop(3) == 0);
    CHECK(idx.best_fit(1) == 7u);
    CHECK(idx.open_bins() == 1);
    CHECK_FALSE(idx.best_fit(11));
}

TEST_CASE("pack_best_fit examples") {
    auto r = pack_best_fit(chunks_of({7, 5, 3, 3, 2}), 10);
    REQUIRE(r.sequences.size() == 2);
    CHECK(r.stats.pad_tokens == 0);
    std::vector<std::set<std::string>> bins;
    for (const auto& s : r.sequences) {
        std::set<std::string> ids;
        for (const auto& sp : s.spans) ids.insert(sp.doc_id);
        bins.push_back(ids);
    }
    CHECK(bins[0] == std::set<std::string>{"c0", "c2"});
    CHECK(bins[1] == std::set<std::string>{"c1", "c3", "c4"});

    r = pack_best_fit(chunks_of({6, 6, 6}), 10);
    CHECK(r.sequences.size() == 3);
    CHECK(r.stats.pad_tokens == 12);
    CHECK(r.stats.pad_ratio() == doctest::Approx(0.4));

    r = pack_best_fit(std::span<const Chunk>{}, 10);
    CHECK(r.sequences.empty());
    CHECK_THROWS_AS(pack_best_fit(chunks_of({11}), 10), ConfigError);
}

TEST_CASE("segment-tree best fit equals the linear-scan oracle (property)") {
    Rng rng(1);
    for (int round = 0; round < 300; ++round) {
        const std::size_t L = 1 + rng.below(512);
        const std::size_t n = rng.below(400);
        std::vector<std::size_t> lengths(n);
        for (auto& l : lengths) l = 1 + rng.below(rng.below(2) ? L : std::max<std::size_t>(1, L / 4));
        const auto order = rng.below(2) ? PackOrder::size_desc : PackOrder::input;
        CHECK(best_fit_assign(lengths, L, order) == testing::linear_best_fit(lengths, L, order));
    }
}

TEST_CASE("packed sequences conserve tokens and keep spans well formed (property)") {
    Rng rng(2);
    for (int round = 0; round < 50; ++round) {
        const std::size_t L = 8 + rng.below(120);
        std::vector<TokenizedDoc> docs;
        std::uint64_t total = 0;
        for (int i = 0; i < 60; ++i) {
            docs.push_back(tdoc("d" + std::to_string(i), rng.below(3 * L), static_cast<std::uint32_t>(i * 1000 + 1)));
            total += docs.back().tokens.size();
        }
        const auto r = pack_documents(docs, L, PackOrder::size_desc, 0);
        std::uint64_t span_tokens = 0;
        std::map<std::string, std::map<std::uint32_t, std::vector<std::uint32_t>>> rebuilt;
        for (const auto& s : r.sequences) {
            CHECK(s.tokens.size() == L);
            std::uint32_t at = 0;
            for (const auto& sp : s.spans) {
                CHECK(sp.start == at);
                CHECK(sp.end > sp.start);
                at = sp.end;
                rebuilt[sp.doc_id][sp.chunk_index].assign(s.tokens.begin() + sp.start, s.tokens.begin() + sp.end);
                span_tokens += sp.end - sp.start;
            }
            CHECK(at == L - s.pad_count);
            CHECK(std::all_of(s.tokens.begin() + at, s.tokens.end(), [](auto t) { return t == 0; }));
        }
        CHECK(span_tokens == total);
        CHECK(r.stats.tokens == total);
        for (const auto& d : docs) {
            std::vector<std::uint32_t> joined;
            for (const auto& [idx, toks] : rebuilt[d.id]) joined.insert(joined.end(), toks.begin(), toks.end());
            CHECK(joined == d.tokens);
        }
    }
}

TEST_CASE("naive baseline") {
    std::vector<TokenizedDoc> docs{tdoc("a", 6), tdoc("b", 6), tdoc("c", 3)};
    const auto s = naive_concat_stats(docs, 10);
    CHECK(s.sequences == 2);
    CHECK(s.pad_tokens == 5);
    CHECK(s.split_documents == 1);
    // BFP never splits a document that fits.
    CHECK(pack_documents(docs, 10).stats.split_documents == 0);
}

TEST_CASE("parse_length_classes") {
    const auto c = parse_length_classes("8192:1,16384:1,32768:2");
    REQUIRE(c.size() == 3);
    CHECK(c[2].length == 32768);
    CHECK(c[2].ratio == 2.0);
    CHECK(parse_length_classes("4096").at(0).ratio == 1.0);
    CHECK_THROWS_AS(parse_length_classes(""), ConfigError);
    CHECK_THROWS_AS(parse_length_classes("x:1"), ConfigError);
    CHECK_THROWS_AS(parse_length_classes("10:abc"), ConfigError);
}

TEST_CASE("pack_mixed") {
    Rng rng(3);
    std::vector<TokenizedDoc> docs;
    std::uint64_t total = 0;
    while (total < 1'200'000) {
        docs.push_back(tdoc("d" + std::to_string(docs.size()), 20 + rng.below(380)));
        total += docs.back().tokens.size();
    }
    const std::vector<LengthClass> classes{{8192, 1}, {16384, 1}, {32768, 1}};
    const auto r = pack_mixed(docs, classes, 42, PackOrder::size_desc, 0, 3);
    for (std::size_t k = 0; k < 3; ++k) {
        const double share = static_cast<double>(r.assigned_tokens[k]) / static_cast<double>(total);
        CHECK(share == doctest::Approx(1.0 / 3).epsilon(0.06));
        CHECK(std::abs(share - 1.0 / 3) <= 0.02);
        CHECK(r.packs[k].stats.tokens == r.assigned_tokens[k]);
    }
    CHECK(r.packs[0].sequences == pack_mixed(docs, classes, 42, PackOrder::size_desc, 0, 1).packs[0].sequences);

    const auto single = pack_mixed(docs, {{4096, 1}}, 7);
    CHECK(single.packs[0].sequences == pack_documents(docs, 4096).sequences);
    CHECK_THROWS_AS(pack_mixed(docs, {{4096, 1}, {8192, 0}}, 1), ConfigError);
}

TEST_CASE("shard files round-trip") {
    testing::TempDir dir;
    std::vector<TokenizedDoc> docs{tdoc("alpha", 30), tdoc("beta", 7), tdoc("gamma", 12)};
    const auto r = pack_documents(docs, 16);
    const auto shards = write_shards(dir.path(), "stage", r.sequences, 2);
    REQUIRE(shards.size() == (r.sequences.size() + 1) / 2);
    std::vector<PackedSequence> back;
    for (const auto& s : shards) {
        auto part = read_shard(dir / s.file);
        back.insert(back.end(), part.begin(), part.end());
        CHECK(s.sha256 == sha256_file((dir / s.file).string()));
    }
    CHECK(back == r.sequences);
    const auto idx = shard_index_json(shards, 16, 0);
    CHECK(idx.at("sequences") == r.sequences.size());
    // First record starts with L = 16 little-endian.
    const auto bytes = io::read_file(dir / shards[0].file);
    CHECK(bytes.substr(0, 4) == std::string("\x10\0\0\0", 4));
    dir.write("bad.bin", "\x10\0\0");
    CHECK_THROWS_AS(read_shard(dir / "bad.bin"), RuntimeError);
}

TEST_CASE("placement cost grows at most logarithmically with L") {
    Rng rng(4);
    std::vector<double> rate;
    for (const std::size_t L : {std::size_t{1} << 9, std::size_t{1} << 15}) {
        std::vector<std::size_t> lengths(200'000);
        for (auto& l : lengths) l = 1 + rng.below(L / 2);
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto bins = best_fit_assign(lengths, L, PackOrder::input);
            const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            CHECK_FALSE(bins.empty());
            best = std::min(best, dt);
        }
        rate.push_back(static_cast<double>(lengths.size()) / best);
    }
    CHECK(rate[1] * 3 >= rate[0]);
}
