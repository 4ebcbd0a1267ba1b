#include <set>

#include "doctest.h"
#include "dwc/dedup.hpp"
#include "dwc/error.hpp"
#include "dwc/text.hpp"
#include "generators.hpp"

using namespace dwc;

namespace {

Document doc(std::string id, std::string text, std::optional<std::string> url = std::nullopt) {
    Document d;
    d.id = std::move(id);
    d.text = std::move(text);
    d.url = std::move(url);
    return d;
}

// Brute-force shingle sets over raw strings, independent of the hashed path.
std::set<std::string> shingle_strings(std::string_view text, std::size_t k) {
    const auto w = text::words(text, true);
    std::set<std::string> out;
    for (std::size_t i = 0; i + k <= w.size(); ++i) {
        std::string s;
        for (std::size_t j = 0; j < k; ++j) s += w[i + j] + " ";
        out.insert(s);
    }
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t inter = 0;
    for (const auto& s : a) inter += b.count(s);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string words_text(Rng& rng, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += testing::random_word(rng, 4, 9);
    }
    return out;
}

void check_report_invariants(const DedupReport& r) {
    std::set<std::string> seen;
    for (const auto& c : r.clusters) {
        CHECK(seen.insert(c.survivor).second);
        for (const auto& d : c.duplicates) CHECK(seen.insert(d).second);
    }
    std::size_t dups = 0;
    for (const auto& c : r.clusters) dups += c.duplicates.size();
    CHECK(dups == r.total_removed());
}

}  // namespace

TEST_CASE("canonicalize_url examples") {
    CHECK(canonicalize_url("HTTP://Example.com/A#x").url == "http://example.com/A");
    CHECK(canonicalize_url("http://a.com/p?utm_source=x&id=2").url == "http://a.com/p?id=2");
    CHECK(canonicalize_url("http://a.com/p?b=1&a=2").url == "http://a.com/p?a=2&b=1");
    CHECK(canonicalize_url("https://a.com/").url == "https://a.com");
    CHECK(canonicalize_url("https://a.com/x/?fbclid=1&gclid=2").url == "https://a.com/x");
    CHECK(canonicalize_url("https://User@A.COM/x").url == "https://User@a.com/x");
    const auto bad = canonicalize_url("not a url");
    CHECK_FALSE(bad.ok);
    CHECK(bad.url == "not a url");
    CHECK_FALSE(canonicalize_url("http:///path").ok);
    CHECK_FALSE(canonicalize_url("1http://a.com").ok);
}

TEST_CASE("canonicalize_url is idempotent (property)") {
    Rng rng(77);
    static const char* kKeys[] = {"utm_medium", "id", "page", "fbclid", "q", "b", "a"};
    for (int i = 0; i < 500; ++i) {
        std::string url = rng.below(2) ? "HTTPS://" : "http://";
        url += "Host" + testing::random_word(rng) + ".COM";
        for (std::size_t s = rng.below(3); s > 0; --s) url += "/" + testing::random_word(rng);
        if (rng.below(2)) url += "/";
        for (std::size_t p = rng.below(4), n = 0; p > 0; --p, ++n) {
            url += n == 0 ? "?" : "&";
            url += std::string(kKeys[rng.below(std::size(kKeys))]) + "=" + testing::random_word(rng);
        }
        if (rng.below(2)) url += "#" + testing::random_word(rng);
        const auto once = canonicalize_url(url);
        REQUIRE(once.ok);
        CHECK(canonicalize_url(once.url).url == once.url);
        CHECK(once.url.find('#') == std::string::npos);
        CHECK(once.url.find("utm_") == std::string::npos);
    }
}

TEST_CASE("dedup_url groups canonical duplicates") {
    std::vector<Document> docs{doc("a", "x", "http://a.com/p?utm_source=1"), doc("b", "y", "HTTP://A.com/p/"),
                               doc("c", "z"), doc("d", "w", "http://b.com"), doc("e", "v", "garbage")};
    const auto r = dedup_url(docs);
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0] == DedupCluster{"a", {"b"}});
    CHECK(r.removed.at("url") == 1);
    CHECK(r.unparseable_urls == 1);
}

TEST_CASE("dedup_exact examples") {
    std::vector<Document> same{doc("a", "hello world"), doc("b", "hello world")};
    auto r = dedup_exact(same);
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0] == DedupCluster{"a", {"b"}});

    std::vector<Document> spaces{doc("a", "hello    world  again"), doc("b", "hello world again")};
    CHECK(dedup_exact(spaces).clusters.size() == 1);

    std::vector<Document> distinct{doc("a", "one"), doc("b", "two"), doc("c", "three")};
    r = dedup_exact(distinct);
    CHECK(r.clusters.empty());
    CHECK(r.total_removed() == 0);
    CHECK(dedup_exact(std::span<const Document>{}).clusters.empty());
}

TEST_CASE("minhash params validation") {
    CHECK(MinHashParams{}.validate().empty());
    MinHashParams p;
    p.rows = 7;
    CHECK_FALSE(p.validate().empty());
    CHECK_THROWS_AS(MinHasher{p}, ConfigError);
    p = MinHashParams{};
    p.shingle_size = 0;
    CHECK_THROWS_AS(MinHasher{p}, ConfigError);
    CHECK(minhash_params_from_json(to_json(MinHashParams{})).num_perms == 128);
    CHECK_THROWS_AS(minhash_params_from_json(Json{{"bands", 3}}), ConfigError);
}

TEST_CASE("minhash signature examples") {
    const MinHasher h(MinHashParams{});
    Rng rng(9);
    const auto t = words_text(rng, 40);
    CHECK(h.signature(t) == h.signature(t));
    CHECK(h.signature(t).size() == 128);
    CHECK(h.signature("too few words").empty());
    CHECK(MinHasher::similarity(h.signature("too few words"), h.signature("too few words")) == 0.0);

    // 60 shared words plus 28 distinct words on each side: 84 shingles per
    // side, 56 of them shared, so J = 56/112.
    const auto shared = words_text(rng, 60);
    const auto a = words_text(rng, 28) + " " + shared;
    const auto b = shared + " " + words_text(rng, 28);
    const double j = jaccard(shingle_strings(a, 5), shingle_strings(b, 5));
    CHECK(j == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(MinHasher::similarity(h.signature(a), h.signature(b)) - j) <= 0.15);

    const auto c = words_text(rng, 80);
    const auto d = words_text(rng, 80);
    REQUIRE(jaccard(shingle_strings(c, 5), shingle_strings(d, 5)) == 0.0);
    CHECK(MinHasher::similarity(h.signature(c), h.signature(d)) < 0.05);
}

TEST_CASE("dedup_near: 10 planted pairs in 100 docs") {
    Rng rng(2024);
    std::vector<Document> docs;
    for (int i = 0; i < 90; ++i) docs.push_back(doc("d" + std::to_string(i), words_text(rng, 120)));
    std::vector<std::pair<std::string, std::string>> planted;
    for (int p = 0; p < 10; ++p) {
        auto base = docs[static_cast<std::size_t>(p * 7)];
        auto words = text::words(base.text);
        words.back() = "changed";
        std::string variant;
        for (const auto& w : words) variant += (variant.empty() ? "" : " ") + w;
        planted.emplace_back(base.id, "v" + std::to_string(p));
        docs.push_back(doc("v" + std::to_string(p), variant));
    }
    // Oracle: all-pairs brute-force Jaccard.
    std::vector<std::set<std::string>> sets;
    for (const auto& d : docs) sets.push_back(shingle_strings(d.text, 5));
    std::set<std::pair<std::string, std::string>> similar;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (std::size_t j = i + 1; j < docs.size(); ++j) {
            const double jac = jaccard(sets[i], sets[j]);
            if (jac >= 0.9) similar.emplace(docs[i].id, docs[j].id);
            else REQUIRE(jac < 0.2);
        }
    }
    REQUIRE(similar.size() == 10);

    const MinHasher h(MinHashParams{});
    const auto r = dedup_near(docs, h, 4);
    check_report_invariants(r);
    std::size_t found = 0;
    for (const auto& c : r.clusters) {
        for (const auto& d : c.duplicates) {
            CHECK(similar.count({c.survivor, d}) == 1);
            found += similar.count({c.survivor, d});
        }
    }
    CHECK(found >= 9);
    CHECK(r == dedup_near(docs, h, 1));
}

TEST_CASE("dedup_near trivial inputs") {
    const MinHasher h(MinHashParams{});
    CHECK(dedup_near(std::span<const Document>{}, h).clusters.empty());
    std::vector<Document> one{doc("a", "one two three four five six seven")};
    CHECK(dedup_near(one, h).clusters.empty());
    std::vector<Document> shorts{doc("a", "tiny"), doc("b", "tiny")};
    CHECK(dedup_near(shorts, h).clusters.empty());
}

TEST_CASE("dedup_near: earliest survives and chains collapse into one cluster") {
    Rng rng(31);
    const auto base = words_text(rng, 300);
    std::vector<Document> docs{doc("x", words_text(rng, 50)), doc("a", base), doc("b", base + " tail"),
                               doc("c", base + " tail end")};
    const auto r = dedup_near(docs, MinHasher(MinHashParams{}));
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0].survivor == "a");
    CHECK(r.clusters[0].duplicates == std::vector<std::string>{"b", "c"});
    CHECK(r.removed.at("near") == 2);
}

TEST_CASE("dedup reports are deterministic and shuffled duplicates keep invariants (property)") {
    Rng rng(4);
    for (int round = 0; round < 20; ++round) {
        std::vector<Document> docs;
        std::vector<std::string> pool;
        for (int i = 0; i < 8; ++i) pool.push_back(words_text(rng, 20 + rng.below(20)));
        for (int i = 0; i < 40; ++i) docs.push_back(doc("d" + std::to_string(i), pool[rng.below(pool.size())]));
        const MinHasher h(MinHashParams{});
        auto exact = dedup_exact(docs);
        check_report_invariants(exact);
        CHECK(exact == dedup_exact(docs));
        auto near = dedup_near(docs, h, 3);
        check_report_invariants(near);
        CHECK(near == dedup_near(docs, h, 1));
        // Near dedup over the exact survivors cascades into one coherent report.
        std::vector<Document> kept = docs;
        mark_duplicates(kept, exact, "exact");
        std::erase_if(kept, [](const Document& d) { return d.dropped(); });
        auto merged = exact;
        merged.merge(dedup_near(kept, h));
        check_report_invariants(merged);
        CHECK(merged.total_removed() + kept.size() - dedup_near(kept, h).total_removed() == docs.size());
    }
}

TEST_CASE("DedupReport::merge folds earlier clusters into later survivors") {
    DedupReport first;
    first.clusters = {{"a", {"a2"}}, {"b", {"b2", "b3"}}};
    first.removed["exact"] = 3;
    DedupReport later;
    later.clusters = {{"a", {"b"}}, {"c", {"d"}}};
    later.removed["near"] = 2;
    first.merge(later);
    REQUIRE(first.clusters.size() == 2);
    CHECK(first.clusters[0] == DedupCluster{"a", {"a2", "b", "b2", "b3"}});
    CHECK(first.clusters[1] == DedupCluster{"c", {"d"}});
    CHECK(first.total_removed() == 5);
    check_report_invariants(first);
    const auto j = first.to_json();
    CHECK(j.at("cluster_count") == 2);
    CHECK(j.at("largest_cluster") == 5);
}

TEST_CASE("mark_duplicates") {
    std::vector<Document> docs{doc("a", "t"), doc("b", "t"), doc("c", "u")};
    const auto r = dedup_exact(docs);
    mark_duplicates(docs, r, "exact");
    CHECK_FALSE(docs[0].dropped());
    REQUIRE(docs[1].dropped());
    CHECK(docs[1].verdicts[0].stage == FilterStage::dedup);
    CHECK(docs[1].verdicts[0].reason_code == "duplicate_exact");
    CHECK(docs[1].verdicts[0].detail == "of a");
    CHECK_FALSE(docs[2].dropped());
}
