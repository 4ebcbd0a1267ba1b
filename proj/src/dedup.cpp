#include "dwc/dedup.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "dwc/builtin.hpp"
#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/parallel.hpp"
#include "dwc/text.hpp"

namespace dwc {

// ---------------------------------------------------------------------------
// URLs

const std::vector<std::string>& default_tracking_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        std::string_view data = builtin::tracking_keys();
        while (!data.empty()) {
            const auto nl = data.find('\n');
            auto line = data.substr(0, nl);
            data = nl == std::string_view::npos ? std::string_view{} : data.substr(nl + 1);
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
            if (!line.empty() && line.front() != '#') out.emplace_back(line);
        }
        return out;
    }();
    return keys;
}

namespace {

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

bool is_tracking_key(std::string_view key, const std::vector<std::string>& keys) {
    const auto k = lower_ascii(key);
    for (const auto& t : keys) {
        if (!t.empty() && t.back() == '*') {
            if (std::string_view(k).starts_with(std::string_view(t).substr(0, t.size() - 1))) return true;
        } else if (k == t) {
            return true;
        }
    }
    return false;
}

bool valid_scheme(std::string_view s) {
    if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
    });
}

}  // namespace

CanonicalUrl canonicalize_url(std::string_view url, const std::vector<std::string>& tracking_keys) {
    const auto fail = [&] { return CanonicalUrl{std::string(url), false}; };
    const auto sep = url.find("://");
    if (sep == std::string_view::npos || !valid_scheme(url.substr(0, sep))) return fail();
    auto rest = url.substr(sep + 3);
    if (const auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
    const auto auth_end = rest.find_first_of("/?");
    auto authority = rest.substr(0, auth_end);
    rest = auth_end == std::string_view::npos ? std::string_view{} : rest.substr(auth_end);
    if (authority.empty() || authority.find_first_of(" \t\r\n") != std::string_view::npos) return fail();

    std::string out = lower_ascii(url.substr(0, sep)) + "://";
    if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
        out += authority.substr(0, at + 1);
        authority = authority.substr(at + 1);
        if (authority.empty()) return fail();
    }
    out += lower_ascii(authority);

    const auto q = rest.find('?');
    auto path = rest.substr(0, q);
    const auto query = q == std::string_view::npos ? std::string_view{} : rest.substr(q + 1);
    while (!path.empty() && path.back() == '/') path.remove_suffix(1);
    out += path;

    std::vector<std::pair<std::string_view, std::string_view>> params;
    std::string_view qs = query;
    while (!qs.empty()) {
        const auto amp = qs.find('&');
        const auto part = qs.substr(0, amp);
        qs = amp == std::string_view::npos ? std::string_view{} : qs.substr(amp + 1);
        if (part.empty()) continue;
        const auto key = part.substr(0, part.find('='));
        if (is_tracking_key(key, tracking_keys)) continue;
        params.emplace_back(key, part);
    }
    std::stable_sort(params.begin(), params.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < params.size(); ++i) {
        out += i == 0 ? '?' : '&';
        out += params[i].second;
    }
    return {out, true};
}

// ---------------------------------------------------------------------------
// Reports

void DedupReport::merge(const DedupReport& later) {
    std::unordered_map<std::string, std::size_t> by_survivor;
    for (std::size_t i = 0; i < clusters.size(); ++i) by_survivor.emplace(clusters[i].survivor, i);
    std::vector<bool> folded(clusters.size(), false);
    std::vector<DedupCluster> appended;
    for (const auto& c : later.clusters) {
        DedupCluster* target = nullptr;
        if (auto it = by_survivor.find(c.survivor); it != by_survivor.end()) {
            target = &clusters[it->second];
        } else {
            appended.push_back({c.survivor, {}});
            target = &appended.back();
        }
        for (const auto& d : c.duplicates) {
            target->duplicates.push_back(d);
            if (auto it = by_survivor.find(d); it != by_survivor.end() && !folded[it->second]) {
                folded[it->second] = true;
                const auto& old = clusters[it->second].duplicates;
                target->duplicates.insert(target->duplicates.end(), old.begin(), old.end());
            }
        }
    }
    std::vector<DedupCluster> merged;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (!folded[i]) merged.push_back(std::move(clusters[i]));
    }
    for (auto& c : appended) merged.push_back(std::move(c));
    clusters = std::move(merged);
    for (const auto& [level, n] : later.removed) removed[level] += n;
    unparseable_urls += later.unparseable_urls;
}

std::uint64_t DedupReport::total_removed() const {
    std::uint64_t n = 0;
    for (const auto& [level, count] : removed) n += count;
    return n;
}

Json DedupReport::to_json() const {
    Json cl = Json::array();
    std::size_t largest = 0;
    for (const auto& c : clusters) {
        cl.push_back(Json{{"survivor", c.survivor}, {"duplicates", c.duplicates}});
        largest = std::max(largest, c.duplicates.size() + 1);
    }
    return Json{{"removed", removed},
                {"total_removed", total_removed()},
                {"cluster_count", clusters.size()},
                {"largest_cluster", largest},
                {"unparseable_urls", unparseable_urls},
                {"clusters", cl}};
}

namespace {

// Groups documents by key; the first occurrence of each key survives.
template <typename KeyFn, typename SameFn>
DedupReport group_by_key(std::span<const Document> docs, const std::string& level, KeyFn&& key_of, SameFn&& same) {
    DedupReport report;
    report.removed[level] = 0;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> first_by_key;  // key -> cluster indices
    std::vector<std::size_t> survivor_index;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto key = key_of(docs[i]);
        if (!key) continue;
        auto& bucket = first_by_key[*key];
        bool placed = false;
        for (std::size_t ci : bucket) {
            if (!same(docs[survivor_index[ci]], docs[i])) continue;
            report.clusters[ci].duplicates.push_back(docs[i].id);
            ++report.removed[level];
            placed = true;
            break;
        }
        if (!placed) {
            bucket.push_back(report.clusters.size());
            report.clusters.push_back({docs[i].id, {}});
            survivor_index.push_back(i);
        }
    }
    std::erase_if(report.clusters, [](const DedupCluster& c) { return c.duplicates.empty(); });
    return report;
}

}  // namespace

DedupReport dedup_url(std::span<const Document> docs, const std::vector<std::string>& tracking_keys) {
    std::vector<std::string> canonical(docs.size());
    std::uint64_t unparseable = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (!docs[i].url || docs[i].url->empty()) continue;
        auto c = canonicalize_url(*docs[i].url, tracking_keys);
        if (!c.ok) ++unparseable;
        canonical[i] = std::move(c.url);
    }
    const Document* base = docs.data();
    auto report = group_by_key(
        docs, "url",
        [&](const Document& d) -> std::optional<std::uint64_t> {
            const auto& c = canonical[static_cast<std::size_t>(&d - base)];
            if (c.empty()) return std::nullopt;
            return hash64(c);
        },
        [&](const Document& a, const Document& b) {
            return canonical[static_cast<std::size_t>(&a - base)] == canonical[static_cast<std::size_t>(&b - base)];
        });
    report.unparseable_urls = unparseable;
    return report;
}

DedupReport dedup_exact(std::span<const Document> docs) {
    std::vector<std::string> normalized(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) normalized[i] = text::normalize_space(docs[i].text);
    const Document* base = docs.data();
    return group_by_key(
        docs, "exact",
        [&](const Document& d) -> std::optional<std::uint64_t> {
            return hash64(normalized[static_cast<std::size_t>(&d - base)]);
        },
        [&](const Document& a, const Document& b) {
            return normalized[static_cast<std::size_t>(&a - base)] == normalized[static_cast<std::size_t>(&b - base)];
        });
}

// ---------------------------------------------------------------------------
// MinHash

std::vector<std::string> MinHashParams::validate() const {
    std::vector<std::string> v;
    if (shingle_size < 1) v.emplace_back("shingle_size must be at least 1");
    if (bands < 1) v.emplace_back("bands must be at least 1");
    if (bands * rows != num_perms) v.emplace_back("bands * rows must equal num_perms");
    if (num_perms < bands) v.emplace_back("num_perms must be at least bands");
    if (!(threshold >= 0.0 && threshold <= 1.0)) v.emplace_back("threshold must be in [0, 1]");
    return v;
}

MinHashParams minhash_params_from_json(const Json& j) {
    MinHashParams p;
    try {
        p.shingle_size = j.value("shingle_size", p.shingle_size);
        p.num_perms = j.value("num_perms", p.num_perms);
        p.bands = j.value("bands", p.bands);
        p.rows = j.value("rows", p.rows);
        p.threshold = j.value("threshold", p.threshold);
        p.seed = j.value("seed", p.seed);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("dedup params: ") + e.what());
    }
    if (auto v = p.validate(); !v.empty()) throw ConfigError("dedup params: " + v.front());
    return p;
}

Json to_json(const MinHashParams& p) {
    return Json{{"shingle_size", p.shingle_size}, {"num_perms", p.num_perms}, {"bands", p.bands},
                {"rows", p.rows},                 {"threshold", p.threshold}, {"seed", p.seed}};
}

namespace {

constexpr std::uint64_t kMersenne61 = (1ULL << 61) - 1;

inline std::uint64_t mod61(unsigned __int128 x) {
    std::uint64_t lo = static_cast<std::uint64_t>(x & kMersenne61);
    std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
    std::uint64_t r = lo + hi;
    r = (r & kMersenne61) + (r >> 61);
    return r >= kMersenne61 ? r - kMersenne61 : r;
}

}  // namespace

MinHasher::MinHasher(MinHashParams params) : params_(params) {
    if (auto v = params_.validate(); !v.empty()) throw ConfigError("minhash: " + v.front());
    std::uint64_t state = params_.seed;
    a_.resize(params_.num_perms);
    b_.resize(params_.num_perms);
    for (std::size_t i = 0; i < params_.num_perms; ++i) {
        do {
            state = splitmix64(state);
            a_[i] = state & kMersenne61;
        } while (a_[i] == 0 || a_[i] >= kMersenne61);
        do {
            state = splitmix64(state);
            b_[i] = state & kMersenne61;
        } while (b_[i] >= kMersenne61);
    }
}

std::vector<std::uint64_t> MinHasher::shingles(std::string_view text) const {
    const auto words = text::words(text, true);
    const std::size_t k = params_.shingle_size;
    std::vector<std::uint64_t> out;
    if (words.size() < k) return out;
    out.reserve(words.size() - k + 1);
    std::string buf;
    for (std::size_t i = 0; i + k <= words.size(); ++i) {
        buf.clear();
        for (std::size_t j = 0; j < k; ++j) {
            if (j) buf.push_back('\x1f');
            buf += words[i + j];
        }
        out.push_back(hash64(buf));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Signature MinHasher::signature_of_set(std::span<const std::uint64_t> shingle_hashes) const {
    if (shingle_hashes.empty()) return {};
    const std::size_t p = params_.num_perms;
    Signature sig(p, kMersenne61);
    for (std::uint64_t h : shingle_hashes) {
        const std::uint64_t x = mod61(h);
        for (std::size_t i = 0; i < p; ++i) {
            const std::uint64_t v = mod61(static_cast<unsigned __int128>(a_[i]) * x + b_[i]);
            if (v < sig[i]) sig[i] = v;
        }
    }
    return sig;
}

Signature MinHasher::signature(std::string_view text) const { return signature_of_set(shingles(text)); }

double MinHasher::similarity(const Signature& a, const Signature& b) {
    if (a.empty() || b.empty() || a.size() != b.size()) return 0.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(a.size());
}

bool MinHasher::share_band(const Signature& a, const Signature& b) const {
    if (a.empty() || b.empty()) return false;
    for (std::size_t band = 0; band < params_.bands; ++band) {
        const auto off = band * params_.rows;
        if (std::equal(a.begin() + static_cast<std::ptrdiff_t>(off),
                       a.begin() + static_cast<std::ptrdiff_t>(off + params_.rows),
                       b.begin() + static_cast<std::ptrdiff_t>(off))) {
            return true;
        }
    }
    return false;
}

namespace {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // The smaller index becomes the root, so the root is the earliest member.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

DedupReport dedup_near_signatures(std::span<const Document> docs, std::span<const Signature> sigs,
                                  const MinHasher& hasher) {
    const auto& p = hasher.params();
    DedupReport report;
    report.removed["near"] = 0;
    UnionFind uf(docs.size());
    std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> buckets(p.bands);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& sig = sigs[i];
        if (sig.empty()) continue;
        for (std::size_t band = 0; band < p.bands; ++band) {
            std::uint64_t h = splitmix64(band);
            for (std::size_t r = 0; r < p.rows; ++r) h = splitmix64(h ^ sig[band * p.rows + r]);
            auto& members = buckets[band][h];
            for (std::size_t j : members) {
                if (uf.find(i) == uf.find(j)) continue;
                if (MinHasher::similarity(sig, sigs[j]) >= p.threshold) uf.unite(i, j);
            }
            members.push_back(i);
        }
    }
    std::unordered_map<std::size_t, std::size_t> cluster_of_root;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto root = uf.find(i);
        if (root == i) continue;
        auto [it, inserted] = cluster_of_root.emplace(root, report.clusters.size());
        if (inserted) report.clusters.push_back({docs[root].id, {}});
        report.clusters[it->second].duplicates.push_back(docs[i].id);
        ++report.removed["near"];
    }
    // Clusters were created in order of their second member; order by survivor.
    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (const auto& [root, ci] : cluster_of_root) order.emplace_back(root, ci);
    std::sort(order.begin(), order.end());
    std::vector<DedupCluster> sorted;
    sorted.reserve(order.size());
    for (const auto& [root, ci] : order) sorted.push_back(std::move(report.clusters[ci]));
    report.clusters = std::move(sorted);
    return report;
}

DedupReport dedup_near(std::span<const Document> docs, const MinHasher& hasher, std::size_t workers) {
    std::vector<Signature> sigs(docs.size());
    parallel_for(docs.size(), workers, [&](std::size_t i) { sigs[i] = hasher.signature(docs[i].text); });
    return dedup_near_signatures(docs, sigs, hasher);
}

void mark_duplicates(std::vector<Document>& docs, const DedupReport& report, std::string_view level) {
    std::unordered_map<std::string_view, const std::string*> survivor_of;
    for (const auto& c : report.clusters) {
        for (const auto& d : c.duplicates) survivor_of.emplace(d, &c.survivor);
    }
    const std::string reason = level == "near" ? "near_duplicate" : "duplicate_" + std::string(level);
    for (auto& doc : docs) {
        auto it = survivor_of.find(doc.id);
        if (it == survivor_of.end() || doc.dropped()) continue;
        doc.verdicts.push_back({FilterStage::dedup, Decision::drop, reason, "of " + *it->second});
    }
}

}  // namespace dwc
