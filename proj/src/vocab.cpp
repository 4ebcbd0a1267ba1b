#include "dwc/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <unordered_set>

#include "dwc/error.hpp"
#include "dwc/parallel.hpp"
#include "dwc/text.hpp"
#include "dwc/utf8.hpp"

namespace dwc {

std::optional<Pretokenizer> parse_pretokenizer(std::string_view s) {
    if (s == "whitespace") return Pretokenizer::whitespace;
    if (s == "byte") return Pretokenizer::byte;
    return std::nullopt;
}

std::string_view to_string(Pretokenizer p) { return p == Pretokenizer::byte ? "byte" : "whitespace"; }

namespace {

constexpr std::size_t kMaxPieceCodePoints = 64;

inline std::uint64_t pair_key(std::uint32_t l, std::uint32_t r) { return (static_cast<std::uint64_t>(l) << 32) | r; }

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text, Pretokenizer p) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    const std::size_t n = text.size();
    while (pos < n) {
        std::size_t start = pos;
        std::size_t cps = 0;
        while (pos < n) {
            std::size_t q = pos;
            if (!text::is_whitespace(utf8::next(text, q))) break;
            pos = q;
            ++cps;
        }
        if (p == Pretokenizer::whitespace) {
            start = pos;
            cps = 0;
        }
        if (pos >= n) {
            if (pos > start) out.push_back(text.substr(start, pos - start));
            break;
        }
        std::size_t q = pos;
        const bool alnum = text::is_alnum(utf8::next(text, q));
        pos = q;
        ++cps;
        while (pos < n && cps < kMaxPieceCodePoints) {
            q = pos;
            const char32_t cp = utf8::next(text, q);
            if (text::is_whitespace(cp) || text::is_alnum(cp) != alnum) break;
            pos = q;
            ++cps;
        }
        out.push_back(text.substr(start, pos - start));
    }
    return out;
}

std::vector<std::string> base_symbols(std::string_view piece, Pretokenizer p) {
    std::vector<std::string> out;
    if (p == Pretokenizer::byte) {
        out.reserve(piece.size());
        for (char c : piece) out.emplace_back(1, c);
        return out;
    }
    std::size_t pos = 0;
    while (pos < piece.size()) {
        const std::size_t start = pos;
        utf8::next(piece, pos);
        out.emplace_back(piece.substr(start, pos - start));
    }
    return out;
}

std::map<std::string, std::uint64_t> count_pieces(std::span<const std::string> texts, Pretokenizer p,
                                                  std::size_t workers) {
    workers = std::max<std::size_t>(1, std::min(workers, texts.size()));
    std::vector<std::unordered_map<std::string, std::uint64_t>> partial(workers);
    const std::size_t block = texts.empty() ? 0 : (texts.size() + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::size_t w) {
        const std::size_t end = std::min(texts.size(), (w + 1) * block);
        for (std::size_t i = w * block; i < end; ++i) {
            for (auto piece : pretokenize(texts[i], p)) ++partial[w][std::string(piece)];
        }
    });
    std::map<std::string, std::uint64_t> out;
    for (auto& m : partial) {
        for (auto& [k, v] : m) out[k] += v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

class BpeTrainer {
public:
    BpeTrainer(const std::map<std::string, std::uint64_t>& counts, Pretokenizer p) {
        std::set<std::string> base;
        for (const auto& [piece, count] : counts) {
            Word w;
            w.count = count;
            for (auto& s : base_symbols(piece, p)) {
                w.symbols.push_back(intern(s));
                base.insert(std::move(s));
            }
            words_.push_back(std::move(w));
        }
        result_.entries.assign(base.begin(), base.end());
        emitted_.insert(base.begin(), base.end());
        for (std::uint32_t wi = 0; wi < words_.size(); ++wi) {
            const auto& s = words_[wi].symbols;
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                const auto key = pair_key(s[i], s[i + 1]);
                pair_count_[key] += static_cast<std::int64_t>(words_[wi].count);
                pair_words_[key].push_back(wi);
            }
        }
        for (const auto& [key, count] : pair_count_) push(key);
    }

    BpeResult run(std::size_t num_merges) {
        while (result_.merges.size() < num_merges && !heap_.empty()) {
            const auto top = heap_.top();
            heap_.pop();
            const auto key = pair_key(top.left, top.right);
            const auto it = pair_count_.find(key);
            if (it == pair_count_.end() || it->second != top.count || top.count <= 0) continue;
            apply(top.left, top.right);
        }
        return std::move(result_);
    }

private:
    struct Word {
        std::vector<std::uint32_t> symbols;
        std::uint64_t count = 0;
    };

    struct Entry {
        std::int64_t count;
        std::uint32_t left;
        std::uint32_t right;
    };

    struct Lower {
        const std::vector<std::string>* names;
        // Lower priority: smaller count, or equal count and larger pair.
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.count != b.count) return a.count < b.count;
            const auto& n = *names;
            if (a.left != b.left) return n[a.left] > n[b.left];
            return n[a.right] > n[b.right];
        }
    };

    std::uint32_t intern(const std::string& s) {
        auto [it, inserted] = ids_.emplace(s, static_cast<std::uint32_t>(names_.size()));
        if (inserted) names_.push_back(s);
        return it->second;
    }

    void push(std::uint64_t key) {
        const auto c = pair_count_[key];
        if (c > 0) heap_.push({c, static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key)});
    }

    void apply(std::uint32_t left, std::uint32_t right) {
        const std::string merged = names_[left] + names_[right];
        result_.merges.emplace_back(names_[left], names_[right]);
        if (emitted_.insert(merged).second) result_.entries.push_back(merged);
        const std::uint32_t z = intern(merged);
        const auto key = pair_key(left, right);

        auto affected = std::move(pair_words_[key]);
        pair_words_[key].clear();
        std::sort(affected.begin(), affected.end());
        affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

        std::unordered_map<std::uint64_t, std::int64_t> delta;
        std::vector<std::uint32_t> next;
        for (const auto wi : affected) {
            auto& w = words_[wi];
            const auto& s = w.symbols;
            next.clear();
            for (std::size_t i = 0; i < s.size();) {
                if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
                    next.push_back(z);
                    i += 2;
                } else {
                    next.push_back(s[i]);
                    ++i;
                }
            }
            if (next.size() == s.size()) continue;
            const auto c = static_cast<std::int64_t>(w.count);
            for (std::size_t i = 0; i + 1 < s.size(); ++i) delta[pair_key(s[i], s[i + 1])] -= c;
            for (std::size_t i = 0; i + 1 < next.size(); ++i) {
                const auto k = pair_key(next[i], next[i + 1]);
                delta[k] += c;
                pair_words_[k].push_back(wi);
            }
            w.symbols = next;
        }
        std::vector<std::uint64_t> changed;
        for (const auto& [k, d] : delta) {
            if (d == 0) continue;
            pair_count_[k] += d;
            changed.push_back(k);
        }
        std::sort(changed.begin(), changed.end());
        for (const auto k : changed) push(k);
    }

    std::vector<Word> words_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::unordered_map<std::uint64_t, std::int64_t> pair_count_;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> pair_words_;
    std::priority_queue<Entry, std::vector<Entry>, Lower> heap_{Lower{&names_}};
    std::unordered_set<std::string> emitted_;
    BpeResult result_;
};

}  // namespace

BpeResult train_bpe(const std::map<std::string, std::uint64_t>& piece_counts, std::size_t num_merges,
                    Pretokenizer p) {
    return BpeTrainer(piece_counts, p).run(num_merges);
}

BpeResult train_bpe(std::span<const std::string> texts, std::size_t num_merges, Pretokenizer p,
                    std::size_t workers) {
    return train_bpe(count_pieces(texts, p, workers), num_merges, p);
}

// ---------------------------------------------------------------------------
// Files

std::string escape_token(std::string_view token, bool escape_space) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(token.size());
    std::size_t pos = 0;
    while (pos < token.size()) {
        const auto c = static_cast<unsigned char>(token[pos]);
        const auto len = utf8::sequence_length(token, pos);
        if (len > 1) {
            out.append(token.substr(pos, len));
            pos += len;
            continue;
        }
        ++pos;
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            out += "\\r";
        } else if (c == '\t') {
            out += "\\t";
        } else if (len == 0 || c < 0x20 || c == 0x7F || (escape_space && c == ' ')) {
            out += "\\x";
            out += kHex[c >> 4];
            out += kHex[c & 0xF];
        } else {
            out += static_cast<char>(c);
        }
    }
    return out;
}

std::string unescape_token(std::string_view line) {
    std::string out;
    out.reserve(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '\\') {
            out += line[i];
            continue;
        }
        if (++i >= line.size()) throw ConfigError("dangling escape in token '" + std::string(line) + "'");
        switch (line[i]) {
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            case 'x': {
                const auto hex = [&](char h) -> int {
                    if (h >= '0' && h <= '9') return h - '0';
                    if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                    if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                    throw ConfigError("bad \\x escape in token '" + std::string(line) + "'");
                };
                if (i + 2 >= line.size()) throw ConfigError("short \\x escape in token '" + std::string(line) + "'");
                out += static_cast<char>(hex(line[i + 1]) * 16 + hex(line[i + 2]));
                i += 2;
                break;
            }
            default: throw ConfigError("unknown escape in token '" + std::string(line) + "'");
        }
    }
    return out;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw RuntimeError("write failed for " + path.string());
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw ConfigError("empty token at id " + std::to_string(i));
        if (!index_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second) {
            throw ConfigError("duplicate token '" + escape_token(tokens_[i]) + "' at id " + std::to_string(i));
        }
    }
    base_size_ = tokens_.size();
}

Vocabulary Vocabulary::byte_level() {
    std::vector<std::string> t;
    t.reserve(256);
    for (int b = 0; b < 256; ++b) t.emplace_back(1, static_cast<char>(b));
    return Vocabulary(std::move(t));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    std::vector<std::string> tokens;
    tokens.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) throw ConfigError(path.string() + ": empty token at line " + std::to_string(i + 1));
        tokens.push_back(unescape_token(lines[i]));
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::load_merges(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto sp = lines[i].find(' ');
        if (sp == std::string::npos || lines[i].find(' ', sp + 1) != std::string::npos) {
            throw ConfigError(path.string() + ": expected 'left right' at line " + std::to_string(i + 1));
        }
        add_merge({unescape_token(std::string_view(lines[i]).substr(0, sp)),
                   unescape_token(std::string_view(lines[i]).substr(sp + 1))});
    }
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::vector<std::string> lines;
    lines.reserve(tokens_.size());
    for (const auto& t : tokens_) lines.push_back(escape_token(t));
    write_lines(path, lines);
}

void Vocabulary::save_merges(const std::filesystem::path& path) const {
    std::vector<std::string> lines;
    lines.reserve(merges_.size());
    for (const auto& [l, r] : merges_) lines.push_back(escape_token(l, true) + " " + escape_token(r, true));
    write_lines(path, lines);
}

std::optional<std::uint32_t> Vocabulary::id_of(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token(std::uint32_t id) const {
    if (id >= tokens_.size()) {
        throw RuntimeError("token id " + std::to_string(id) + " out of range (vocabulary size " +
                           std::to_string(tokens_.size()) + ")");
    }
    return tokens_[id];
}

void Vocabulary::add_merge(MergeRule rule) {
    if (!id_of(rule.first) || !id_of(rule.second) || !id_of(rule.first + rule.second)) {
        throw ConfigError("merge '" + escape_token(rule.first, true) + " " + escape_token(rule.second, true) +
                          "' refers to tokens outside the vocabulary");
    }
    merges_.push_back(std::move(rule));
}

Json VocabMerge::to_json() const {
    return Json{{"base_size", vocab.base_size()}, {"learned", learned},          {"collisions", collisions},
                {"added", vocab.added_size()},    {"total", vocab.size()},       {"merges", vocab.merges().size()}};
}

VocabMerge merge_vocab(const Vocabulary& base, const BpeResult& learned) {
    VocabMerge out;
    out.vocab = base;
    out.vocab.base_size_ = base.size();
    out.learned = learned.entries.size();
    auto& v = out.vocab;
    for (const auto& e : learned.entries) {
        if (v.index_.contains(e)) {
            ++out.collisions;
            continue;
        }
        v.index_.emplace(e, static_cast<std::uint32_t>(v.tokens_.size()));
        v.tokens_.push_back(e);
    }
    std::set<MergeRule> known(v.merges_.begin(), v.merges_.end());
    for (const auto& m : learned.merges) {
        if (known.insert(m).second) v.add_merge(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoding

BpeEncoder::BpeEncoder(const Vocabulary& vocab, Pretokenizer p) : vocab_(&vocab), pretokenizer_(p) {
    const auto& merges = vocab.merges();
    ranks_.reserve(merges.size());
    for (std::size_t r = 0; r < merges.size(); ++r) {
        const auto l = vocab.id_of(merges[r].first);
        const auto rt = vocab.id_of(merges[r].second);
        const auto z = vocab.id_of(merges[r].first + merges[r].second);
        if (!l || !rt || !z) throw ConfigError("merge rule outside the vocabulary");
        ranks_.emplace(pair_key(*l, *rt), std::make_pair(static_cast<std::uint32_t>(r), *z));
    }
}

void BpeEncoder::encode_piece(std::string_view piece, std::vector<std::uint32_t>& out) const {
    const auto symbols = base_symbols(piece, pretokenizer_);
    const std::size_t n = symbols.size();
    std::vector<std::uint32_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = vocab_->id_of(symbols[i]);
        if (!id) throw RuntimeError("symbol not in vocabulary: '" + escape_token(symbols[i]) + "'");
        ids[i] = *id;
    }
    if (n < 2 || ranks_.empty()) {
        out.insert(out.end(), ids.begin(), ids.end());
        return;
    }
    // Doubly linked list over positions; a merged node keeps the left index.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> prev(n), next(n);
    std::vector<bool> alive(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        prev[i] = i == 0 ? kNone : i - 1;
        next[i] = i + 1 == n ? kNone : i + 1;
    }
    struct Candidate {
        std::uint32_t rank;
        std::size_t pos;
        std::uint32_t left;
        std::uint32_t right;
        bool operator>(const Candidate& o) const { return rank != o.rank ? rank > o.rank : pos > o.pos; }
    };
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
    std::uint32_t current = 0;
    bool started = false;
    const auto consider = [&](std::size_t i) {
        if (i == kNone || next[i] == kNone) return;
        const auto it = ranks_.find(pair_key(ids[i], ids[next[i]]));
        if (it == ranks_.end()) return;
        if (started && it->second.first <= current) return;
        heap.push({it->second.first, i, ids[i], ids[next[i]]});
    };
    for (std::size_t i = 0; i + 1 < n; ++i) consider(i);
    while (!heap.empty()) {
        const auto c = heap.top();
        heap.pop();
        const std::size_t j = next[c.pos];
        if (!alive[c.pos] || j == kNone || ids[c.pos] != c.left || ids[j] != c.right) continue;
        current = c.rank;
        started = true;
        ids[c.pos] = ranks_.at(pair_key(c.left, c.right)).second;
        alive[j] = false;
        next[c.pos] = next[j];
        if (next[j] != kNone) prev[next[j]] = c.pos;
        consider(prev[c.pos]);
        consider(c.pos);
    }
    for (std::size_t i = 0; i != kNone; i = next[i]) out.push_back(ids[i]);
}

std::vector<std::uint32_t> BpeEncoder::encode(std::string_view text) const {
    std::vector<std::uint32_t> out;
    for (auto piece : pretokenize(text, pretokenizer_)) encode_piece(piece, out);
    return out;
}

std::string BpeEncoder::decode(std::span<const std::uint32_t> ids) const {
    std::string out;
    for (auto id : ids) out += vocab_->token(id);
    return out;
}

}  // namespace dwc
