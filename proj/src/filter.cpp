#include "dwc/filter.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cmath>

#include "dwc/builtin.hpp"
#include "dwc/clean.hpp"
#include "dwc/error.hpp"
#include "dwc/io.hpp"
#include "dwc/text.hpp"
#include "dwc/utf8.hpp"

namespace dwc {

namespace {

template <typename Fn>
void for_each_entry(std::string_view data, Fn&& fn) {
    while (!data.empty()) {
        const auto nl = data.find('\n');
        auto line = data.substr(0, nl);
        data = nl == std::string_view::npos ? std::string_view{} : data.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        fn(line);
    }
}

std::string category_name(std::size_t i) { return std::string(EnumNames<RiskCategory>::names[i]); }

}  // namespace

// ---------------------------------------------------------------------------
// Lexicons

Lexicons Lexicons::parse(std::string_view stopwords, const std::array<std::string_view, kRiskCategories>& terms) {
    Lexicons lex;
    for_each_entry(stopwords, [&](std::string_view line) {
        for (auto& w : text::words(line, true)) lex.stopwords_.insert(std::move(w));
    });
    for (std::size_t c = 0; c < kRiskCategories; ++c) {
        std::set<std::vector<std::string>> seen;
        for_each_entry(terms[c], [&](std::string_view line) {
            auto tokens = text::words(line, true);
            if (tokens.empty() || !seen.insert(tokens).second) return;
            const auto first = tokens.front();
            lex.by_first_token_[first].push_back({std::move(tokens), c});
            ++lex.term_counts_[c];
        });
    }
    return lex;
}

Lexicons Lexicons::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("lexicons: not a directory: " + dir.string());
    const auto stop = io::read_file(dir / "stopwords.txt");
    std::array<std::string, kRiskCategories> data;
    std::array<std::string_view, kRiskCategories> views;
    for (std::size_t c = 0; c < kRiskCategories; ++c) {
        const auto p = dir / (category_name(c) + ".txt");
        if (std::filesystem::exists(p)) data[c] = io::read_file(p);
        views[c] = data[c];
    }
    return parse(stop, views);
}

const Lexicons& Lexicons::builtin() {
    static const Lexicons lex = [] {
        std::array<std::string_view, kRiskCategories> views;
        for (std::size_t c = 0; c < kRiskCategories; ++c) views[c] = builtin::lexicon(category_name(c));
        return parse(builtin::lexicon("stopwords"), views);
    }();
    return lex;
}

std::array<std::uint64_t, kRiskCategories> Lexicons::count_hits(std::span<const std::string> tokens) const {
    std::array<std::uint64_t, kRiskCategories> hits{};
    if (by_first_token_.empty()) return hits;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = by_first_token_.find(tokens[i]);
        if (it == by_first_token_.end()) continue;
        for (const auto& term : it->second) {
            if (i + term.tokens.size() > tokens.size()) continue;
            if (std::equal(term.tokens.begin(), term.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                ++hits[term.category];
            }
        }
    }
    return hits;
}

std::size_t Lexicons::term_count(RiskCategory c) const { return term_counts_[static_cast<std::size_t>(c)]; }

// ---------------------------------------------------------------------------
// NGramLM

std::string NGramLM::key(std::span<const Id> context) {
    return std::string(reinterpret_cast<const char*>(context.data()), context.size() * sizeof(Id));
}

NGramLM::Id NGramLM::id_of(const std::string& token) const {
    auto it = vocab_.find(token);
    return it == vocab_.end() ? kUnk : it->second;
}

NGramLM NGramLM::train(std::span<const std::vector<std::string>> corpus, int n, double alpha) {
    if (n < 1 || n > 3) throw ConfigError("ngram lm: order must be 1, 2 or 3");
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw ConfigError("ngram lm: alpha must be a non-negative number");
    NGramLM lm;
    lm.n_ = n;
    lm.alpha_ = alpha;
    lm.contexts_.resize(static_cast<std::size_t>(n));
    std::uint64_t total = 0;
    std::vector<Id> history;
    for (const auto& seq : corpus) {
        history.assign(static_cast<std::size_t>(n - 1), kBos);
        for (const auto& tok : seq) {
            auto [it, inserted] = lm.vocab_.emplace(tok, static_cast<Id>(lm.vocab_.size() + 1));
            const Id w = it->second;
            for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
                const std::span<const Id> ctx(history.data() + history.size() - k, k);
                auto& counts = lm.contexts_[k][key(ctx)];
                ++counts.total;
                ++counts.next[w];
            }
            history.push_back(w);
            ++total;
        }
    }
    if (total == 0) throw ConfigError("ngram lm: training corpus has no tokens");
    return lm;
}

NGramLM NGramLM::train_on_texts(std::span<const std::string> texts, int n, double alpha) {
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(texts.size());
    for (const auto& t : texts) corpus.push_back(text::words(t, true));
    return train(corpus, n, alpha);
}

NGramLM NGramLM::uniform(std::span<const std::string> vocab) {
    NGramLM lm;
    lm.n_ = 1;
    lm.alpha_ = 1.0;
    lm.contexts_.resize(1);
    for (const auto& tok : vocab) lm.vocab_.emplace(tok, static_cast<Id>(lm.vocab_.size() + 1));
    lm.contexts_[0][std::string{}];
    return lm;
}

long double NGramLM::log_probability(std::span<const Id> history, Id word) const {
    const long double v = static_cast<long double>(vocab_size());
    const long double a = alpha_;
    for (std::size_t k = static_cast<std::size_t>(n_); k-- > 0;) {
        const auto ctx = history.subspan(history.size() - k, k);
        const auto& table = contexts_[k];
        auto it = table.find(key(ctx));
        const long double total = it == table.end() ? 0.0L : static_cast<long double>(it->second.total);
        const long double denom = total + a * v;
        if (denom <= 0) continue;
        long double count = 0;
        if (it != table.end()) {
            if (auto w = it->second.next.find(word); w != it->second.next.end()) count = static_cast<long double>(w->second);
        }
        const long double num = count + a;
        if (num <= 0 || num / denom < kProbabilityFloor) return std::log(static_cast<long double>(kProbabilityFloor));
        return std::log(num) - std::log(denom);
    }
    return std::log(static_cast<long double>(kProbabilityFloor));
}

double NGramLM::probability(std::span<const std::string> context, const std::string& word) const {
    std::vector<Id> history(static_cast<std::size_t>(n_ - 1), kBos);
    for (const auto& t : context) history.push_back(id_of(t));
    return static_cast<double>(std::exp(log_probability(history, id_of(word))));
}

std::optional<double> NGramLM::perplexity(std::span<const std::string> tokens) const {
    if (tokens.empty()) return std::nullopt;
    std::vector<Id> history(static_cast<std::size_t>(n_ - 1), kBos);
    history.reserve(history.size() + tokens.size());
    long double sum = 0;
    for (const auto& tok : tokens) {
        const Id w = id_of(tok);
        sum += log_probability(history, w);
        history.push_back(w);
    }
    return static_cast<double>(std::exp(-sum / static_cast<long double>(tokens.size())));
}

std::optional<double> NGramLM::perplexity_of_text(std::string_view text) const {
    return perplexity(text::words(text, true));
}

// ---------------------------------------------------------------------------
// Thresholds

bool ClassBounds::accepts(const IndicatorReport& r) const {
    if (!stopword_ratio.contains(r.stopword_ratio)) return false;
    if (!special_symbol_ratio.contains(r.special_symbol_ratio)) return false;
    if (!sensitive_term_count.contains(static_cast<double>(r.sensitive_term_count))) return false;
    if (r.perplexity && !perplexity.contains(*r.perplexity)) return false;
    return true;
}

std::vector<std::string> Thresholds::validate() const {
    std::vector<std::string> v;
    auto check = [&](const char* name, const Bounds& h, const Bounds& m) {
        if (h.min > h.max || m.min > m.max) v.push_back(std::string(name) + ": min above max");
        if (!h.within(m)) v.push_back(std::string(name) + ": high bounds not within medium bounds");
    };
    check("stopword_ratio", high.stopword_ratio, medium.stopword_ratio);
    check("special_symbol_ratio", high.special_symbol_ratio, medium.special_symbol_ratio);
    check("sensitive_term_count", high.sensitive_term_count, medium.sensitive_term_count);
    check("perplexity", high.perplexity, medium.perplexity);
    if (!(audience.child <= audience.teen && audience.teen <= audience.adult)) {
        v.push_back("audience: cut-points must be ordered child <= teen <= adult");
    }
    for (std::size_t c = 0; c < kRiskCategories; ++c) {
        const auto& p = safety[c];
        if (p.flag_threshold && p.drop_threshold && p.flag_threshold > p.drop_threshold) {
            v.push_back("safety." + category_name(c) + ": flag threshold above drop threshold");
        }
    }
    return v;
}

namespace {

Bounds bounds_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("thresholds: " + what + " must be [min, max]");
    Bounds b;
    if (!j[0].is_null()) b.min = j[0].get<double>();
    if (!j[1].is_null()) b.max = j[1].get<double>();
    return b;
}

Json bounds_to_json(const Bounds& b) {
    Json lo = std::isinf(b.min) ? Json(nullptr) : Json(b.min);
    Json hi = std::isinf(b.max) ? Json(nullptr) : Json(b.max);
    return Json::array({lo, hi});
}

ClassBounds class_from_json(const Json& j, const std::string& cls) {
    ClassBounds c;
    if (!j.is_object()) throw ConfigError("thresholds: quality." + cls + " must be an object");
    for (const auto& [k, v] : j.items()) {
        const auto what = "quality." + cls + "." + k;
        if (k == "stopword_ratio") c.stopword_ratio = bounds_from_json(v, what);
        else if (k == "special_symbol_ratio") c.special_symbol_ratio = bounds_from_json(v, what);
        else if (k == "sensitive_term_count") c.sensitive_term_count = bounds_from_json(v, what);
        else if (k == "perplexity") c.perplexity = bounds_from_json(v, what);
        else throw ConfigError("thresholds: unknown indicator '" + what + "'");
    }
    return c;
}

Json class_to_json(const ClassBounds& c) {
    return Json{{"stopword_ratio", bounds_to_json(c.stopword_ratio)},
                {"special_symbol_ratio", bounds_to_json(c.special_symbol_ratio)},
                {"sensitive_term_count", bounds_to_json(c.sensitive_term_count)},
                {"perplexity", bounds_to_json(c.perplexity)}};
}

}  // namespace

Thresholds thresholds_from_json(const Json& j) {
    Thresholds t;
    try {
        if (j.contains("quality")) {
            const auto& q = j.at("quality");
            if (q.contains("high")) t.high = class_from_json(q.at("high"), "high");
            if (q.contains("medium")) t.medium = class_from_json(q.at("medium"), "medium");
        }
        if (j.contains("safety")) {
            for (const auto& [k, v] : j.at("safety").items()) {
                auto cat = parse_enum<RiskCategory>(k);
                if (!cat) throw ConfigError("thresholds: unknown risk category '" + k + "'");
                auto& p = t.safety[static_cast<std::size_t>(*cat)];
                p.flag_threshold = v.value("flag", p.flag_threshold);
                p.drop_threshold = v.value("drop", p.drop_threshold);
            }
        }
        if (j.contains("audience")) {
            const auto& a = j.at("audience");
            t.audience.child = a.value("child", t.audience.child);
            t.audience.teen = a.value("teen", t.audience.teen);
            t.audience.adult = a.value("adult", t.audience.adult);
            t.audience.min_tokens = a.value("min_tokens", t.audience.min_tokens);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("thresholds: ") + e.what());
    }
    if (auto v = t.validate(); !v.empty()) {
        std::string msg = "thresholds:";
        for (const auto& s : v) msg += " " + s + ";";
        throw ConfigError(msg);
    }
    return t;
}

Json to_json(const Thresholds& t) {
    Json safety = Json::object();
    for (std::size_t c = 0; c < kRiskCategories; ++c) {
        safety[category_name(c)] = Json{{"flag", t.safety[c].flag_threshold}, {"drop", t.safety[c].drop_threshold}};
    }
    return Json{{"quality", {{"high", class_to_json(t.high)}, {"medium", class_to_json(t.medium)}}},
                {"safety", safety},
                {"audience",
                 {{"child", t.audience.child},
                  {"teen", t.audience.teen},
                  {"adult", t.audience.adult},
                  {"min_tokens", t.audience.min_tokens}}}};
}

const Thresholds& Thresholds::builtin() {
    static const Thresholds t = thresholds_from_json(Json::parse(builtin::thresholds()));
    return t;
}

Quality classify_quality(const IndicatorReport& report, const Thresholds& thresholds) {
    if (thresholds.high.accepts(report)) return Quality::high;
    if (thresholds.medium.accepts(report)) return Quality::medium;
    return Quality::low;
}

// ---------------------------------------------------------------------------
// Readability

namespace {

struct TextShape {
    std::size_t words = 0;
    std::size_t word_chars = 0;
    std::size_t sentences = 0;
};

TextShape measure(std::string_view text) {
    TextShape s;
    const auto paragraphs = split_paragraphs(text);
    for (const auto& p : paragraphs.units) {
        for (const auto& sentence : split_sentences(p.content).units) {
            const auto ws = text::words(sentence.content);
            if (ws.empty()) continue;
            ++s.sentences;
            s.words += ws.size();
            for (const auto& w : ws) s.word_chars += utf8::length(w);
        }
    }
    return s;
}

AudienceLevel band(double score, const AudienceBands& bands) {
    if (score < bands.child) return AudienceLevel::child;
    if (score < bands.teen) return AudienceLevel::teen;
    if (score < bands.adult) return AudienceLevel::adult;
    return AudienceLevel::expert;
}

}  // namespace

std::optional<double> readability_score(std::string_view text) {
    const auto s = measure(text);
    if (s.words == 0) return std::nullopt;
    const double chars_per_word = static_cast<double>(s.word_chars) / static_cast<double>(s.words);
    const double words_per_sentence = static_cast<double>(s.words) / static_cast<double>(s.sentences);
    return 4.71 * chars_per_word + 0.5 * words_per_sentence - 21.43;
}

AudienceLevel audience_level(std::string_view text, const AudienceBands& bands) {
    const auto s = measure(text);
    if (s.words < bands.min_tokens || s.words == 0) return AudienceLevel::unknown;
    const double score = 4.71 * static_cast<double>(s.word_chars) / static_cast<double>(s.words) +
                         0.5 * static_cast<double>(s.words) / static_cast<double>(s.sentences) - 21.43;
    return band(score, bands);
}

// ---------------------------------------------------------------------------
// Indicators and safety

namespace {

IndicatorReport indicators_from_tokens(std::string_view text, const std::vector<std::string>& tokens,
                                       const std::array<std::uint64_t, kRiskCategories>& hits,
                                       const Lexicons& lexicons, const NGramLM* lm, const Thresholds& thresholds) {
    IndicatorReport r;
    if (!tokens.empty()) {
        std::size_t stop = 0;
        for (const auto& t : tokens) stop += lexicons.is_stopword(t) ? 1 : 0;
        r.stopword_ratio = static_cast<double>(stop) / static_cast<double>(tokens.size());
    }
    std::size_t total = 0;
    std::size_t special = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::next(text, pos);
        ++total;
        if (!text::is_alnum(cp) && !text::is_whitespace(cp)) ++special;
    }
    if (total) r.special_symbol_ratio = static_cast<double>(special) / static_cast<double>(total);
    for (auto h : hits) r.sensitive_term_count += h;
    if (lm) r.perplexity = lm->perplexity(tokens);
    r.quality = tokens.empty() ? Quality::low : classify_quality(r, thresholds);
    r.audience = audience_level(text, thresholds.audience);
    return r;
}

SafetyResult screen_hits(Document& doc, const std::array<std::uint64_t, kRiskCategories>& hits,
                         const Thresholds& thresholds) {
    SafetyResult res;
    res.hits = hits;
    std::optional<std::size_t> first_drop;
    std::optional<std::size_t> first_flag;
    std::string detail;
    for (std::size_t c = 0; c < kRiskCategories; ++c) {
        if (hits[c] == 0) continue;
        if (!detail.empty()) detail += ",";
        detail += category_name(c) + "=" + std::to_string(hits[c]);
        const auto& p = thresholds.safety[c];
        const bool drop = p.drop_threshold && hits[c] >= p.drop_threshold;
        const bool flag = p.flag_threshold && hits[c] >= p.flag_threshold;
        if (drop && !first_drop) first_drop = c;
        if (flag && !first_flag) first_flag = c;
        if (drop || flag) res.categories.insert(static_cast<RiskCategory>(c));
    }
    res.verdict.stage = FilterStage::safety;
    if (first_drop) {
        res.verdict.decision = Decision::drop;
        res.verdict.reason_code = "safety:" + category_name(*first_drop);
    } else if (first_flag) {
        res.verdict.decision = Decision::flag;
        res.verdict.reason_code = "safety:" + category_name(*first_flag);
    } else {
        res.verdict.decision = Decision::keep;
        res.verdict.reason_code = "no_risk";
    }
    if (!detail.empty()) res.verdict.detail = detail;
    if (doc.context && !res.categories.empty()) {
        doc.context->safety.risk_categories.insert(res.categories.begin(), res.categories.end());
        doc.context->safety.risk_flag = true;
    }
    return res;
}

}  // namespace

IndicatorReport compute_indicators(const Document& doc, const Lexicons& lexicons, const NGramLM* lm,
                                   const Thresholds& thresholds) {
    const auto tokens = text::words(doc.text, true);
    return indicators_from_tokens(doc.text, tokens, lexicons.count_hits(tokens), lexicons, lm, thresholds);
}

SafetyResult safety_screen(Document& doc, const Lexicons& lexicons, const Thresholds& thresholds) {
    const auto tokens = text::words(doc.text, true);
    return screen_hits(doc, lexicons.count_hits(tokens), thresholds);
}

// ---------------------------------------------------------------------------
// External scorer

ExternalScorer::ExternalScorer(std::string url, std::chrono::milliseconds timeout) : timeout_(timeout) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
        throw ConfigError("scorer url must start with http://: " + url);
    }
    const auto slash = url.find('/', scheme + 3);
    scheme_host_port_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

std::optional<ExternalScore> ExternalScorer::score(const std::string& id, const std::string& text) const {
    httplib::Client client(scheme_host_port_);
    const auto secs = timeout_.count() / 1000;
    const auto usecs = (timeout_.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const auto body = Json{{"id", id}, {"text", text}}.dump(-1, ' ', false, Json::error_handler_t::replace);
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout) {
            ++timeouts_;
        } else {
            ++failures_;
        }
        return std::nullopt;
    }
    if (res->status != 200) {
        ++failures_;
        return std::nullopt;
    }
    try {
        const auto j = Json::parse(res->body);
        ExternalScore out;
        if (j.contains("quality")) {
            out.quality = parse_enum<Quality>(j.at("quality").get<std::string>());
            if (!out.quality) throw std::invalid_argument("quality");
        }
        if (j.contains("audience")) {
            out.audience = parse_enum<AudienceLevel>(j.at("audience").get<std::string>());
            if (!out.audience) throw std::invalid_argument("audience");
        }
        if (j.contains("safety_categories")) {
            for (const auto& c : j.at("safety_categories")) {
                auto cat = parse_enum<RiskCategory>(c.get<std::string>());
                if (!cat) throw std::invalid_argument("safety_categories");
                out.safety_categories.insert(*cat);
            }
        }
        return out;
    } catch (const std::exception&) {
        ++failures_;
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Filter stage

void FilterStats::add(const Document& doc, bool used, bool failed) {
    ++documents;
    if (doc.indicators) {
        ++quality[std::string(to_string(doc.indicators->quality))];
        ++audience[std::string(to_string(doc.indicators->audience))];
    }
    for (const auto& v : doc.verdicts) {
        if (v.stage == FilterStage::filter && v.decision == Decision::drop) ++dropped_low_quality;
        if (v.stage == FilterStage::safety && v.decision == Decision::drop) ++dropped_safety;
        if (v.stage == FilterStage::safety && v.decision == Decision::flag) ++flagged;
        if (v.stage == FilterStage::safety && v.decision != Decision::keep) {
            ++risk_categories[v.reason_code.substr(v.reason_code.find(':') + 1)];
        }
    }
    scorer_used += used ? 1 : 0;
    scorer_fallbacks += failed ? 1 : 0;
}

Json FilterStats::to_json() const {
    return Json{{"documents", documents},
                {"quality", quality},
                {"audience", audience},
                {"risk_categories", risk_categories},
                {"dropped_low_quality", dropped_low_quality},
                {"dropped_safety", dropped_safety},
                {"flagged", flagged},
                {"scorer_used", scorer_used},
                {"scorer_fallbacks", scorer_fallbacks}};
}

DocumentFilter::DocumentFilter(const Lexicons& lexicons, const Thresholds& thresholds, const NGramLM* lm,
                               const ExternalScorer* scorer, FilterOptions options)
    : lexicons_(lexicons), thresholds_(thresholds), lm_(lm), scorer_(scorer), options_(options) {}

DocumentFilter::Outcome DocumentFilter::apply(Document& doc) const {
    Outcome outcome;
    const auto tokens = text::words(doc.text, true);
    const auto hits = lexicons_.count_hits(tokens);
    auto report = indicators_from_tokens(doc.text, tokens, hits, lexicons_, lm_, thresholds_);
    auto safety = screen_hits(doc, hits, thresholds_);
    if (scorer_) {
        if (auto ext = scorer_->score(doc.id, doc.text)) {
            outcome.scorer_used = true;
            if (ext->quality) report.quality = *ext->quality;
            if (ext->audience) report.audience = *ext->audience;
            if (!ext->safety_categories.empty()) {
                if (safety.verdict.decision == Decision::keep) {
                    safety.verdict.decision = Decision::flag;
                    safety.verdict.reason_code = "safety:" + std::string(to_string(*ext->safety_categories.begin()));
                    safety.verdict.detail = "external scorer";
                }
                if (doc.context) {
                    doc.context->safety.risk_categories.insert(ext->safety_categories.begin(),
                                                               ext->safety_categories.end());
                    doc.context->safety.risk_flag = true;
                }
            }
        } else {
            outcome.scorer_failed = true;
        }
    }
    if (doc.context && doc.context->audience_level == AudienceLevel::unknown) {
        doc.context->audience_level = report.audience;
    }
    const bool low = report.quality == Quality::low;
    doc.indicators = report;
    if (low && options_.drop_low_quality) {
        doc.verdicts.push_back({FilterStage::filter, Decision::drop, "low_quality", std::nullopt});
    }
    if (safety.verdict.decision != Decision::keep) doc.verdicts.push_back(std::move(safety.verdict));
    return outcome;
}

}  // namespace dwc
