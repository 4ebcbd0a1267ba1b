#include "dwc/annotate.hpp"

#include <algorithm>
#include <map>

#include "dwc/builtin.hpp"
#include "dwc/error.hpp"
#include "dwc/io.hpp"

namespace dwc {

// ---------------------------------------------------------------------------
// Taxonomy

Taxonomy Taxonomy::from_json(const Json& j) {
    Taxonomy t;
    try {
        t.name_ = j.value("name", std::string("unnamed"));
        const auto& entries = j.at("entries");
        if (!entries.is_array()) throw ConfigError("taxonomy: entries must be a list");
        for (const auto& e : entries) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !(e[1].is_string() || e[1].is_null())) {
                throw ConfigError("taxonomy: each entry must be [primary, secondary|null]");
            }
            Entry entry{e[0].get<std::string>(), std::nullopt};
            if (e[1].is_string()) entry.second = e[1].get<std::string>();
            if (entry.first.empty() || (entry.second && entry.second->empty())) {
                throw ConfigError("taxonomy: empty category name");
            }
            if (!t.index_.insert(entry).second) {
                throw ConfigError("taxonomy: duplicate entry " + entry.first + (entry.second ? "/" + *entry.second : ""));
            }
            t.entries_.push_back(std::move(entry));
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("taxonomy: ") + e.what());
    }
    for (const auto& [p, s] : t.entries_) {
        if (s && !t.index_.count({p, std::nullopt})) {
            throw ConfigError("taxonomy: secondary " + p + "/" + *s + " has no standalone primary entry");
        }
    }
    return t;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) { return from_json(io::read_json(path)); }

const Taxonomy& Taxonomy::builtin() {
    static const Taxonomy t = from_json(Json::parse(builtin::taxonomy()));
    return t;
}

bool Taxonomy::contains(const std::string& primary, const std::optional<std::string>& secondary) const {
    return index_.count({primary, secondary}) != 0;
}

std::size_t Taxonomy::primary_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [](const Entry& e) { return !e.second; }));
}

std::size_t Taxonomy::secondary_count() const { return entries_.size() - primary_count(); }

Json Taxonomy::stats() const {
    std::map<std::string, std::size_t> per_primary;
    for (const auto& [p, s] : entries_) {
        if (!s) per_primary.emplace(p, 0);
    }
    for (const auto& [p, s] : entries_) {
        if (s) ++per_primary[p];
    }
    std::size_t lo = per_primary.empty() ? 0 : SIZE_MAX;
    std::size_t hi = 0;
    for (const auto& [p, n] : per_primary) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    const double mean = per_primary.empty() ? 0.0
                                            : static_cast<double>(secondary_count()) /
                                                  static_cast<double>(per_primary.size());
    return Json{{"name", name_},
                {"primaries", primary_count()},
                {"secondaries", secondary_count()},
                {"min_secondaries_per_primary", lo},
                {"max_secondaries_per_primary", hi},
                {"mean_secondaries_per_primary", mean}};
}

Json Taxonomy::to_json() const {
    Json entries = Json::array();
    for (const auto& [p, s] : entries_) entries.push_back(Json::array({p, s ? Json(*s) : Json(nullptr)}));
    return Json{{"name", name_}, {"entries", entries}};
}

std::vector<std::string> validate_context(const ContextRecord& ctx, const Taxonomy& taxonomy) {
    auto out = context_structure_violations(ctx);
    if (ctx.category_primary && !taxonomy.contains(*ctx.category_primary, ctx.category_secondary)) {
        if (ctx.category_secondary) {
            out.push_back("unknown category pair " + *ctx.category_primary + "/" + *ctx.category_secondary);
        } else {
            out.push_back("unknown primary category " + *ctx.category_primary);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preamble

namespace {

enum Key : std::size_t {
    kTime,
    kLocation,
    kAuthor,
    kSource,
    kAuthority,
    kPopularity,
    kDialogue,
    kAudience,
    kSentiment,
    kDifficulty,
    kRequiresCot,
    kRisk,
    kRiskCategories,
    kSourceBiasNote,
};

void header(std::string& out, Key k, std::string_view value) {
    out += kHeaderKeys[k];
    out += ": ";
    out += value;
    out += '\n';
}

std::string join_categories(const std::set<RiskCategory>& cats) {
    // Sorted by name, not by enum order.
    std::vector<std::string_view> names;
    for (auto c : cats) names.push_back(to_string(c));
    std::sort(names.begin(), names.end());
    std::string out;
    for (auto n : names) {
        if (!out.empty()) out += ',';
        out += n;
    }
    return out;
}

}  // namespace

std::string serialize_context(const ContextRecord& ctx) {
    if (auto v = context_structure_violations(ctx); !v.empty()) throw ValidationError(std::move(v));
    std::string out;
    if (ctx.category_primary) {
        out += "[" + *ctx.category_primary + "]";
        if (ctx.category_secondary) out += "[" + *ctx.category_secondary + "]";
        out += '\n';
    }
    if (ctx.time) header(out, kTime, *ctx.time);
    if (ctx.location) header(out, kLocation, *ctx.location);
    if (ctx.author) header(out, kAuthor, *ctx.author);
    if (ctx.source) {
        header(out, kSource, ctx.source->site_or_venue);
        if (ctx.source->authority != Rating::unknown) header(out, kAuthority, to_string(ctx.source->authority));
        if (ctx.source->popularity != Rating::unknown) header(out, kPopularity, to_string(ctx.source->popularity));
    }
    if (ctx.dialogue_type != DialogueType::none) header(out, kDialogue, to_string(ctx.dialogue_type));
    if (ctx.audience_level != AudienceLevel::unknown) header(out, kAudience, to_string(ctx.audience_level));
    if (ctx.sentiment_level != Sentiment::unknown) header(out, kSentiment, to_string(ctx.sentiment_level));
    if (ctx.difficulty.level != Difficulty::unknown) header(out, kDifficulty, to_string(ctx.difficulty.level));
    if (ctx.difficulty.requires_cot) header(out, kRequiresCot, "true");
    if (ctx.safety.risk_flag) header(out, kRisk, "true");
    if (!ctx.safety.risk_categories.empty()) header(out, kRiskCategories, join_categories(ctx.safety.risk_categories));
    if (ctx.safety.source_bias_note) header(out, kSourceBiasNote, *ctx.safety.source_bias_note);
    if (!out.empty()) out += '\n';
    return out;
}

namespace {

class PreambleParser {
public:
    explicit PreambleParser(std::string_view text) : text_(text) {}

    ContextRecord parse() {
        ContextRecord ctx;
        if (text_.empty()) return ctx;
        if (text_.front() == '\n') fail("blank line without any tag or header");
        if (text_.front() == '[') parse_tags(ctx);
        std::optional<std::size_t> last_key;
        while (pos_ < text_.size() && text_[pos_] != '\n') parse_header(ctx, last_key);
        if (pos_ >= text_.size()) fail("missing blank line after preamble");
        next_line();
        if (pos_ < text_.size()) fail("unexpected content after blank line");
        return ctx;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError("preamble: " + what, line_, column()); }

    std::size_t column() const { return pos_ - line_start_ + 1; }

    void next_line() {
        ++pos_;
        ++line_;
        line_start_ = pos_;
    }

    void parse_tags(ContextRecord& ctx) {
        std::size_t tags = 0;
        while (pos_ < text_.size() && text_[pos_] == '[') {
            if (tags == 2) fail("more than two category tags");
            const std::size_t start = pos_ + 1;
            const std::size_t close = text_.find_first_of("[]\n", start);
            if (close == std::string_view::npos || text_[close] != ']') {
                pos_ = close == std::string_view::npos ? text_.size() : close;
                fail("unterminated category tag");
            }
            if (close == start) fail("empty category tag");
            std::string cat(text_.substr(start, close - start));
            (tags == 0 ? ctx.category_primary : ctx.category_secondary) = std::move(cat);
            ++tags;
            pos_ = close + 1;
        }
        if (pos_ >= text_.size() || text_[pos_] != '\n') fail("expected end of line after category tags");
        next_line();
    }

    void parse_header(ContextRecord& ctx, std::optional<std::size_t>& last_key) {
        const std::size_t eol = text_.find('\n', pos_);
        if (eol == std::string_view::npos) fail("unterminated header line");
        const auto line = text_.substr(pos_, eol - pos_);
        const auto sep = line.find(": ");
        if (sep == std::string_view::npos) fail("expected 'key: value'");
        const auto key = line.substr(0, sep);
        const auto it = std::find(kHeaderKeys.begin(), kHeaderKeys.end(), key);
        if (it == kHeaderKeys.end()) fail("unknown header key '" + std::string(key) + "'");
        const auto k = static_cast<std::size_t>(it - kHeaderKeys.begin());
        if (last_key && k <= *last_key) fail("header key '" + std::string(key) + "' duplicated or out of order");
        last_key = k;
        const auto value = line.substr(sep + 2);
        pos_ += sep + 2;
        if (value.empty()) fail("empty value");
        assign(ctx, static_cast<Key>(k), value);
        pos_ = eol;
        next_line();
    }

    template <typename E>
    E enum_value(std::string_view value, const char* what) {
        auto parsed = parse_enum<E>(value);
        if (!parsed) fail(std::string("invalid ") + what + " '" + std::string(value) + "'");
        return *parsed;
    }

    void require_true(std::string_view value) {
        if (value != "true") fail("expected 'true'");
    }

    SourceInfo& source(ContextRecord& ctx) {
        if (!ctx.source) fail("authority or popularity without source");
        return *ctx.source;
    }

    void assign(ContextRecord& ctx, Key k, std::string_view value) {
        switch (k) {
            case kTime: ctx.time = std::string(value); break;
            case kLocation: ctx.location = std::string(value); break;
            case kAuthor: ctx.author = std::string(value); break;
            case kSource: ctx.source = SourceInfo{std::string(value), Rating::unknown, Rating::unknown}; break;
            case kAuthority: {
                auto r = enum_value<Rating>(value, "authority");
                if (r == Rating::unknown) fail("unknown is never serialized");
                source(ctx).authority = r;
                break;
            }
            case kPopularity: {
                auto r = enum_value<Rating>(value, "popularity");
                if (r == Rating::unknown) fail("unknown is never serialized");
                source(ctx).popularity = r;
                break;
            }
            case kDialogue:
                ctx.dialogue_type = enum_value<DialogueType>(value, "dialogue");
                if (ctx.dialogue_type == DialogueType::none) fail("none is never serialized");
                break;
            case kAudience:
                ctx.audience_level = enum_value<AudienceLevel>(value, "audience");
                if (ctx.audience_level == AudienceLevel::unknown) fail("unknown is never serialized");
                break;
            case kSentiment:
                ctx.sentiment_level = enum_value<Sentiment>(value, "sentiment");
                if (ctx.sentiment_level == Sentiment::unknown) fail("unknown is never serialized");
                break;
            case kDifficulty:
                ctx.difficulty.level = enum_value<Difficulty>(value, "difficulty");
                if (ctx.difficulty.level == Difficulty::unknown) fail("unknown is never serialized");
                break;
            case kRequiresCot:
                require_true(value);
                ctx.difficulty.requires_cot = true;
                break;
            case kRisk:
                require_true(value);
                ctx.safety.risk_flag = true;
                break;
            case kRiskCategories: parse_categories(ctx, value); break;
            case kSourceBiasNote: ctx.safety.source_bias_note = std::string(value); break;
        }
    }

    void parse_categories(ContextRecord& ctx, std::string_view value) {
        std::string_view prev;
        while (true) {
            const auto comma = value.find(',');
            const auto name = value.substr(0, comma);
            auto cat = parse_enum<RiskCategory>(name);
            if (!cat) fail("invalid risk category '" + std::string(name) + "'");
            if (!prev.empty() && !(prev < name)) fail("risk categories must be sorted and distinct");
            ctx.safety.risk_categories.insert(*cat);
            prev = name;
            if (comma == std::string_view::npos) break;
            pos_ += comma + 1;
            value.remove_prefix(comma + 1);
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t line_start_ = 0;
};

}  // namespace

ContextRecord parse_context(std::string_view preamble) { return PreambleParser(preamble).parse(); }

std::optional<DwcMode> parse_dwc_mode(std::string_view s) {
    if (s == "preamble") return DwcMode::preamble;
    if (s == "none") return DwcMode::none;
    return std::nullopt;
}

std::string_view to_string(DwcMode m) { return m == DwcMode::preamble ? "preamble" : "none"; }

std::string compose_training_text(const Document& doc, DwcMode mode) {
    if (mode == DwcMode::none) return doc.text;
    if (!doc.context) throw ValidationError({"document " + doc.id + " has no context for preamble mode"});
    return serialize_context(*doc.context) + doc.text;
}

SplitText split_training_text(std::string_view text) {
    const auto blank = text.find("\n\n");
    if (text.empty() || blank == std::string_view::npos || (text.front() == '\n')) return {ContextRecord{}, text};
    const auto end = blank + 2;
    try {
        return {parse_context(text.substr(0, end)), text.substr(end)};
    } catch (const ParseError&) {
        return {ContextRecord{}, text};
    }
}

// ---------------------------------------------------------------------------
// Stage

Json AnnotateStats::to_json() const {
    return Json{{"documents", documents},
                {"with_context", with_context},
                {"invalid", invalid},
                {"primary_categories", primary_categories},
                {"violations", violations}};
}

void annotate_document(Document& doc, const Taxonomy& taxonomy, AnnotateStats& stats) {
    ++stats.documents;
    if (!doc.context) return;
    ++stats.with_context;
    const auto violations = validate_context(*doc.context, taxonomy);
    if (violations.empty()) {
        if (doc.context->category_primary) ++stats.primary_categories[*doc.context->category_primary];
        return;
    }
    ++stats.invalid;
    std::string detail;
    for (const auto& v : violations) {
        std::string kind = v;
        for (const char* prefix : {"unknown category pair", "unknown primary category"}) {
            if (v.starts_with(prefix)) kind = prefix;
        }
        ++stats.violations[kind];
        if (!detail.empty()) detail += "; ";
        detail += v;
    }
    doc.verdicts.push_back({FilterStage::filter, Decision::drop, "invalid_context", detail});
}

}  // namespace dwc
