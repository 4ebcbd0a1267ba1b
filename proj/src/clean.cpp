#include "dwc/clean.hpp"

#include <boost/regex.hpp>

#include <charconv>

#include "dwc/builtin.hpp"
#include "dwc/error.hpp"
#include "dwc/io.hpp"
#include "dwc/text.hpp"
#include "dwc/utf8.hpp"

namespace dwc {

CleanOptions clean_options_from_json(const Json& j) {
    CleanOptions o;
    o.normalize_whitespace = j.value("normalize_whitespace", o.normalize_whitespace);
    o.strip_emoji = j.value("strip_emoji", o.strip_emoji);
    o.strip_garbled = j.value("strip_garbled", o.strip_garbled);
    o.fold_width = j.value("fold_width", o.fold_width);
    const auto fc = j.value("fold_case", std::string("off"));
    if (fc == "off") o.fold_case = CaseFold::off;
    else if (fc == "lower") o.fold_case = CaseFold::lower;
    else throw ConfigError("unknown fold_case '" + fc + "'");
    const auto zh = j.value("zh_fold", std::string("off"));
    if (zh == "off") o.zh_fold = ZhFold::off;
    else if (zh == "to_simplified") o.zh_fold = ZhFold::to_simplified;
    else if (zh == "to_traditional") o.zh_fold = ZhFold::to_traditional;
    else throw ConfigError("unknown zh_fold '" + zh + "'");
    return o;
}

Json to_json(const CleanOptions& o) {
    static constexpr const char* kZh[] = {"off", "to_simplified", "to_traditional"};
    return Json{{"normalize_whitespace", o.normalize_whitespace},
                {"strip_emoji", o.strip_emoji},
                {"strip_garbled", o.strip_garbled},
                {"fold_width", o.fold_width},
                {"fold_case", o.fold_case == CaseFold::lower ? "lower" : "off"},
                {"zh_fold", kZh[static_cast<int>(o.zh_fold)]}};
}

CleanCounts& CleanCounts::operator+=(const CleanCounts& o) {
    whitespace += o.whitespace;
    emoji += o.emoji;
    garbled += o.garbled;
    width += o.width;
    case_folded += o.case_folded;
    zh += o.zh;
    return *this;
}

Json CleanCounts::to_json() const {
    return Json{{"whitespace", whitespace}, {"emoji", emoji},         {"garbled", garbled},
                {"width", width},           {"case", case_folded},    {"zh", zh}};
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

char32_t parse_hex(std::string_view s, std::size_t line) {
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, 16);
    if (ec != std::errc{} || ptr != s.data() + s.size() || value > 0x10FFFF) {
        throw ConfigError("emoji ranges: bad code point '" + std::string(s) + "' on line " + std::to_string(line));
    }
    return static_cast<char32_t>(value);
}

template <typename Fn>
void for_each_line(std::string_view data, Fn&& fn) {
    std::size_t line_no = 0;
    while (!data.empty()) {
        const auto nl = data.find('\n');
        auto line = data.substr(0, nl);
        data = nl == std::string_view::npos ? std::string_view{} : data.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        fn(line, line_no);
    }
}

bool is_garbled(char32_t cp) {
    if (cp == U'\n' || cp == U'\t') return false;
    return cp < 0x20 || (cp >= 0x7F && cp <= 0x9F) || cp == 0xFFFD || cp == 0xFFFE || cp == 0xFFFF;
}

bool is_newline(char32_t cp) { return cp == U'\n' || cp == 0x85 || cp == 0x2028 || cp == 0x2029; }

// Runs of horizontal whitespace become one space; runs of three or more
// newlines become two. "\r\n" and lone "\r" count as newlines.
std::string normalize_whitespace(std::string_view s, std::uint64_t& changes) {
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t start = pos;
        char32_t cp = utf8::next(s, pos);
        if (!text::is_whitespace(cp)) {
            out.append(s.substr(start, pos - start));
            continue;
        }
        const bool vertical = is_newline(cp) || cp == U'\r';
        std::size_t end = pos;
        std::size_t newlines = 0;
        if (vertical) {
            // A vertical run: newline-ish characters only.
            std::size_t p = start;
            while (p < s.size()) {
                std::size_t q = p;
                const char32_t c = utf8::next(s, q);
                if (c == U'\r') {
                    if (q < s.size() && s[q] == '\n') ++q;
                } else if (!is_newline(c)) {
                    break;
                }
                ++newlines;
                p = q;
                end = q;
            }
            const std::size_t emit = newlines >= 3 ? 2 : newlines;
            const std::string replacement(emit, '\n');
            if (s.substr(start, end - start) != replacement) ++changes;
            out += replacement;
        } else {
            std::size_t p = start;
            while (p < s.size()) {
                std::size_t q = p;
                const char32_t c = utf8::next(s, q);
                if (!text::is_whitespace(c) || is_newline(c) || c == U'\r') break;
                p = q;
                end = q;
            }
            if (s.substr(start, end - start) != " ") ++changes;
            out.push_back(' ');
        }
        pos = end;
    }
    return out;
}

}  // namespace

CleanTables CleanTables::parse(std::string_view emoji_ranges, std::string_view zh_variants) {
    CleanTables t;
    for_each_line(emoji_ranges, [&](std::string_view line, std::size_t n) {
        const auto dash = line.find('-');
        const char32_t lo = parse_hex(trim(line.substr(0, dash)), n);
        const char32_t hi = dash == std::string_view::npos ? lo : parse_hex(trim(line.substr(dash + 1)), n);
        if (hi < lo) throw ConfigError("emoji ranges: inverted range on line " + std::to_string(n));
        t.emoji_.emplace_back(lo, hi);
    });
    std::sort(t.emoji_.begin(), t.emoji_.end());
    for_each_line(zh_variants, [&](std::string_view line, std::size_t n) {
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) throw ConfigError("zh variants: missing tab on line " + std::to_string(n));
        const auto trad = utf8::decode(trim(line.substr(0, tab)));
        const auto simp = utf8::decode(trim(line.substr(tab + 1)));
        if (trad.size() != 1 || simp.size() != 1) {
            throw ConfigError("zh variants: expected one character per side on line " + std::to_string(n));
        }
        t.to_simplified_.emplace(trad[0], simp[0]);
        t.to_traditional_.emplace(simp[0], trad[0]);
    });
    if (t.to_simplified_.size() != t.to_traditional_.size()) {
        throw ConfigError("zh variants: table is not one-to-one");
    }
    // Folding must be idempotent: no target may itself be a source.
    for (const auto& [from, to] : t.to_simplified_) {
        if (t.to_simplified_.count(to)) throw ConfigError("zh variants: chained mapping");
    }
    return t;
}

CleanTables CleanTables::load(const std::filesystem::path& emoji_ranges, const std::filesystem::path& zh_variants) {
    return parse(io::read_file(emoji_ranges), io::read_file(zh_variants));
}

const CleanTables& CleanTables::builtin() {
    static const CleanTables tables = parse(builtin::emoji_ranges(), builtin::zh_variants());
    return tables;
}

bool CleanTables::is_emoji(char32_t cp) const noexcept {
    auto it = std::upper_bound(emoji_.begin(), emoji_.end(), std::pair<char32_t, char32_t>{cp, 0x10FFFF});
    if (it == emoji_.begin()) return false;
    --it;
    return cp >= it->first && cp <= it->second;
}

std::optional<char32_t> CleanTables::to_simplified(char32_t cp) const {
    auto it = to_simplified_.find(cp);
    if (it == to_simplified_.end()) return std::nullopt;
    return it->second;
}

std::optional<char32_t> CleanTables::to_traditional(char32_t cp) const {
    auto it = to_traditional_.find(cp);
    if (it == to_traditional_.end()) return std::nullopt;
    return it->second;
}

GeneralCleanResult clean_general(std::string_view text, const CleanOptions& opts, const CleanTables& tables) {
    GeneralCleanResult result;
    auto& counts = result.counts;
    std::string out;
    out.reserve(text.size());
    bool after_emoji = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp = utf8::next(text, pos);
        if (opts.strip_garbled && is_garbled(cp)) {
            ++counts.garbled;
            continue;
        }
        if (opts.strip_emoji) {
            const bool modifier = cp == 0xFE0F || cp == 0x20E3 || (cp == 0x200D && after_emoji);
            if (modifier || tables.is_emoji(cp)) {
                ++counts.emoji;
                after_emoji = true;
                continue;
            }
            after_emoji = false;
        }
        if (opts.fold_width) {
            if (cp >= 0xFF01 && cp <= 0xFF5E) {
                cp -= 0xFEE0;
                ++counts.width;
            } else if (cp == 0x3000) {
                cp = U' ';
                ++counts.width;
            }
        }
        if (opts.fold_case == CaseFold::lower) {
            const char32_t lower = text::to_lower(cp);
            if (lower != cp) {
                cp = lower;
                ++counts.case_folded;
            }
        }
        if (opts.zh_fold != ZhFold::off) {
            auto mapped = opts.zh_fold == ZhFold::to_simplified ? tables.to_simplified(cp) : tables.to_traditional(cp);
            if (mapped) {
                cp = *mapped;
                ++counts.zh;
            }
        }
        utf8::append(out, cp);
    }
    if (opts.normalize_whitespace) {
        result.text = normalize_whitespace(out, counts.whitespace);
    } else {
        result.text = std::move(out);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Specialized rules

namespace {

Granularity parse_granularity(const std::string& s) {
    if (s == "document") return Granularity::document;
    if (s == "paragraph") return Granularity::paragraph;
    if (s == "sentence") return Granularity::sentence;
    throw ConfigError("unknown granularity '" + s + "'");
}

const char* granularity_name(Granularity g) {
    switch (g) {
        case Granularity::document: return "document";
        case Granularity::paragraph: return "paragraph";
        case Granularity::sentence: return "sentence";
    }
    return "?";
}

Predicate::Kind parse_kind(const std::string& s) {
    if (s == "literal") return Predicate::Kind::literal;
    if (s == "prefix") return Predicate::Kind::prefix;
    if (s == "regex") return Predicate::Kind::regex;
    if (s == "length") return Predicate::Kind::length;
    throw ConfigError("unknown predicate kind '" + s + "'");
}

const char* kind_name(Predicate::Kind k) {
    switch (k) {
        case Predicate::Kind::literal: return "literal";
        case Predicate::Kind::prefix: return "prefix";
        case Predicate::Kind::regex: return "regex";
        case Predicate::Kind::length: return "length";
    }
    return "?";
}

bool is_ws_run_char(std::string_view s, std::size_t pos, std::size_t& next) {
    next = pos;
    return text::is_whitespace(utf8::next(s, next));
}

// Split `text` at whitespace runs for which `is_boundary(run)` holds. The
// leading run becomes the prefix and the trailing run the last separator.
template <typename Boundary>
Segmented split_at_whitespace(std::string_view text, Boundary&& is_boundary) {
    Segmented seg;
    std::size_t pos = 0;
    std::size_t next = 0;
    while (pos < text.size() && is_ws_run_char(text, pos, next)) pos = next;
    seg.prefix.assign(text.substr(0, pos));
    std::string content;
    while (pos < text.size()) {
        std::size_t run_start = pos;
        if (!is_ws_run_char(text, pos, next)) {
            // Non-whitespace span.
            while (pos < text.size() && !is_ws_run_char(text, pos, next)) pos = next;
            content.append(text.substr(run_start, pos - run_start));
            continue;
        }
        while (pos < text.size() && is_ws_run_char(text, pos, next)) pos = next;
        const auto run = text.substr(run_start, pos - run_start);
        if (pos >= text.size() || is_boundary(content, run)) {
            seg.units.push_back({std::move(content), std::string(run)});
            content.clear();
        } else {
            content.append(run);
        }
    }
    if (!content.empty()) seg.units.push_back({std::move(content), {}});
    return seg;
}

// The last code point of `content`, if any.
char32_t last_cp(std::string_view content) {
    if (content.empty()) return 0;
    std::size_t start = content.size() - 1;
    while (start > 0 && (static_cast<unsigned char>(content[start]) & 0xC0) == 0x80) --start;
    std::size_t p = start;
    return utf8::next(content, p);
}

bool is_fullwidth_terminal(char32_t cp) { return cp == 0x3002 || cp == 0xFF01 || cp == 0xFF1F; }

}  // namespace

std::string Segmented::join(const std::vector<bool>& keep) const {
    std::size_t last = units.size();
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (keep[i]) last = i;
    }
    if (last == units.size()) return {};
    std::string out = prefix;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!keep[i]) continue;
        out += units[i].content;
        out += i == last ? units.back().separator : units[i].separator;
    }
    return out;
}

Segmented split_paragraphs(std::string_view text) {
    return split_at_whitespace(text, [](std::string_view, std::string_view run) {
        return std::count(run.begin(), run.end(), '\n') >= 2;
    });
}

Segmented split_sentences(std::string_view text) {
    // Whitespace after an ASCII terminal ends a sentence.
    auto seg = split_at_whitespace(text, [](std::string_view content, std::string_view) {
        const char32_t cp = last_cp(content);
        return cp == U'.' || cp == U'!' || cp == U'?' || is_fullwidth_terminal(cp);
    });
    // Full-width terminals also end a sentence with no whitespace after them.
    Segmented out;
    out.prefix = std::move(seg.prefix);
    for (auto& unit : seg.units) {
        std::string_view c = unit.content;
        std::size_t start = 0;
        std::size_t pos = 0;
        while (pos < c.size()) {
            const char32_t cp = utf8::next(c, pos);
            if (!is_fullwidth_terminal(cp)) continue;
            // Absorb a run of terminals ("！？").
            std::size_t run_end = pos;
            while (run_end < c.size()) {
                std::size_t q = run_end;
                const char32_t nxt = utf8::next(c, q);
                if (!text::is_sentence_terminal(nxt)) break;
                run_end = q;
            }
            pos = run_end;
            if (pos < c.size()) {
                out.units.push_back({std::string(c.substr(start, pos - start)), {}});
                start = pos;
            }
        }
        out.units.push_back({std::string(c.substr(start)), std::move(unit.separator)});
    }
    return out;
}

std::vector<CleanRule> clean_rules_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigError("clean rules: expected a JSON list");
    std::vector<CleanRule> rules;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& r = j[i];
        CleanRule rule;
        try {
            rule.name = r.value("name", "rule" + std::to_string(i));
            rule.granularity = parse_granularity(r.value("granularity", std::string("sentence")));
            const auto& p = r.at("predicate");
            rule.predicate.kind = parse_kind(p.at("kind").get<std::string>());
            rule.predicate.pattern = p.value("pattern", std::string{});
            rule.predicate.min_length = p.value("min_length", std::size_t{0});
            rule.predicate.max_length = p.value("max_length", std::numeric_limits<std::size_t>::max());
            const auto& action = r.at("action");
            if (action.is_string() && action.get<std::string>() == "drop_unit") {
                rule.replacement.reset();
            } else if (action.is_object() && action.contains("replace_with")) {
                rule.replacement = action.at("replace_with").get<std::string>();
            } else {
                throw ConfigError("action must be \"drop_unit\" or {\"replace_with\": ...}");
            }
        } catch (const Json::exception& e) {
            throw ConfigError("clean rule " + std::to_string(i) + ": " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError("clean rule " + std::to_string(i) + ": " + e.what());
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

Json to_json(const std::vector<CleanRule>& rules) {
    Json out = Json::array();
    for (const auto& r : rules) {
        Json pred{{"kind", kind_name(r.predicate.kind)}};
        if (r.predicate.kind == Predicate::Kind::length) {
            pred["min_length"] = r.predicate.min_length;
            if (r.predicate.max_length != std::numeric_limits<std::size_t>::max()) {
                pred["max_length"] = r.predicate.max_length;
            }
        } else {
            pred["pattern"] = r.predicate.pattern;
        }
        Json action = r.replacement ? Json{{"replace_with", *r.replacement}} : Json("drop_unit");
        out.push_back(Json{{"name", r.name},
                           {"granularity", granularity_name(r.granularity)},
                           {"predicate", pred},
                           {"action", action}});
    }
    return out;
}

struct CleanRuleSet::Compiled {
    boost::regex regex;
};

CleanRuleSet::CleanRuleSet(std::vector<CleanRule> rules) : rules_(std::move(rules)) {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& r = rules_[i];
        auto compiled = std::make_unique<Compiled>();
        switch (r.predicate.kind) {
            case Predicate::Kind::regex:
                try {
                    compiled->regex = boost::regex(r.predicate.pattern, boost::regex::perl);
                } catch (const boost::regex_error& e) {
                    throw ConfigError("clean rule '" + r.name + "': invalid regex: " + e.what());
                }
                break;
            case Predicate::Kind::literal:
            case Predicate::Kind::prefix:
                if (r.predicate.pattern.empty()) throw ConfigError("clean rule '" + r.name + "': empty pattern");
                break;
            case Predicate::Kind::length:
                if (r.predicate.min_length > r.predicate.max_length) {
                    throw ConfigError("clean rule '" + r.name + "': min_length > max_length");
                }
                break;
        }
        compiled_.push_back(std::move(compiled));
    }
}

CleanRuleSet::CleanRuleSet() = default;
CleanRuleSet::~CleanRuleSet() = default;
CleanRuleSet::CleanRuleSet(CleanRuleSet&&) noexcept = default;
CleanRuleSet& CleanRuleSet::operator=(CleanRuleSet&&) noexcept = default;

bool CleanRuleSet::matches(std::size_t i, std::string_view unit) const {
    const auto& p = rules_[i].predicate;
    switch (p.kind) {
        case Predicate::Kind::literal: return unit.find(p.pattern) != std::string_view::npos;
        case Predicate::Kind::prefix: return unit.starts_with(p.pattern);
        case Predicate::Kind::regex: return boost::regex_search(unit.begin(), unit.end(), compiled_[i]->regex);
        case Predicate::Kind::length: {
            const auto n = utf8::length(unit);
            return n >= p.min_length && n <= p.max_length;
        }
    }
    return false;
}

std::string CleanRuleSet::replace(std::size_t i, std::string_view unit) const {
    const auto& r = rules_[i];
    const auto& with = *r.replacement;
    switch (r.predicate.kind) {
        case Predicate::Kind::literal: {
            std::string out;
            std::size_t from = 0;
            for (auto at = unit.find(r.predicate.pattern); at != std::string_view::npos;
                 at = unit.find(r.predicate.pattern, from)) {
                out.append(unit.substr(from, at - from));
                out += with;
                from = at + r.predicate.pattern.size();
            }
            out.append(unit.substr(from));
            return out;
        }
        case Predicate::Kind::prefix: return with + std::string(unit.substr(r.predicate.pattern.size()));
        case Predicate::Kind::regex: {
            std::string out;
            boost::regex_replace(std::back_inserter(out), unit.begin(), unit.end(), compiled_[i]->regex, with);
            return out;
        }
        case Predicate::Kind::length: return with;
    }
    return std::string(unit);
}

namespace {

std::string excerpt(std::string_view s) { return std::string(utf8::truncate(s, 80)); }

bool is_blank_text(std::string_view s) {
    std::size_t pos = 0;
    while (pos < s.size()) {
        if (!text::is_whitespace(utf8::next(s, pos))) return false;
    }
    return true;
}

// Applies one rule to each unit. Returns false if nothing survives.
bool apply_to_units(Segmented& seg, std::vector<bool>& keep, const CleanRuleSet& rules, std::size_t rule,
                    std::vector<ChangeLogEntry>& log) {
    const auto& r = rules.rules()[rule];
    for (std::size_t i = 0; i < seg.units.size(); ++i) {
        if (!keep[i]) continue;
        auto& unit = seg.units[i];
        if (!rules.matches(rule, unit.content)) continue;
        if (!r.replacement) {
            keep[i] = false;
            log.push_back({r.name, r.granularity, true, excerpt(unit.content)});
            continue;
        }
        auto replaced = rules.replace(rule, unit.content);
        if (replaced == unit.content) continue;
        log.push_back({r.name, r.granularity, is_blank_text(replaced), excerpt(unit.content)});
        if (is_blank_text(replaced)) {
            keep[i] = false;
        } else {
            unit.content = std::move(replaced);
        }
    }
    return std::find(keep.begin(), keep.end(), true) != keep.end();
}

}  // namespace

SpecializedCleanResult clean_specialized(Document doc, const CleanRuleSet& rules) {
    SpecializedCleanResult result;
    bool units_removed = false;
    for (std::size_t ri = 0; ri < rules.rules().size(); ++ri) {
        const auto& rule = rules.rules()[ri];
        if (doc.text.empty()) break;
        switch (rule.granularity) {
            case Granularity::document: {
                if (!rules.matches(ri, doc.text)) break;
                if (!rule.replacement) {
                    doc.verdicts.push_back({FilterStage::clean, Decision::drop, rule.name, "document rule matched"});
                    result.log.push_back({rule.name, rule.granularity, true, excerpt(doc.text)});
                    result.doc = std::move(doc);
                    return result;
                }
                auto replaced = rules.replace(ri, doc.text);
                if (replaced != doc.text) {
                    result.log.push_back({rule.name, rule.granularity, false, excerpt(doc.text)});
                    doc.text = std::move(replaced);
                    if (is_blank_text(doc.text)) {
                        doc.text.clear();
                        units_removed = true;
                    }
                }
                break;
            }
            case Granularity::paragraph: {
                auto seg = split_paragraphs(doc.text);
                std::vector<bool> keep(seg.units.size(), true);
                const auto before = result.log.size();
                apply_to_units(seg, keep, rules, ri, result.log);
                if (result.log.size() != before) {
                    doc.text = seg.join(keep);
                    units_removed = units_removed || doc.text.empty();
                }
                break;
            }
            case Granularity::sentence: {
                auto paragraphs = split_paragraphs(doc.text);
                std::vector<bool> keep_para(paragraphs.units.size(), true);
                bool changed = false;
                for (std::size_t p = 0; p < paragraphs.units.size(); ++p) {
                    auto sentences = split_sentences(paragraphs.units[p].content);
                    std::vector<bool> keep(sentences.units.size(), true);
                    const auto before = result.log.size();
                    apply_to_units(sentences, keep, rules, ri, result.log);
                    if (result.log.size() == before) continue;
                    changed = true;
                    paragraphs.units[p].content = sentences.join(keep);
                    if (is_blank_text(paragraphs.units[p].content)) keep_para[p] = false;
                }
                if (changed) {
                    doc.text = paragraphs.join(keep_para);
                    units_removed = units_removed || doc.text.empty();
                }
                break;
            }
        }
    }
    if (units_removed && doc.text.empty()) {
        doc.verdicts.push_back({FilterStage::clean, Decision::drop, "all_units_removed", std::nullopt});
    }
    result.doc = std::move(doc);
    return result;
}

}  // namespace dwc
