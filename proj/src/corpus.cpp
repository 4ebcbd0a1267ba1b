#include "dwc/corpus.hpp"

#include <algorithm>
#include <unordered_set>

#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/utf8.hpp"

namespace dwc {

namespace {

template <typename E>
E enum_field(const Json& j, const char* key, E fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    const auto name = it->template get<std::string>();
    auto value = parse_enum<E>(name);
    if (!value) throw Error(std::string("unknown value '") + name + "' for field " + key);
    return *value;
}

std::optional<std::string> optional_string(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

void put_optional(Json& j, const char* key, const std::optional<std::string>& v) {
    if (v) j[key] = *v;
}

std::vector<RiskCategory> sorted_by_name(const std::set<RiskCategory>& cats) {
    std::vector<RiskCategory> out(cats.begin(), cats.end());
    std::sort(out.begin(), out.end(), [](RiskCategory a, RiskCategory b) { return to_string(a) < to_string(b); });
    return out;
}

bool has_line_break(const std::string& s) { return s.find_first_of("\r\n") != std::string::npos; }

}  // namespace

std::string make_document_id(std::string_view source_path, std::uint64_t record_index, std::string_view text) {
    std::string key;
    key.reserve(source_path.size() + 300);
    key.append(source_path);
    key.push_back('\0');
    key.append(std::to_string(record_index));
    key.push_back('\0');
    key.append(text.substr(0, std::min<std::size_t>(256, text.size())));
    return sha256_hex(key).substr(0, 32);
}

bool is_iso_date(std::string_view s) {
    auto digits = [&](std::size_t from, std::size_t n) {
        for (std::size_t i = from; i < from + n; ++i) {
            if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
        }
        return true;
    };
    auto number = [&](std::size_t from, std::size_t n) {
        int v = 0;
        for (std::size_t i = from; i < from + n; ++i) v = v * 10 + (s[i] - '0');
        return v;
    };
    if (s.size() != 4 && s.size() != 7 && s.size() != 10) return false;
    if (!digits(0, 4)) return false;
    if (s.size() == 4) return true;
    if (s[4] != '-' || !digits(5, 2)) return false;
    const int month = number(5, 2);
    if (month < 1 || month > 12) return false;
    if (s.size() == 7) return true;
    if (s[7] != '-' || !digits(8, 2)) return false;
    const int year = number(0, 4);
    const int day = number(8, 2);
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    const int max_day = kDays[month - 1] + (month == 2 && leap ? 1 : 0);
    return day >= 1 && day <= max_day;
}

std::vector<std::string> context_structure_violations(const ContextRecord& ctx) {
    std::vector<std::string> out;
    if (ctx.category_secondary && !ctx.category_primary) out.emplace_back("secondary without primary");
    if (ctx.time && !is_iso_date(*ctx.time)) out.emplace_back("invalid date");

    auto check_text = [&](const std::optional<std::string>& v, const char* name) {
        if (!v) return;
        if (v->empty()) out.push_back(std::string("empty ") + name);
        if (has_line_break(*v)) out.push_back(std::string(name) + " contains a line break");
    };
    check_text(ctx.location, "location");
    check_text(ctx.author, "author");
    check_text(ctx.safety.source_bias_note, "source_bias_note");
    for (const auto* cat : {&ctx.category_primary, &ctx.category_secondary}) {
        if (!*cat) continue;
        const char* name = cat == &ctx.category_primary ? "category_primary" : "category_secondary";
        check_text(*cat, name);
        if ((*cat)->find_first_of("[]") != std::string::npos) out.push_back(std::string(name) + " contains a bracket");
    }
    if (ctx.source) {
        if (ctx.source->site_or_venue.empty()) out.emplace_back("empty source site_or_venue");
        if (has_line_break(ctx.source->site_or_venue)) out.emplace_back("source contains a line break");
        if (!is_declared(ctx.source->authority)) out.emplace_back("undeclared authority value");
        if (!is_declared(ctx.source->popularity)) out.emplace_back("undeclared popularity value");
    }
    if (!is_declared(ctx.dialogue_type)) out.emplace_back("undeclared dialogue_type value");
    if (!is_declared(ctx.audience_level)) out.emplace_back("undeclared audience_level value");
    if (!is_declared(ctx.sentiment_level)) out.emplace_back("undeclared sentiment_level value");
    if (!is_declared(ctx.difficulty.level)) out.emplace_back("undeclared difficulty value");
    for (auto c : ctx.safety.risk_categories) {
        if (!is_declared(c)) out.emplace_back("undeclared risk category value");
    }
    return out;
}

std::vector<std::string> validate_document(const Document& doc) {
    std::vector<std::string> out;
    if (doc.id.empty()) out.emplace_back("id empty");
    if (!utf8::is_valid(doc.text)) out.emplace_back("text contains invalid UTF-8");
    if (doc.language && (doc.language->confidence < 0.0 || doc.language->confidence > 1.0)) {
        out.emplace_back("language confidence out of range");
    }
    if (doc.context) {
        auto ctx = context_structure_violations(*doc.context);
        out.insert(out.end(), ctx.begin(), ctx.end());
    }
    if (doc.indicators) {
        const auto& r = *doc.indicators;
        if (!(r.stopword_ratio >= 0.0 && r.stopword_ratio <= 1.0)) out.emplace_back("stopword_ratio out of range");
        if (!(r.special_symbol_ratio >= 0.0 && r.special_symbol_ratio <= 1.0)) {
            out.emplace_back("special_symbol_ratio out of range");
        }
        if (r.perplexity && !(*r.perplexity >= 1.0)) out.emplace_back("perplexity below 1");
    }
    for (const auto& v : doc.verdicts) {
        if (v.decision == Decision::drop && v.reason_code.empty()) out.emplace_back("drop verdict without reason_code");
    }
    return out;
}

std::vector<std::string> duplicate_ids(std::span<const Document> docs) {
    std::unordered_set<std::string_view> seen;
    std::vector<std::string> out;
    for (const auto& d : docs) {
        if (!seen.insert(d.id).second) out.push_back(d.id);
    }
    return out;
}

void to_json(Json& j, const Provenance& p) {
    j = Json{{"source_path", p.source_path}, {"record_index", p.record_index}};
}

void from_json(const Json& j, Provenance& p) {
    p.source_path = j.value("source_path", std::string{});
    p.record_index = j.value("record_index", std::uint64_t{0});
}

void to_json(Json& j, const LanguageTag& t) { j = Json{{"tag", t.tag}, {"confidence", t.confidence}}; }

void from_json(const Json& j, LanguageTag& t) {
    t.tag = j.at("tag").get<std::string>();
    t.confidence = j.value("confidence", 0.0);
}

void to_json(Json& j, const SourceInfo& s) {
    j = Json{{"site_or_venue", s.site_or_venue},
             {"authority", to_string(s.authority)},
             {"popularity", to_string(s.popularity)}};
}

void from_json(const Json& j, SourceInfo& s) {
    s.site_or_venue = j.value("site_or_venue", std::string{});
    s.authority = enum_field(j, "authority", Rating::unknown);
    s.popularity = enum_field(j, "popularity", Rating::unknown);
}

void to_json(Json& j, const ContextRecord& c) {
    j = Json::object();
    put_optional(j, "time", c.time);
    put_optional(j, "location", c.location);
    put_optional(j, "author", c.author);
    put_optional(j, "category_primary", c.category_primary);
    put_optional(j, "category_secondary", c.category_secondary);
    if (c.source) j["source"] = *c.source;
    j["dialogue_type"] = to_string(c.dialogue_type);
    j["audience_level"] = to_string(c.audience_level);
    j["sentiment_level"] = to_string(c.sentiment_level);
    j["difficulty"] = Json{{"level", to_string(c.difficulty.level)}, {"requires_cot", c.difficulty.requires_cot}};
    Json safety{{"risk_flag", c.safety.risk_flag}, {"risk_categories", Json::array()}};
    for (auto cat : sorted_by_name(c.safety.risk_categories)) safety["risk_categories"].push_back(to_string(cat));
    put_optional(safety, "source_bias_note", c.safety.source_bias_note);
    j["safety"] = std::move(safety);
}

void from_json(const Json& j, ContextRecord& c) {
    c = ContextRecord{};
    c.time = optional_string(j, "time");
    c.location = optional_string(j, "location");
    c.author = optional_string(j, "author");
    c.category_primary = optional_string(j, "category_primary");
    c.category_secondary = optional_string(j, "category_secondary");
    if (auto it = j.find("source"); it != j.end() && !it->is_null()) c.source = it->get<SourceInfo>();
    c.dialogue_type = enum_field(j, "dialogue_type", DialogueType::none);
    c.audience_level = enum_field(j, "audience_level", AudienceLevel::unknown);
    c.sentiment_level = enum_field(j, "sentiment_level", Sentiment::unknown);
    if (auto it = j.find("difficulty"); it != j.end() && it->is_object()) {
        c.difficulty.level = enum_field(*it, "level", Difficulty::unknown);
        c.difficulty.requires_cot = it->value("requires_cot", false);
    }
    if (auto it = j.find("safety"); it != j.end() && it->is_object()) {
        c.safety.risk_flag = it->value("risk_flag", false);
        if (auto cats = it->find("risk_categories"); cats != it->end()) {
            for (const auto& name : *cats) {
                auto cat = parse_enum<RiskCategory>(name.get<std::string>());
                if (!cat) throw Error("unknown risk category '" + name.get<std::string>() + "'");
                c.safety.risk_categories.insert(*cat);
            }
        }
        c.safety.source_bias_note = optional_string(*it, "source_bias_note");
    }
}

void to_json(Json& j, const IndicatorReport& r) {
    j = Json{{"stopword_ratio", r.stopword_ratio},
             {"special_symbol_ratio", r.special_symbol_ratio},
             {"sensitive_term_count", r.sensitive_term_count}};
    if (r.perplexity) j["perplexity"] = *r.perplexity;
    j["quality"] = to_string(r.quality);
    j["audience"] = to_string(r.audience);
}

void from_json(const Json& j, IndicatorReport& r) {
    r.stopword_ratio = j.value("stopword_ratio", 0.0);
    r.special_symbol_ratio = j.value("special_symbol_ratio", 0.0);
    r.sensitive_term_count = j.value("sensitive_term_count", std::uint64_t{0});
    if (auto it = j.find("perplexity"); it != j.end() && !it->is_null()) {
        r.perplexity = it->get<double>();
    } else {
        r.perplexity.reset();
    }
    r.quality = enum_field(j, "quality", Quality::low);
    r.audience = enum_field(j, "audience", AudienceLevel::unknown);
}

void to_json(Json& j, const FilterVerdict& v) {
    j = Json{{"stage", to_string(v.stage)}, {"decision", to_string(v.decision)}, {"reason_code", v.reason_code}};
    if (v.detail) j["detail"] = *v.detail;
}

void from_json(const Json& j, FilterVerdict& v) {
    v.stage = enum_field(j, "stage", FilterStage::filter);
    v.decision = enum_field(j, "decision", Decision::keep);
    v.reason_code = j.value("reason_code", std::string{});
    v.detail = optional_string(j, "detail");
}

void to_json(Json& j, const Document& d) {
    j = Json::object();
    j["id"] = d.id;
    j["text"] = d.text;
    if (d.url) j["url"] = *d.url;
    j["provenance"] = d.provenance;
    if (d.language) j["language"] = *d.language;
    if (d.context) j["context"] = *d.context;
    if (d.indicators) j["indicators"] = *d.indicators;
    j["verdicts"] = Json::array();
    for (const auto& v : d.verdicts) j["verdicts"].push_back(v);
}

void from_json(const Json& j, Document& d) {
    d = Document{};
    d.id = j.at("id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    d.url = optional_string(j, "url");
    if (auto it = j.find("provenance"); it != j.end() && it->is_object()) d.provenance = it->get<Provenance>();
    if (auto it = j.find("language"); it != j.end() && !it->is_null()) d.language = it->get<LanguageTag>();
    if (auto it = j.find("context"); it != j.end() && !it->is_null()) d.context = it->get<ContextRecord>();
    if (auto it = j.find("indicators"); it != j.end() && !it->is_null()) d.indicators = it->get<IndicatorReport>();
    if (auto it = j.find("verdicts"); it != j.end()) {
        for (const auto& v : *it) d.verdicts.push_back(v.get<FilterVerdict>());
    }
}

std::string encode_document(const Document& doc) {
    // Replace rather than throw: text is sanitized at ingest, but callers may
    // construct documents by hand.
    return Json(doc).dump(-1, ' ', false, Json::error_handler_t::replace);
}

Document decode_document(std::string_view line) {
    try {
        return Json::parse(line).get<Document>();
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("malformed document: ") + e.what(), 1, e.byte);
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed document: ") + e.what(), 1, 0);
    } catch (const Error& e) {
        throw ParseError(std::string("malformed document: ") + e.what(), 1, 0);
    }
}

}  // namespace dwc
