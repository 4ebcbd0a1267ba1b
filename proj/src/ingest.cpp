#include "dwc/ingest.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "dwc/builtin.hpp"
#include "dwc/error.hpp"
#include "dwc/io.hpp"
#include "dwc/text.hpp"
#include "dwc/utf8.hpp"

namespace dwc {

namespace fs = std::filesystem;

namespace {

using NgramVector = std::unordered_map<std::uint64_t, double>;

double l2_norm(const NgramVector& v) {
    double norm = 0;
    for (const auto& [k, x] : v) norm += x * x;
    return std::sqrt(norm);
}

}  // namespace

std::array<std::unordered_map<std::uint64_t, double>, 3> ngram_counts(std::string_view text) {
    std::vector<char32_t> cps;
    cps.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::next(text, pos);
        if (!text::is_whitespace(cp)) cps.push_back(text::to_lower(cp));
    }
    std::array<NgramVector, 3> counts;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        std::uint64_t key = 0;
        for (std::size_t n = 0; n < 3 && i + n < cps.size(); ++n) {
            key = (key << 21) | cps[i + n];
            counts[n][key] += 1.0;
        }
    }
    return counts;
}

LanguageIdentifier::Profile LanguageIdentifier::build_profile(std::string tag, std::string_view sample) {
    Profile p{std::move(tag), ngram_counts(sample)};
    for (auto& order : p.weights) {
        const double norm = l2_norm(order);
        if (norm > 0) {
            for (auto& [k, v] : order) v /= norm;
        }
    }
    return p;
}

LanguageIdentifier LanguageIdentifier::from_samples(const std::vector<std::pair<std::string, std::string>>& samples) {
    std::vector<Profile> profiles;
    for (const auto& [tag, text] : samples) profiles.push_back(build_profile(tag, text));
    return LanguageIdentifier(std::move(profiles));
}

LanguageIdentifier LanguageIdentifier::from_directory(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> samples;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) samples.emplace_back(f.stem().string(), io::read_file(f));
    if (samples.empty()) throw ConfigError("no language samples in " + dir.string());
    return from_samples(samples);
}

const LanguageIdentifier& LanguageIdentifier::builtin() {
    static const LanguageIdentifier instance = [] {
        std::vector<std::pair<std::string, std::string>> samples;
        for (const char* tag : {"en", "zh", "ja", "id"}) {
            samples.emplace_back(tag, std::string(builtin::langid_sample(tag)));
        }
        return from_samples(samples);
    }();
    return instance;
}

std::vector<double> LanguageIdentifier::similarities(std::string_view text) const {
    const auto counts = ngram_counts(text);
    std::array<double, 3> norms{};
    for (std::size_t n = 0; n < 3; ++n) norms[n] = l2_norm(counts[n]);
    std::vector<double> out;
    out.reserve(profiles_.size());
    for (const auto& p : profiles_) {
        double sim = 0;
        for (std::size_t n = 0; n < 3; ++n) {
            if (norms[n] == 0) continue;
            double dot = 0;
            for (const auto& [k, v] : counts[n]) {
                auto it = p.weights[n].find(k);
                if (it != p.weights[n].end()) dot += v * it->second;
            }
            sim += kOrderWeights[n] * dot / norms[n];
        }
        out.push_back(sim);
    }
    return out;
}

LanguageTag LanguageIdentifier::detect(std::string_view text) const {
    const auto sims = similarities(text);
    std::size_t best = 0;
    for (std::size_t i = 1; i < sims.size(); ++i) {
        if (sims[i] > sims[best]) best = i;
    }
    if (sims.empty() || sims[best] < kMinSimilarity) return {"unknown", 0.0};
    double denom = 0;
    for (double s : sims) denom += std::exp((s - sims[best]) / kTemperature);
    return {profiles_[best].tag, 1.0 / denom};
}

LanguageTag detect_language(std::string_view text) { return LanguageIdentifier::builtin().detect(text); }

std::vector<std::string> IngestSpec::validate() const {
    std::vector<std::string> out;
    if (path.empty()) out.emplace_back("path empty");
    else if (!fs::is_regular_file(path)) out.push_back("path not readable: " + path);
    if (format != InputFormat::txt && text_field.empty() && concat_fields.empty()) out.emplace_back("text_field empty");
    return out;
}

IngestSpec ingest_spec_from_json(const Json& j) {
    IngestSpec s;
    s.path = j.at("path").get<std::string>();
    const auto format = j.value("format", std::string{});
    if (format.empty()) {
        const auto& p = s.path;
        if (p.ends_with(".jsonl.gz") || p.ends_with(".json.gz")) s.format = InputFormat::jsonl_gz;
        else if (p.ends_with(".txt")) s.format = InputFormat::txt;
        else s.format = InputFormat::jsonl;
    } else if (format == "txt") {
        s.format = InputFormat::txt;
    } else if (format == "jsonl") {
        s.format = InputFormat::jsonl;
    } else if (format == "jsonl_gz") {
        s.format = InputFormat::jsonl_gz;
    } else {
        throw ConfigError("unknown ingest format '" + format + "'");
    }
    s.text_field = j.value("text_field", std::string("text"));
    if (auto it = j.find("concat_fields"); it != j.end()) s.concat_fields = it->get<std::vector<std::string>>();
    const auto mode = j.value("txt_mode", std::string("paragraph"));
    if (mode == "paragraph") s.txt_mode = TxtMode::paragraph;
    else if (mode == "line") s.txt_mode = TxtMode::line;
    else if (mode == "whole") s.txt_mode = TxtMode::whole;
    else throw ConfigError("unknown txt_mode '" + mode + "'");
    s.domain = j.value("domain", std::string("general"));
    return s;
}

Json to_json(const IngestSpec& spec) {
    static constexpr const char* kFormats[] = {"txt", "jsonl", "jsonl_gz"};
    static constexpr const char* kModes[] = {"paragraph", "line", "whole"};
    return Json{{"path", spec.path},
                {"format", kFormats[static_cast<int>(spec.format)]},
                {"text_field", spec.text_field},
                {"concat_fields", spec.concat_fields},
                {"txt_mode", kModes[static_cast<int>(spec.txt_mode)]},
                {"domain", spec.domain}};
}

void IngestReport::merge(const IngestReport& other) {
    records_in += other.records_in;
    documents_out += other.documents_out;
    skipped += other.skipped;
    replacement_chars += other.replacement_chars;
    for (const auto& [k, v] : other.skip_reasons) skip_reasons[k] += v;
}

Json IngestReport::to_json() const {
    Json reasons = Json::object();
    for (const auto& [k, v] : skip_reasons) reasons[k] = v;
    return Json{{"records_in", records_in},
                {"documents_out", documents_out},
                {"skipped", skipped},
                {"replacement_chars", replacement_chars},
                {"skip_reasons", reasons}};
}

namespace {

bool is_blank(std::string_view line) {
    for (char c : line) {
        if (c != ' ' && c != '\t' && c != '\r' && c != '\f' && c != '\v') return false;
    }
    return true;
}

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

std::optional<std::string> string_attr(const Json& j, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = j.find(k);
        if (it != j.end() && it->is_string() && !it->get_ref<const std::string&>().empty()) return it->get<std::string>();
    }
    return std::nullopt;
}

class Ingestor {
public:
    Ingestor(const IngestSpec& spec, const DocumentSink& sink, const LanguageIdentifier& langid)
        : spec_(spec), sink_(sink), langid_(langid) {}

    IngestReport run() {
        if (auto v = spec_.validate(); !v.empty()) {
            std::string msg = "ingest: " + spec_.path + ":";
            for (const auto& s : v) msg += " " + s;
            throw RuntimeError(msg);
        }
        if (spec_.format == InputFormat::txt) {
            run_txt();
        } else {
            run_jsonl();
        }
        return report_;
    }

private:
    void emit(std::string text, std::uint64_t index, std::string domain) {
        IngestedDocument item;
        item.doc.text = std::move(text);
        item.doc.provenance = {spec_.path, index};
        item.doc.id = make_document_id(spec_.path, index, item.doc.text);
        item.domain = std::move(domain);
        finish(std::move(item));
    }

    void finish(IngestedDocument&& item) {
        if (!seen_ids_.insert(item.doc.id).second) {
            report_.skip("duplicate_id");
            spdlog::warn("ingest: {} record {} skipped: duplicate id {}", spec_.path, item.doc.provenance.record_index,
                         item.doc.id);
            return;
        }
        item.doc.language = langid_.detect(item.doc.text);
        ++report_.documents_out;
        sink_(std::move(item));
    }

    void run_txt() {
        io::LineReader reader(spec_.path);
        std::string raw;
        std::string current;
        bool have = false;
        bool first_line = true;
        std::uint64_t index = 0;
        auto flush = [&] {
            if (!have) return;
            ++report_.records_in;
            emit(std::move(current), index++, spec_.domain);
            current.clear();
            have = false;
        };
        while (reader.next(raw)) {
            auto clean = utf8::sanitize(raw);
            report_.replacement_chars += clean.replacements;
            const std::string_view line = strip_cr(clean.text);
            switch (spec_.txt_mode) {
                case TxtMode::line:
                    if (!is_blank(line)) {
                        current.assign(line);
                        have = true;
                        flush();
                    }
                    break;
                case TxtMode::paragraph:
                    if (is_blank(line)) {
                        flush();
                    } else {
                        if (have) current.push_back('\n');
                        current.append(line);
                        have = true;
                    }
                    break;
                case TxtMode::whole:
                    if (!first_line) current.push_back('\n');
                    current.append(line);
                    first_line = false;
                    have = true;
                    break;
            }
        }
        if (spec_.txt_mode == TxtMode::whole && have && is_blank(current)) have = false;
        flush();
    }

    void run_jsonl() {
        io::LineReader reader(spec_.path);
        std::string raw;
        std::uint64_t index = 0;
        std::uint64_t line_no = 0;
        while (reader.next(raw)) {
            ++line_no;
            if (is_blank(raw)) continue;
            ++report_.records_in;
            const std::uint64_t record_index = index++;
            auto clean = utf8::sanitize(raw);
            report_.replacement_chars += clean.replacements;
            Json j;
            try {
                j = Json::parse(clean.text);
            } catch (const Json::parse_error& e) {
                skip("malformed_json", line_no, e.what());
                continue;
            }
            if (!j.is_object()) {
                skip("not_an_object", line_no, "record is not a JSON object");
                continue;
            }
            std::optional<std::string> text = record_text(j);
            if (!text) {
                skip("missing_text_field", line_no, "no usable text field");
                continue;
            }
            IngestedDocument item;
            item.doc.text = std::move(*text);
            item.doc.provenance = {spec_.path, record_index};
            auto id = string_attr(j, {"id"});
            item.doc.id = id ? *id : make_document_id(spec_.path, record_index, item.doc.text);
            item.doc.url = string_attr(j, {"url"});
            item.domain = string_attr(j, {"domain"}).value_or(spec_.domain);
            try {
                item.doc.context = record_context(j);
            } catch (const std::exception& e) {
                skip("invalid_context", line_no, e.what());
                continue;
            }
            finish(std::move(item));
        }
    }

    void skip(const std::string& reason, std::uint64_t line_no, const std::string& detail) {
        report_.skip(reason);
        spdlog::warn("ingest: {}:{} skipped ({}): {}", spec_.path, line_no, reason, detail);
    }

    std::optional<std::string> record_text(const Json& j) const {
        if (spec_.concat_fields.empty()) {
            auto it = j.find(spec_.text_field);
            if (it == j.end() || !it->is_string()) return std::nullopt;
            return it->get<std::string>();
        }
        std::string out;
        bool any = false;
        for (const auto& field : spec_.concat_fields) {
            auto it = j.find(field);
            if (it == j.end() || !it->is_string()) continue;
            if (any) out.push_back('\n');
            out += it->get_ref<const std::string&>();
            any = true;
        }
        if (!any) return std::nullopt;
        return out;
    }

    static std::optional<ContextRecord> record_context(const Json& j) {
        std::optional<ContextRecord> ctx;
        if (auto it = j.find("context"); it != j.end() && it->is_object()) ctx = it->get<ContextRecord>();
        auto set = [&](std::optional<std::string> ContextRecord::*field, std::initializer_list<const char*> keys) {
            if (auto v = string_attr(j, keys)) {
                if (!ctx) ctx.emplace();
                if (!((*ctx).*field)) (*ctx).*field = *v;
            }
        };
        set(&ContextRecord::author, {"author"});
        set(&ContextRecord::time, {"time", "date"});
        set(&ContextRecord::location, {"location"});
        set(&ContextRecord::category_primary, {"category_primary", "category"});
        set(&ContextRecord::category_secondary, {"category_secondary", "subcategory"});
        if (auto site = string_attr(j, {"source", "site"})) {
            if (!ctx) ctx.emplace();
            if (!ctx->source) ctx->source = SourceInfo{*site, Rating::unknown, Rating::unknown};
        }
        if (auto d = string_attr(j, {"dialogue_type"})) {
            if (!ctx) ctx.emplace();
            auto v = parse_enum<DialogueType>(*d);
            if (!v) throw Error("unknown dialogue_type '" + *d + "'");
            ctx->dialogue_type = *v;
        }
        return ctx;
    }

    const IngestSpec& spec_;
    const DocumentSink& sink_;
    const LanguageIdentifier& langid_;
    IngestReport report_;
    std::unordered_set<std::string> seen_ids_;
};

}  // namespace

IngestReport ingest(const IngestSpec& spec, const DocumentSink& sink, const LanguageIdentifier& langid) {
    return Ingestor(spec, sink, langid).run();
}

IngestResult ingest(const IngestSpec& spec, const LanguageIdentifier& langid) {
    IngestResult result;
    result.report = ingest(
        spec, [&](IngestedDocument&& d) { result.documents.push_back(std::move(d)); }, langid);
    return result;
}

}  // namespace dwc
