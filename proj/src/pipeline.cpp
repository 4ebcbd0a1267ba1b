#include "dwc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/io.hpp"
#include "dwc/parallel.hpp"

namespace fs = std::filesystem;

namespace dwc {

namespace {

bool non_negative_integer(const Json& j) { return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0); }

const std::set<std::string>& known_levels() {
    static const std::set<std::string> levels{"url", "exact", "near"};
    return levels;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void check_keys(const Json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + k + "'");
        }
    }
}

Json load_or_inline(const Json& j, const fs::path& base) {
    if (j.is_string()) return io::read_json(resolve(base, j.get<std::string>()));
    return j;
}

std::string_view granularity_name(Granularity g) {
    switch (g) {
        case Granularity::document: return "document";
        case Granularity::paragraph: return "paragraph";
        case Granularity::sentence: return "sentence";
    }
    return "?";
}

std::vector<std::size_t> alive_indices(const std::vector<Document>& docs) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (!docs[i].dropped()) out.push_back(i);
    }
    return out;
}

}  // namespace

std::vector<std::string> PipelineConfig::validate() const {
    std::vector<std::string> v;
    for (const auto& spec : inputs) {
        for (const auto& e : spec.validate()) v.push_back("input '" + spec.path + "': " + e);
        if (!fs::exists(spec.path)) v.push_back("input '" + spec.path + "' does not exist");
    }
    if (lexicon_dir && !fs::is_directory(*lexicon_dir)) {
        v.push_back("lexicon directory '" + lexicon_dir->string() + "' does not exist");
    }
    if (taxonomy && !fs::exists(*taxonomy)) v.push_back("taxonomy '" + taxonomy->string() + "' does not exist");
    if (vocab.base && !fs::exists(*vocab.base)) v.push_back("vocabulary '" + vocab.base->string() + "' does not exist");
    if (vocab.merges && !vocab.base) v.emplace_back("vocab merges need a base vocabulary");
    if (vocab.merges && !fs::exists(*vocab.merges)) {
        v.push_back("merges file '" + vocab.merges->string() + "' does not exist");
    }
    for (const auto& e : thresholds.validate()) v.push_back("thresholds: " + e);
    if (lm && (lm->order < 1 || lm->order > 3)) v.emplace_back("lm order must be 1, 2 or 3");
    if (lm && !(lm->alpha >= 0)) v.emplace_back("lm alpha must be non-negative");
    if (scorer && scorer->url.empty()) v.emplace_back("scorer url is empty");
    std::set<std::string> seen;
    for (const auto& level : dedup_levels) {
        if (!known_levels().count(level)) v.push_back("unknown dedup level '" + level + "'");
        if (!seen.insert(level).second) v.push_back("dedup level '" + level + "' listed twice");
    }
    for (const auto& e : minhash.validate()) v.push_back("minhash: " + e);
    for (const auto& e : plan.validate()) v.push_back("plan: " + e);
    if (workers == 0) v.emplace_back("workers must be at least 1");
    if (pack.sequences_per_shard == 0) v.emplace_back("sequences_per_shard must be positive");
    if (output_dir.empty()) v.emplace_back("output_dir is empty");
    return v;
}

PipelineConfig pipeline_config_from_json(const Json& j, const fs::path& base_dir) {
    PipelineConfig c;
    check_keys(j, "config",
               {"inputs", "clean", "clean_rules", "filter", "taxonomy", "dedup", "vocab", "pack", "plan", "seed",
                "output_dir", "workers", "keep_intermediate"});
    try {
        if (j.contains("inputs")) {
            for (const auto& in : j.at("inputs")) {
                auto spec = ingest_spec_from_json(in);
                spec.path = resolve(base_dir, spec.path).string();
                c.inputs.push_back(std::move(spec));
            }
        }
        if (j.contains("clean")) c.clean = clean_options_from_json(load_or_inline(j.at("clean"), base_dir));
        if (j.contains("clean_rules")) {
            auto rules = load_or_inline(j.at("clean_rules"), base_dir);
            if (rules.is_object() && rules.contains("rules")) rules = rules.at("rules");
            c.clean_rules = clean_rules_from_json(rules);
        }
        if (j.contains("filter")) {
            const auto& f = j.at("filter");
            check_keys(f, "filter", {"lexicons", "thresholds", "drop_low_quality", "lm", "scorer"});
            if (f.contains("lexicons")) c.lexicon_dir = resolve(base_dir, f.at("lexicons").get<std::string>());
            if (f.contains("thresholds")) c.thresholds = thresholds_from_json(load_or_inline(f.at("thresholds"), base_dir));
            c.filter.drop_low_quality = f.value("drop_low_quality", true);
            if (f.contains("lm") && !f.at("lm").is_null()) {
                const auto& l = f.at("lm");
                check_keys(l, "filter.lm", {"order", "alpha", "train_docs"});
                LmConfig lm;
                lm.order = l.value("order", lm.order);
                lm.alpha = l.value("alpha", lm.alpha);
                lm.train_docs = l.value("train_docs", lm.train_docs);
                c.lm = lm;
            }
            if (f.contains("scorer") && !f.at("scorer").is_null()) {
                const auto& s = f.at("scorer");
                check_keys(s, "filter.scorer", {"url", "timeout_ms"});
                c.scorer = ScorerConfig{s.at("url").get<std::string>(),
                                        std::chrono::milliseconds(s.value("timeout_ms", 2000))};
            }
        }
        if (j.contains("taxonomy")) c.taxonomy = resolve(base_dir, j.at("taxonomy").get<std::string>());
        if (j.contains("dedup")) {
            const auto& d = j.at("dedup");
            check_keys(d, "dedup", {"levels", "minhash"});
            if (d.contains("levels")) c.dedup_levels = d.at("levels").get<std::vector<std::string>>();
            if (d.contains("minhash")) {
                const auto m = load_or_inline(d.at("minhash"), base_dir);
                c.minhash = minhash_params_from_json(m);
                c.minhash_seed_from_run = !m.contains("seed");
            }
        }
        if (j.contains("vocab")) {
            const auto& v = j.at("vocab");
            check_keys(v, "vocab", {"base", "merges", "num_merges", "pretokenizer", "train_docs"});
            if (v.contains("base")) c.vocab.base = resolve(base_dir, v.at("base").get<std::string>());
            if (v.contains("merges")) c.vocab.merges = resolve(base_dir, v.at("merges").get<std::string>());
            c.vocab.num_merges = v.value("num_merges", c.vocab.num_merges);
            c.vocab.train_docs = v.value("train_docs", c.vocab.train_docs);
            if (v.contains("pretokenizer")) {
                const auto name = v.at("pretokenizer").get<std::string>();
                const auto p = parse_pretokenizer(name);
                if (!p) throw ConfigError("vocab: unknown pretokenizer '" + name + "'");
                c.vocab.pretokenizer = *p;
            }
        }
        if (j.contains("pack")) {
            const auto& p = j.at("pack");
            check_keys(p, "pack", {"pad_id", "order", "sequences_per_shard"});
            c.pack.pad_id = p.value("pad_id", c.pack.pad_id);
            c.pack.sequences_per_shard = p.value("sequences_per_shard", c.pack.sequences_per_shard);
            if (p.contains("order")) {
                const auto name = p.at("order").get<std::string>();
                const auto o = parse_pack_order(name);
                if (!o) throw ConfigError("pack: unknown order '" + name + "'");
                c.pack.order = *o;
            }
        }
        if (!j.contains("plan")) throw ConfigError("config: missing 'plan'");
        c.plan = build_stage_plan(load_or_inline(j.at("plan"), base_dir));
        if (j.contains("seed")) {
            if (!non_negative_integer(j.at("seed"))) throw ConfigError("seed must be a non-negative integer");
            c.seed = j.at("seed").get<std::uint64_t>();
        }
        if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        if (j.contains("workers")) {
            if (!non_negative_integer(j.at("workers"))) throw ConfigError("workers must be a positive integer");
            c.workers = j.at("workers").get<std::size_t>();
        }
        c.keep_intermediate = j.value("keep_intermediate", true);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const RuntimeError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    Json j;
    try {
        j = io::read_json(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot load config: ") + e.what());
    }
    return pipeline_config_from_json(j, path.parent_path());
}

Json PhaseCounts::to_json() const {
    return Json{{"name", name}, {"in", in}, {"out", out}, {"dropped", dropped}, {"seconds", seconds}};
}

Json CleanPhaseStats::to_json() const {
    return Json{{"edits", counts.to_json()},
                {"emptied", emptied},
                {"rule_changes", rule_changes},
                {"rule_hits", rule_hits}};
}

std::uint64_t count_alive(const std::vector<Document>& docs) {
    return static_cast<std::uint64_t>(
        std::count_if(docs.begin(), docs.end(), [](const Document& d) { return !d.dropped(); }));
}

CleanPhaseStats clean_documents(std::vector<Document>& docs, const CleanOptions& opts, const CleanRuleSet& rules,
                                std::size_t workers, std::vector<std::string>* change_log) {
    const auto alive = alive_indices(docs);
    std::vector<CleanCounts> counts(alive.size());
    std::vector<std::vector<ChangeLogEntry>> logs(alive.size());
    std::vector<char> emptied(alive.size(), 0);
    parallel_for(alive.size(), workers, [&](std::size_t k) {
        auto& doc = docs[alive[k]];
        auto general = clean_general(doc.text, opts);
        counts[k] = general.counts;
        if (general.text.empty()) {
            doc.text.clear();
            doc.verdicts.push_back({FilterStage::clean, Decision::drop, "empty", std::nullopt});
            emptied[k] = 1;
            return;
        }
        doc.text = std::move(general.text);
        if (rules.empty()) return;
        auto special = clean_specialized(std::move(doc), rules);
        doc = std::move(special.doc);
        logs[k] = std::move(special.log);
    });

    CleanPhaseStats stats;
    for (std::size_t k = 0; k < alive.size(); ++k) {
        stats.counts += counts[k];
        const auto& doc = docs[alive[k]];
        stats.emptied += emptied[k];
        for (const auto& e : logs[k]) {
            ++stats.rule_changes;
            ++stats.rule_hits[e.rule];
            if (change_log) {
                change_log->push_back(Json{{"doc_id", doc.id},
                                           {"rule", e.rule},
                                           {"granularity", granularity_name(e.granularity)},
                                           {"dropped", e.dropped},
                                           {"excerpt", e.excerpt}}
                                          .dump());
            }
        }
    }
    return stats;
}

FilterStats filter_documents(std::vector<Document>& docs, const DocumentFilter& filter, std::size_t workers) {
    const auto alive = alive_indices(docs);
    std::vector<DocumentFilter::Outcome> outcomes(alive.size());
    parallel_for(alive.size(), workers, [&](std::size_t k) {
        auto& doc = docs[alive[k]];
        if (!doc.context) doc.context.emplace();
        outcomes[k] = filter.apply(doc);
    });
    FilterStats stats;
    for (std::size_t k = 0; k < alive.size(); ++k) {
        stats.add(docs[alive[k]], outcomes[k].scorer_used, outcomes[k].scorer_failed);
    }
    return stats;
}

AnnotateStats annotate_documents(std::vector<Document>& docs, const Taxonomy& taxonomy) {
    AnnotateStats stats;
    for (auto& doc : docs) {
        if (!doc.dropped()) annotate_document(doc, taxonomy, stats);
    }
    return stats;
}

DedupReport dedup_documents(std::vector<Document>& docs, const std::vector<std::string>& levels,
                            const MinHasher& hasher, std::size_t workers) {
    DedupReport total;
    for (const auto& level : levels) {
        // Move survivors out so each level sees only them, then move them back.
        const auto alive = alive_indices(docs);
        std::vector<Document> view;
        view.reserve(alive.size());
        for (auto i : alive) view.push_back(std::move(docs[i]));
        DedupReport r;
        if (level == "url") {
            r = dedup_url(view);
        } else if (level == "exact") {
            r = dedup_exact(view);
        } else if (level == "near") {
            r = dedup_near(view, hasher, workers);
        } else {
            for (std::size_t k = 0; k < alive.size(); ++k) docs[alive[k]] = std::move(view[k]);
            throw ConfigError("unknown dedup level '" + level + "'");
        }
        for (std::size_t k = 0; k < alive.size(); ++k) docs[alive[k]] = std::move(view[k]);
        mark_duplicates(docs, r, level);
        total.merge(r);
    }
    return total;
}

namespace {

struct PhaseFailure {
    std::string phase;
    std::string message;
    bool config = false;
};

class Run {
public:
    Run(const PipelineConfig& config, const RunOptions& options) : cfg_(config) {
        workers_ = options.workers.value_or(config.workers);
        keep_ = options.keep_intermediate.value_or(config.keep_intermediate);
        out_ = options.output_dir.value_or(config.output_dir);
        if (workers_ == 0) throw ConfigError("workers must be at least 1");
        if (const auto v = config.validate(); !v.empty()) {
            std::string msg = "invalid config:";
            for (const auto& e : v) msg += " " + e + ";";
            throw ConfigError(msg);
        }
    }

    Json execute() {
        report_ = Json{{"format", "dwc-run-v1"}, {"seed", cfg_.seed}, {"workers", workers_}};
        phase("setup", [&] { setup(); });
        phase("ingest", [&] { ingest_phase(); });
        phase("clean", [&] { clean_phase(); });
        phase("filter", [&] { filter_phase(); });
        phase("annotate", [&] { annotate_phase(); });
        phase("dedup", [&] { dedup_phase(); });
        phase("vocab", [&] { vocab_phase(); });
        phase("encode", [&] { encode_phase(); });
        phase("mix", [&] { mix_phase(); });
        phase("pack", [&] { pack_phase(); });
        finish(nullptr);
        return report_;
    }

private:
    template <typename Fn>
    void phase(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        current_ = PhaseCounts{};
        current_.name = name;
        try {
            fn();
        } catch (const ConfigError& e) {
            fail({name, e.what(), true});
        } catch (const std::exception& e) {
            fail({name, e.what(), false});
        }
        current_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (name != "setup") phases_.push_back(current_);
    }

    [[noreturn]] void fail(const PhaseFailure& f) {
        finish(&f);
        const auto msg = f.phase + ": " + f.message;
        if (f.config) throw ConfigError(msg);
        throw RuntimeError(msg);
    }

    void finish(const PhaseFailure* failure) {
        Json phases = Json::array();
        for (const auto& p : phases_) phases.push_back(p.to_json());
        report_["phases"] = phases;
        report_["drop_reasons"] = drop_reasons();
        report_["warnings"] = warnings_;
        if (failure) report_["error"] = Json{{"phase", failure->phase}, {"message", failure->message}};
        try {
            io::write_json(out_ / "report.json", report_);
        } catch (const std::exception&) {
            if (!failure) throw;
        }
    }

    Json drop_reasons() const {
        std::map<std::string, std::uint64_t> hist;
        for (const auto& [reason, n] : ingest_skips_) hist["ingest:" + reason] += n;
        for (const auto& d : docs_) {
            for (const auto& v : d.verdicts) {
                if (v.decision != Decision::drop) continue;
                ++hist[std::string(to_string(v.stage)) + ":" + v.reason_code];
                break;
            }
        }
        return Json(hist);
    }

    void intermediate(const std::string& name) {
        if (keep_) io::write_documents(out_ / "intermediate" / (name + ".jsonl"), docs_);
    }

    void setup() {
        fs::create_directories(out_);
        for (const char* sub : {"shards", "manifests", "vocab", "intermediate"}) fs::remove_all(out_ / sub);
        if (cfg_.lexicon_dir) lexicons_ = Lexicons::load(*cfg_.lexicon_dir);
        if (cfg_.taxonomy) taxonomy_ = Taxonomy::load(*cfg_.taxonomy);
        rules_ = CleanRuleSet(cfg_.clean_rules);
        auto params = cfg_.minhash;
        if (cfg_.minhash_seed_from_run) params.seed = derive_seed(cfg_.seed, "dedup");
        hasher_.emplace(params);
        if (cfg_.vocab.base) {
            base_vocab_ = Vocabulary::load(*cfg_.vocab.base);
            if (cfg_.vocab.merges) base_vocab_.load_merges(*cfg_.vocab.merges);
        }
        if (cfg_.scorer) scorer_.emplace(cfg_.scorer->url, cfg_.scorer->timeout);
    }

    void ingest_phase() {
        IngestReport total;
        std::uint64_t repeated = 0;
        for (const auto& spec : cfg_.inputs) {
            const auto r = ingest(spec, [&](IngestedDocument&& d) {
                // Ids are unique within one input; a repeat across inputs is skipped.
                if (!domain_.emplace(d.doc.id, d.domain).second) {
                    ++repeated;
                    return;
                }
                docs_.push_back(std::move(d.doc));
            });
            total.merge(r);
        }
        if (repeated > 0) {
            total.documents_out -= repeated;
            total.skipped += repeated;
            total.skip_reasons["duplicate_id"] += repeated;
        }
        current_.in = total.records_in;
        current_.out = docs_.size();
        current_.dropped = total.skipped;
        ingest_skips_ = total.skip_reasons;
        report_["ingest"] = total.to_json();
        intermediate("ingest");
        if (keep_) {
            io::LineWriter w(out_ / "intermediate" / "domains.jsonl");
            for (const auto& d : docs_) w.write_line(Json{{"doc_id", d.id}, {"domain", domain_.at(d.id)}}.dump());
            w.close();
        }
    }

    // Snapshot the alive set before a document phase; after it, the phase's
    // drops are the documents that left the alive set.
    std::vector<bool> alive_mask() const {
        std::vector<bool> m(docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) m[i] = !docs_[i].dropped();
        return m;
    }

    void count_transition(const std::vector<bool>& before) {
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            if (!before[i]) continue;
            ++current_.in;
            if (docs_[i].dropped()) ++current_.dropped;
            else ++current_.out;
        }
    }

    void clean_phase() {
        const auto before = alive_mask();
        std::vector<std::string> log;
        const auto stats = clean_documents(docs_, cfg_.clean, rules_, workers_, keep_ ? &log : nullptr);
        count_transition(before);
        report_["clean"] = stats.to_json();
        intermediate("clean");
        if (keep_) {
            io::LineWriter w(out_ / "intermediate" / "clean_changes.jsonl");
            for (const auto& line : log) w.write_line(line);
            w.close();
        }
    }

    void filter_phase() {
        const auto before = alive_mask();
        std::optional<NGramLM> lm;
        if (cfg_.lm) {
            std::vector<std::string> texts;
            for (const auto& d : docs_) {
                if (texts.size() >= cfg_.lm->train_docs) break;
                if (!d.dropped()) texts.push_back(d.text);
            }
            if (texts.empty()) {
                warnings_.push_back("filter: no documents to train the language model, perplexity skipped");
            } else {
                lm = NGramLM::train_on_texts(texts, cfg_.lm->order, cfg_.lm->alpha);
            }
        }
        const Lexicons& lex = lexicons_ ? *lexicons_ : Lexicons::builtin();
        const DocumentFilter filter(lex, cfg_.thresholds, lm ? &*lm : nullptr, scorer_ ? &*scorer_ : nullptr,
                                    cfg_.filter);
        const auto stats = filter_documents(docs_, filter, workers_);
        count_transition(before);
        auto j = stats.to_json();
        if (scorer_) {
            j["scorer_timeouts"] = scorer_->timeouts();
            j["scorer_failures"] = scorer_->failures();
            if (stats.scorer_fallbacks > 0) {
                warnings_.push_back("filter: external scorer unavailable for " + std::to_string(stats.scorer_fallbacks) +
                                    " documents, heuristics used");
            }
        }
        report_["filter"] = j;
        intermediate("filter");
    }

    void annotate_phase() {
        const auto before = alive_mask();
        const Taxonomy& tax = taxonomy_ ? *taxonomy_ : Taxonomy::builtin();
        const auto stats = annotate_documents(docs_, tax);
        count_transition(before);
        report_["annotate"] = stats.to_json();
        intermediate("annotate");
    }

    void dedup_phase() {
        const auto before = alive_mask();
        const auto r = dedup_documents(docs_, cfg_.dedup_levels, *hasher_, workers_);
        count_transition(before);
        auto j = r.to_json();
        if (keep_) io::write_json(out_ / "intermediate" / "dedup_report.json", j);
        j.erase("clusters");
        j["levels"] = cfg_.dedup_levels;
        j["minhash"] = to_json(hasher_->params());
        report_["dedup"] = j;
        intermediate("dedup");
        alive_ = alive_indices(docs_);
    }

    std::vector<std::string> texts_for_training() const {
        std::vector<std::string> texts;
        for (auto i : alive_) {
            if (cfg_.vocab.train_docs != 0 && texts.size() >= cfg_.vocab.train_docs) break;
            texts.push_back(docs_[i].text);
        }
        return texts;
    }

    std::set<DwcMode> modes() const {
        std::set<DwcMode> m;
        for (const auto& s : cfg_.plan.stages) m.insert(s.dwc_mode);
        return m;
    }

    void vocab_phase() {
        current_.in = current_.out = alive_.size();
        Vocabulary base = cfg_.vocab.base ? base_vocab_ : Vocabulary{};
        if (!cfg_.vocab.base) {
            if (cfg_.vocab.pretokenizer == Pretokenizer::byte) {
                base = Vocabulary::byte_level();
            } else {
                // Every code point of the encoded texts, so encoding never meets an unknown symbol.
                std::set<std::string> symbols;
                for (const auto mode : modes()) {
                    for (auto i : alive_) {
                        const auto text = compose_training_text(docs_[i], mode);
                        for (const auto piece : pretokenize(text, Pretokenizer::whitespace)) {
                            for (auto& s : base_symbols(piece, Pretokenizer::whitespace)) symbols.insert(std::move(s));
                        }
                    }
                }
                base = Vocabulary(std::vector<std::string>(symbols.begin(), symbols.end()));
            }
        }
        const auto texts = texts_for_training();
        const auto learned = train_bpe(texts, cfg_.vocab.num_merges, cfg_.vocab.pretokenizer, workers_);
        auto merged = merge_vocab(base, learned);
        vocab_ = std::move(merged.vocab);
        vocab_.save(out_ / "vocab" / "vocab.txt");
        vocab_.save_merges(out_ / "vocab" / "merges.txt");
        auto j = merged.to_json();
        j["base_size"] = base.size();
        j["pretokenizer"] = to_string(cfg_.vocab.pretokenizer);
        j["training_documents"] = texts.size();
        j["merges_learned"] = learned.merges.size();
        report_["vocab"] = j;
    }

    void encode_phase() {
        current_.in = current_.out = alive_.size();
        const BpeEncoder encoder(vocab_, cfg_.vocab.pretokenizer);
        Json totals = Json::object();
        for (const auto mode : modes()) {
            auto& tokens = encoded_[mode];
            tokens.resize(alive_.size());
            parallel_for(alive_.size(), workers_, [&](std::size_t k) {
                tokens[k] = encoder.encode(compose_training_text(docs_[alive_[k]], mode));
            });
            std::uint64_t n = 0;
            for (const auto& t : tokens) n += t.size();
            totals[std::string(to_string(mode))] = n;
        }
        report_["encode"] = Json{{"documents", alive_.size()}, {"tokens", totals}};
    }

    void mix_phase() {
        current_.in = alive_.size();
        std::set<std::string> selected;
        Json stages = Json::array();
        for (const auto& stage : cfg_.plan.stages) {
            const auto& tokens = encoded_.at(stage.dwc_mode);
            std::vector<PoolDoc> pool;
            pool.reserve(alive_.size());
            for (std::size_t k = 0; k < alive_.size(); ++k) {
                const auto& id = docs_[alive_[k]].id;
                pool.push_back({id, domain_.at(id), tokens[k].size()});
            }
            auto m = sample_stage(stage, pool, derive_seed(cfg_.seed, "mix"));
            io::write_file(out_ / "manifests" / (stage.name + ".jsonl"), m.to_jsonl());
            for (const auto& e : m.entries) selected.insert(e.doc_id);
            for (const auto& w : m.warnings) warnings_.push_back("mix: " + w);
            auto s = m.summary_json();
            s["dwc_mode"] = to_string(stage.dwc_mode);
            stages.push_back(s);
            manifests_.push_back(std::move(m));
        }
        current_.out = selected.size();
        current_.dropped = current_.in - current_.out;
        report_["mix"] = stages;
    }

    void pack_phase() {
        std::unordered_map<std::string, std::size_t> position;
        for (std::size_t k = 0; k < alive_.size(); ++k) position[docs_[alive_[k]].id] = k;
        Json stages = Json::array();
        Json checksums = Json::array();
        PackStats all;
        for (std::size_t si = 0; si < cfg_.plan.stages.size(); ++si) {
            const auto& stage = cfg_.plan.stages[si];
            const auto& m = manifests_[si];
            const auto& tokens = encoded_.at(stage.dwc_mode);
            std::vector<TokenizedDoc> docs;
            docs.reserve(m.entries.size());
            for (const auto& e : m.entries) docs.push_back({e.doc_id, tokens[position.at(e.doc_id)]});
            current_.in += docs.size();

            const auto r = pack_mixed(docs, stage.sequence_lengths, derive_seed(cfg_.seed, "pack/" + stage.name),
                                      cfg_.pack.order, cfg_.pack.pad_id, workers_);
            PackStats stage_stats;
            Json classes = Json::array();
            Json index = Json::array();
            const auto dir = out_ / "shards" / stage.name;
            for (std::size_t c = 0; c < r.classes.size(); ++c) {
                const auto& pack = r.packs[c];
                stage_stats.add(pack.stats);
                auto cj = pack.stats.to_json();
                cj["length"] = r.classes[c].length;
                cj["ratio"] = r.classes[c].ratio;
                cj["assigned_tokens"] = r.assigned_tokens[c];
                classes.push_back(cj);
                if (pack.sequences.empty()) continue;
                const auto shards = write_shards(dir, "L" + std::to_string(r.classes[c].length), pack.sequences,
                                                 cfg_.pack.sequences_per_shard);
                index.push_back(shard_index_json(shards, r.classes[c].length, cfg_.pack.pad_id));
                for (const auto& s : shards) {
                    checksums.push_back(Json{{"file", "shards/" + stage.name + "/" + s.file}, {"sha256", s.sha256}});
                }
            }
            if (!index.empty()) {
                io::write_json(dir / "index.json", Json{{"stage", stage.name}, {"classes", index}});
            }
            current_.out += stage_stats.documents;
            all.add(stage_stats);
            auto sj = stage_stats.to_json();
            sj["stage"] = stage.name;
            sj["pad_ratio"] = stage_stats.pad_ratio();
            sj["truncated_documents"] = stage_stats.split_documents;
            sj["classes"] = classes;
            stages.push_back(sj);
        }
        auto total = all.to_json();
        total["pad_ratio"] = all.pad_ratio();
        total["truncated_documents"] = all.split_documents;
        report_["pack"] = Json{{"total", total}, {"stages", stages}};
        report_["shards"] = checksums;
    }

    const PipelineConfig& cfg_;
    std::size_t workers_ = 1;
    bool keep_ = true;
    fs::path out_;
    Json report_;
    PhaseCounts current_;
    std::vector<PhaseCounts> phases_;
    std::vector<std::string> warnings_;
    std::map<std::string, std::uint64_t> ingest_skips_;

    std::optional<Lexicons> lexicons_;
    std::optional<Taxonomy> taxonomy_;
    CleanRuleSet rules_;
    std::optional<MinHasher> hasher_;
    std::optional<ExternalScorer> scorer_;
    Vocabulary base_vocab_;
    Vocabulary vocab_;

    std::vector<Document> docs_;
    std::unordered_map<std::string, std::string> domain_;
    std::vector<std::size_t> alive_;
    std::map<DwcMode, std::vector<std::vector<std::uint32_t>>> encoded_;
    std::vector<Manifest> manifests_;
};

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }
std::string pad_right(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace

Json run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    Run run(config, options);
    return run.execute();
}

std::string render_report(const Json& report) {
    if (!report.is_object() || !report.contains("phases") || !report.at("phases").is_array()) {
        throw RuntimeError("not a run report: missing phase table");
    }
    std::ostringstream out;
    try {
        out << "seed " << report.value("seed", std::uint64_t{0}) << ", workers " << report.value("workers", 1) << "\n\n";
        out << pad_right("phase", 10) << pad_left("in", 10) << pad_left("out", 10) << pad_left("dropped", 10)
            << pad_left("seconds", 10) << "\n";
        for (const auto& p : report.at("phases")) {
            out << pad_right(p.at("name").get<std::string>(), 10) << pad_left(std::to_string(p.at("in").get<std::uint64_t>()), 10)
                << pad_left(std::to_string(p.at("out").get<std::uint64_t>()), 10)
                << pad_left(std::to_string(p.at("dropped").get<std::uint64_t>()), 10)
                << pad_left(fixed(p.at("seconds").get<double>(), 3), 10) << "\n";
        }
        if (report.contains("mix")) {
            out << "\n";
            for (const auto& s : report.at("mix")) {
                out << "stage " << s.at("stage").get<std::string>() << ": " << s.at("documents").get<std::uint64_t>()
                    << " documents, " << s.at("tokens").get<std::uint64_t>() << " of "
                    << s.at("budget").get<std::uint64_t>() << " budget tokens\n";
                out << "  shares:";
                for (const auto& [d, v] : s.at("shares").items()) out << " " << d << " " << fixed(v.get<double>(), 4);
                out << "\n";
            }
        }
        if (report.contains("pack")) {
            const auto& pack = report.at("pack");
            for (const auto& s : pack.at("stages")) {
                out << "  " << s.at("stage").get<std::string>() << ": " << s.at("sequences").get<std::uint64_t>()
                    << " sequences, pad ratio " << fixed(s.at("pad_ratio").get<double>(), 4) << ", "
                    << s.at("truncated_documents").get<std::uint64_t>() << " split documents\n";
            }
            out << "pad ratio: " << fixed(pack.at("total").at("pad_ratio").get<double>(), 4) << "\n";
        } else {
            out << "pad ratio: n/a\n";
        }
        if (report.contains("dedup")) {
            const auto& d = report.at("dedup");
            out << "dedup: " << d.value("total_removed", std::uint64_t{0}) << " removed in "
                << d.value("cluster_count", std::uint64_t{0}) << " clusters (largest "
                << d.value("largest_cluster", std::uint64_t{0}) << ")\n";
        }
        if (report.contains("drop_reasons") && !report.at("drop_reasons").empty()) {
            out << "\ndrop reasons:\n";
            for (const auto& [k, v] : report.at("drop_reasons").items()) {
                out << "  " << pad_right(k, 32) << " " << v.get<std::uint64_t>() << "\n";
            }
        }
        if (report.contains("warnings") && !report.at("warnings").empty()) {
            out << "\nwarnings:\n";
            for (const auto& w : report.at("warnings")) out << "  - " << w.get<std::string>() << "\n";
        }
        if (report.contains("error")) {
            out << "\nerror in phase " << report.at("error").at("phase").get<std::string>() << ": "
                << report.at("error").at("message").get<std::string>() << "\n";
        }
    } catch (const Json::exception& e) {
        throw RuntimeError(std::string("malformed run report: ") + e.what());
    }
    return out.str();
}

}  // namespace dwc
