// dwc-curator: command-line front end for the curation pipeline.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <unordered_map>

#include "CLI11.hpp"
#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/io.hpp"
#include "dwc/parallel.hpp"
#include "dwc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dwc;

namespace {

constexpr const char* kConfigEnv = "DWC_CURATOR_CONFIG";

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

struct TokenRow {
    std::string id;
    std::string domain;
    std::vector<std::uint32_t> tokens;
};

std::vector<TokenRow> read_token_rows(const fs::path& path) {
    std::vector<TokenRow> rows;
    io::LineReader in(path);
    std::string line;
    std::size_t n = 0;
    while (in.next(line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const auto j = Json::parse(line);
            TokenRow r;
            r.id = j.contains("id") ? j.at("id").get<std::string>() : j.at("doc_id").get<std::string>();
            r.domain = j.value("domain", std::string("general"));
            r.tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
            rows.push_back(std::move(r));
        } catch (const Json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), n, 1);
        }
    }
    return rows;
}

std::unordered_map<std::string, std::string> read_domains(const fs::path& path) {
    std::unordered_map<std::string, std::string> out;
    io::LineReader in(path);
    std::string line;
    while (in.next(line)) {
        if (line.empty()) continue;
        const auto j = Json::parse(line);
        out[j.at("doc_id").get<std::string>()] = j.at("domain").get<std::string>();
    }
    return out;
}

Pretokenizer pretokenizer_arg(const std::string& s) {
    const auto p = parse_pretokenizer(s);
    if (!p) throw ConfigError("unknown pretokenizer '" + s + "'");
    return *p;
}

Vocabulary load_vocab(const fs::path& vocab, const std::string& merges) {
    auto v = Vocabulary::load(vocab);
    if (!merges.empty()) v.load_merges(merges);
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    auto log = spdlog::stderr_color_mt("dwc");
    spdlog::set_default_logger(log);
    spdlog::set_pattern("%^%l%$: %v");

    CLI::App app{"DWC data curation pipeline"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();
    std::size_t workers = 1;

    // run
    auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
    std::string config_path;
    std::optional<std::size_t> run_workers;
    std::string run_output;
    bool no_intermediate = false;
    run->add_option("--config,-c", config_path, std::string("Pipeline config (default: $") + kConfigEnv + ")");
    run->add_option("--workers,-j", run_workers, "Worker threads")->check(CLI::PositiveNumber);
    run->add_option("--output,-o", run_output, "Override the output directory");
    run->add_flag("--no-intermediate", no_intermediate, "Do not keep per-phase document files");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Read raw inputs into canonical documents");
    std::string spec_path, ingest_out;
    ingest_cmd->add_option("--spec", spec_path, "Ingest spec JSON (object or list)")->required();
    ingest_cmd->add_option("--out", ingest_out, "Output directory")->required();

    // clean
    auto* clean_cmd = app.add_subcommand("clean", "General and rule-based cleaning");
    std::string rules_path, opts_path, clean_in, clean_out, clean_log;
    clean_cmd->add_option("--rules", rules_path, "Clean rules JSON list");
    clean_cmd->add_option("--opts", opts_path, "Clean options JSON");
    clean_cmd->add_option("--in", clean_in, "Documents JSONL")->required();
    clean_cmd->add_option("--out", clean_out, "Output documents JSONL")->required();
    clean_cmd->add_option("--log", clean_log, "Change log JSONL");
    clean_cmd->add_option("--workers,-j", workers)->check(CLI::PositiveNumber);

    // filter
    auto* filter_cmd = app.add_subcommand("filter", "Quality indicators and safety screening");
    std::string lexicon_dir, thresholds_path, scorer_url, filter_in, filter_out;
    int lm_order = 0;
    bool keep_low = false;
    filter_cmd->add_option("--lexicons", lexicon_dir, "Lexicon directory");
    filter_cmd->add_option("--thresholds", thresholds_path, "Thresholds JSON");
    filter_cmd->add_option("--scorer-url", scorer_url, "External classifier endpoint");
    filter_cmd->add_option("--lm-order", lm_order, "Train an n-gram model of this order for perplexity")
        ->check(CLI::Range(1, 3));
    filter_cmd->add_flag("--keep-low-quality", keep_low, "Flag instead of dropping low-quality documents");
    filter_cmd->add_option("--in", filter_in)->required();
    filter_cmd->add_option("--out", filter_out)->required();
    filter_cmd->add_option("--workers,-j", workers)->check(CLI::PositiveNumber);

    // annotate
    auto* annotate_cmd = app.add_subcommand("annotate", "Validate world contexts against a taxonomy");
    std::string taxonomy_path, annotate_in, annotate_out;
    bool show_preamble = false;
    annotate_cmd->add_option("--taxonomy", taxonomy_path, "Taxonomy JSON");
    annotate_cmd->add_option("--in", annotate_in)->required();
    annotate_cmd->add_option("--out", annotate_out)->required();
    annotate_cmd->add_flag("--print-preambles", show_preamble, "Print each surviving preamble to stdout");

    // dedup
    auto* dedup_cmd = app.add_subcommand("dedup", "URL, exact and near-duplicate removal");
    std::string level = "near", params_path, dedup_in, dedup_out, dedup_report;
    dedup_cmd->add_option("--level", level)->check(CLI::IsMember({"url", "exact", "near"}))->capture_default_str();
    dedup_cmd->add_option("--params", params_path, "MinHash params JSON");
    dedup_cmd->add_option("--in", dedup_in)->required();
    dedup_cmd->add_option("--out", dedup_out)->required();
    dedup_cmd->add_option("--report", dedup_report, "Write the cluster report here instead of stdout");
    dedup_cmd->add_option("--workers,-j", workers)->check(CLI::PositiveNumber);

    // vocab
    auto* vocab_cmd = app.add_subcommand("vocab", "Train, merge and apply BPE vocabularies");
    vocab_cmd->require_subcommand(1);
    std::string pretok = "byte";
    auto* vtrain = vocab_cmd->add_subcommand("train", "Learn BPE merges from documents");
    std::string vt_in, vt_vocab, vt_merges;
    std::size_t num_merges = 1000, train_docs = 0;
    vtrain->add_option("--in", vt_in, "Documents JSONL")->required();
    vtrain->add_option("--merges,-n", num_merges)->capture_default_str();
    vtrain->add_option("--train-docs", train_docs, "Use only the first N documents (0 = all)");
    vtrain->add_option("--pretokenizer", pretok)->check(CLI::IsMember({"byte", "whitespace"}));
    vtrain->add_option("--out-vocab", vt_vocab)->required();
    vtrain->add_option("--out-merges", vt_merges)->required();
    vtrain->add_option("--workers,-j", workers)->check(CLI::PositiveNumber);

    auto* vmerge = vocab_cmd->add_subcommand("merge", "Append a learned vocabulary to a base vocabulary");
    std::string vm_base, vm_base_merges, vm_learned, vm_learned_merges, vm_vocab, vm_merges;
    vmerge->add_option("--base", vm_base, "Base vocabulary (default: 256 byte tokens)");
    vmerge->add_option("--base-merges", vm_base_merges);
    vmerge->add_option("--learned", vm_learned)->required();
    vmerge->add_option("--learned-merges", vm_learned_merges)->required();
    vmerge->add_option("--out-vocab", vm_vocab)->required();
    vmerge->add_option("--out-merges", vm_merges)->required();

    auto* vencode = vocab_cmd->add_subcommand("encode", "Encode documents to token ids");
    std::string ve_vocab, ve_merges, ve_in, ve_out, ve_domains, ve_mode = "none";
    vencode->add_option("--vocab", ve_vocab)->required();
    vencode->add_option("--merges", ve_merges);
    vencode->add_option("--in", ve_in, "Documents JSONL")->required();
    vencode->add_option("--out", ve_out, "Token rows JSONL {id, domain, tokens}")->required();
    vencode->add_option("--domains", ve_domains, "domains.jsonl written by ingest");
    vencode->add_option("--dwc-mode", ve_mode)->check(CLI::IsMember({"none", "preamble"}));
    vencode->add_option("--pretokenizer", pretok)->check(CLI::IsMember({"byte", "whitespace"}));
    vencode->add_option("--workers,-j", workers)->check(CLI::PositiveNumber);

    // pack
    auto* pack_cmd = app.add_subcommand("pack", "Best-fit packing into fixed-length sequences");
    std::string pack_in, pack_out, pack_manifest, pack_order = "size_desc", mixed;
    std::size_t length = 0, per_shard = 1024;
    std::uint32_t pad_id = 0;
    std::uint64_t pack_seed = 0;
    pack_cmd->add_option("--in", pack_in, "Token rows JSONL")->required();
    pack_cmd->add_option("--out", pack_out, "Shard directory")->required();
    auto* len_opt = pack_cmd->add_option("--length", length, "Sequence length")->check(CLI::PositiveNumber);
    auto* mixed_opt = pack_cmd->add_option("--mixed", mixed, "Length classes, e.g. 8192:1,16384:1,32768:1");
    len_opt->excludes(mixed_opt);
    pack_cmd->add_option("--manifest", pack_manifest, "Pack only the manifest's documents, in its order");
    pack_cmd->add_option("--order", pack_order)->check(CLI::IsMember({"size_desc", "input"}));
    pack_cmd->add_option("--pad-id", pad_id);
    pack_cmd->add_option("--seed", pack_seed);
    pack_cmd->add_option("--per-shard", per_shard)->check(CLI::PositiveNumber);
    pack_cmd->add_option("--workers,-j", workers)->check(CLI::PositiveNumber);

    // mix
    auto* mix_cmd = app.add_subcommand("mix", "Sample per-stage manifests from a token pool");
    std::string plan_path, pool_path, mix_out;
    std::uint64_t mix_seed = 0;
    mix_cmd->add_option("--plan", plan_path, "Stage plan JSON")->required();
    mix_cmd->add_option("--pool", pool_path, "Token rows or {doc_id, domain, tokens} JSONL")->required();
    mix_cmd->add_option("--out", mix_out, "Manifest directory")->required();
    mix_cmd->add_option("--seed", mix_seed);

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Summarize a run report");
    std::string report_path;
    stats_cmd->add_option("report", report_path, "report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const auto lvl = spdlog::level::from_str(log_level);
        if (lvl == spdlog::level::off && log_level != "off") throw ConfigError("unknown log level '" + log_level + "'");
        spdlog::set_level(lvl);

        if (*run) {
            if (config_path.empty()) {
                if (const char* env = std::getenv(kConfigEnv)) config_path = env;
            }
            if (config_path.empty()) throw ConfigError(std::string("no config given (use --config or $") + kConfigEnv + ")");
            const auto cfg = load_pipeline_config(config_path);
            RunOptions opts;
            opts.workers = run_workers;
            if (no_intermediate) opts.keep_intermediate = false;
            if (!run_output.empty()) opts.output_dir = fs::path(run_output);
            spdlog::info("running {} stage(s) from {}", cfg.plan.stages.size(), config_path);
            const auto report = run_pipeline(cfg, opts);
            std::cout << render_report(report);
        } else if (*ingest_cmd) {
            auto spec_json = io::read_json(spec_path);
            std::vector<IngestSpec> specs;
            if (spec_json.is_array()) {
                for (const auto& s : spec_json) specs.push_back(ingest_spec_from_json(s));
            } else {
                specs.push_back(ingest_spec_from_json(spec_json));
            }
            std::vector<Document> docs;
            io::LineWriter domains(fs::path(ingest_out) / "domains.jsonl");
            IngestReport total;
            for (const auto& s : specs) {
                if (const auto v = s.validate(); !v.empty()) throw ConfigError("ingest spec: " + v.front());
                total.merge(ingest(s, [&](IngestedDocument&& d) {
                    domains.write_line(Json{{"doc_id", d.doc.id}, {"domain", d.domain}}.dump());
                    docs.push_back(std::move(d.doc));
                }));
            }
            domains.close();
            io::write_documents(fs::path(ingest_out) / "documents.jsonl", docs);
            print(total.to_json());
        } else if (*clean_cmd) {
            const auto opts = opts_path.empty() ? CleanOptions{} : clean_options_from_json(io::read_json(opts_path));
            CleanRuleSet rules;
            if (!rules_path.empty()) rules = CleanRuleSet(clean_rules_from_json(io::read_json(rules_path)));
            auto docs = io::read_documents(clean_in);
            std::vector<std::string> changes;
            const auto stats = clean_documents(docs, opts, rules, workers, clean_log.empty() ? nullptr : &changes);
            io::write_documents(clean_out, docs);
            if (!clean_log.empty()) {
                io::LineWriter w(clean_log);
                for (const auto& l : changes) w.write_line(l);
                w.close();
            }
            print(stats.to_json());
        } else if (*filter_cmd) {
            std::optional<Lexicons> lex;
            if (!lexicon_dir.empty()) lex = Lexicons::load(lexicon_dir);
            const auto thresholds =
                thresholds_path.empty() ? Thresholds::builtin() : thresholds_from_json(io::read_json(thresholds_path));
            std::optional<ExternalScorer> scorer;
            if (!scorer_url.empty()) scorer.emplace(scorer_url);
            auto docs = io::read_documents(filter_in);
            std::optional<NGramLM> lm;
            if (lm_order > 0) {
                std::vector<std::string> texts;
                for (const auto& d : docs) {
                    if (!d.dropped()) texts.push_back(d.text);
                }
                if (!texts.empty()) lm = NGramLM::train_on_texts(texts, lm_order, 1.0);
            }
            FilterOptions fo;
            fo.drop_low_quality = !keep_low;
            const DocumentFilter filter(lex ? *lex : Lexicons::builtin(), thresholds, lm ? &*lm : nullptr,
                                        scorer ? &*scorer : nullptr, fo);
            const auto stats = filter_documents(docs, filter, workers);
            io::write_documents(filter_out, docs);
            auto j = stats.to_json();
            if (scorer) j["scorer_timeouts"] = scorer->timeouts();
            print(j);
        } else if (*annotate_cmd) {
            std::optional<Taxonomy> tax;
            if (!taxonomy_path.empty()) tax = Taxonomy::load(taxonomy_path);
            auto docs = io::read_documents(annotate_in);
            const auto stats = annotate_documents(docs, tax ? *tax : Taxonomy::builtin());
            io::write_documents(annotate_out, docs);
            if (show_preamble) {
                for (const auto& d : docs) {
                    if (!d.dropped() && d.context) std::cout << serialize_context(*d.context) << "\n";
                }
            } else {
                print(stats.to_json());
            }
        } else if (*dedup_cmd) {
            const auto params = params_path.empty() ? MinHashParams{} : minhash_params_from_json(io::read_json(params_path));
            const MinHasher hasher(params);
            auto docs = io::read_documents(dedup_in);
            const auto report = dedup_documents(docs, {level}, hasher, workers);
            io::write_documents(dedup_out, docs);
            if (dedup_report.empty()) print(report.to_json());
            else io::write_json(dedup_report, report.to_json());
        } else if (*vtrain) {
            const auto docs = io::read_documents(vt_in);
            std::vector<std::string> texts;
            for (const auto& d : docs) {
                if (train_docs != 0 && texts.size() >= train_docs) break;
                if (!d.dropped()) texts.push_back(d.text);
            }
            const auto learned = train_bpe(texts, num_merges, pretokenizer_arg(pretok), workers);
            Vocabulary v(learned.entries);
            for (const auto& m : learned.merges) v.add_merge(m);
            v.save(vt_vocab);
            v.save_merges(vt_merges);
            print(Json{{"documents", texts.size()}, {"entries", learned.entries.size()}, {"merges", learned.merges.size()}});
        } else if (*vmerge) {
            const auto base = vm_base.empty() ? Vocabulary::byte_level() : load_vocab(vm_base, vm_base_merges);
            const auto learned_vocab = load_vocab(vm_learned, vm_learned_merges);
            const BpeResult learned{learned_vocab.merges(), learned_vocab.tokens()};
            const auto merged = merge_vocab(base, learned);
            merged.vocab.save(vm_vocab);
            merged.vocab.save_merges(vm_merges);
            print(merged.to_json());
        } else if (*vencode) {
            const auto vocab = load_vocab(ve_vocab, ve_merges);
            const BpeEncoder encoder(vocab, pretokenizer_arg(pretok));
            const auto mode = *parse_dwc_mode(ve_mode);
            const auto docs = io::read_documents(ve_in);
            std::unordered_map<std::string, std::string> domains;
            if (!ve_domains.empty()) domains = read_domains(ve_domains);
            std::vector<std::size_t> alive;
            for (std::size_t i = 0; i < docs.size(); ++i) {
                if (!docs[i].dropped()) alive.push_back(i);
            }
            std::vector<std::vector<std::uint32_t>> tokens(alive.size());
            parallel_for(alive.size(), workers, [&](std::size_t k) {
                tokens[k] = encoder.encode(compose_training_text(docs[alive[k]], mode));
            });
            io::LineWriter out(ve_out);
            std::uint64_t total = 0;
            for (std::size_t k = 0; k < alive.size(); ++k) {
                const auto& d = docs[alive[k]];
                const auto it = domains.find(d.id);
                out.write_line(
                    Json{{"id", d.id}, {"domain", it == domains.end() ? "general" : it->second}, {"tokens", tokens[k]}}
                        .dump());
                total += tokens[k].size();
            }
            out.close();
            print(Json{{"documents", alive.size()}, {"tokens", total}});
        } else if (*pack_cmd) {
            auto rows = read_token_rows(pack_in);
            if (!pack_manifest.empty()) {
                std::unordered_map<std::string, std::size_t> at;
                for (std::size_t i = 0; i < rows.size(); ++i) at[rows[i].id] = i;
                std::vector<TokenRow> picked;
                io::LineReader in(pack_manifest);
                std::string line;
                while (in.next(line)) {
                    if (line.empty()) continue;
                    const auto id = Json::parse(line).at("doc_id").get<std::string>();
                    const auto it = at.find(id);
                    if (it == at.end()) throw RuntimeError("manifest document '" + id + "' not in " + pack_in);
                    picked.push_back(rows[it->second]);
                }
                rows = std::move(picked);
            }
            std::vector<TokenizedDoc> docs;
            docs.reserve(rows.size());
            for (auto& r : rows) docs.push_back({std::move(r.id), std::move(r.tokens)});
            std::vector<LengthClass> classes;
            if (!mixed.empty()) classes = parse_length_classes(mixed);
            else if (length > 0) classes = {{length, 1.0}};
            else throw ConfigError("pack needs --length or --mixed");
            const auto result = pack_mixed(docs, classes, pack_seed, *parse_pack_order(pack_order), pad_id, workers);
            Json index = Json::array();
            Json stats = Json::array();
            for (std::size_t c = 0; c < classes.size(); ++c) {
                const auto& p = result.packs[c];
                const auto shards = write_shards(pack_out, "L" + std::to_string(classes[c].length), p.sequences, per_shard);
                index.push_back(shard_index_json(shards, classes[c].length, pad_id));
                auto s = p.stats.to_json();
                s["length"] = classes[c].length;
                s["pad_ratio"] = p.stats.pad_ratio();
                s["naive"] = naive_concat_stats(docs, classes[c].length).to_json();
                stats.push_back(s);
            }
            io::write_json(fs::path(pack_out) / "index.json", Json{{"classes", index}});
            print(stats);
        } else if (*mix_cmd) {
            const auto plan = build_stage_plan(io::read_json(plan_path));
            std::vector<PoolDoc> pool;
            io::LineReader in(pool_path);
            std::string line;
            while (in.next(line)) {
                if (line.empty()) continue;
                const auto j = Json::parse(line);
                PoolDoc d;
                d.id = j.contains("doc_id") ? j.at("doc_id").get<std::string>() : j.at("id").get<std::string>();
                d.domain = j.value("domain", std::string("general"));
                const auto& t = j.at("tokens");
                d.tokens = t.is_array() ? t.size() : t.get<std::uint64_t>();
                pool.push_back(std::move(d));
            }
            Json out = Json::array();
            for (const auto& stage : plan.stages) {
                const auto m = sample_stage(stage, pool, derive_seed(mix_seed, "mix"));
                io::write_file(fs::path(mix_out) / (stage.name + ".jsonl"), m.to_jsonl());
                for (const auto& w : m.warnings) spdlog::warn("{}", w);
                out.push_back(m.summary_json());
            }
            print(out);
        } else if (*stats_cmd) {
            Json report;
            try {
                report = io::read_json(report_path);
            } catch (const Error& e) {
                throw RuntimeError(std::string("cannot read report: ") + e.what());
            }
            std::cout << render_report(report);
        }
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
