#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dwc/error.hpp"
#include "dwc/pipeline.hpp"

namespace py = pybind11;
using namespace dwc;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them.
std::string dump(const Json& j) { return j.dump(); }

// Byte-level tokens are not always valid UTF-8, so tokens travel as bytes.
py::list bytes_list(const std::vector<std::string>& v) {
    py::list out;
    for (const auto& s : v) out.append(py::bytes(s));
    return out;
}

py::list merge_list(const std::vector<MergeRule>& v) {
    py::list out;
    for (const auto& [l, r] : v) out.append(py::make_tuple(py::bytes(l), py::bytes(r)));
    return out;
}

Json parse(const std::string& s) {
    try {
        return Json::parse(s);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid JSON argument: ") + e.what());
    }
}

Pretokenizer pretokenizer_of(const std::string& s) {
    const auto p = parse_pretokenizer(s);
    if (!p) throw ConfigError("unknown pretokenizer '" + s + "'");
    return *p;
}

PackOrder order_of(const std::string& s) {
    const auto o = parse_pack_order(s);
    if (!o) throw ConfigError("unknown pack order '" + s + "'");
    return *o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the DWC curation pipeline";

    // Translators registered later are tried first, so derived types go last.
    const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<RuntimeError>(m, "PipelineError", base.ptr());

    m.attr("QWEN_BASE_VOCAB_SIZE") = kQwenBaseVocabSize;
    m.attr("LEARNED_VOCAB_SIZE") = kLearnedVocabSize;
    m.attr("MERGED_VOCAB_SIZE") = kMergedVocabSize;

    // Text and documents.
    m.def("detect_language", [](const std::string& text) {
        const auto t = detect_language(text);
        return py::make_tuple(t.tag, t.confidence);
    });
    m.def(
        "clean_text",
        [](const std::string& text, const std::string& options) {
            const auto r = clean_general(text, clean_options_from_json(parse(options)));
            return py::make_tuple(r.text, dump(r.counts.to_json()));
        },
        py::arg("text"), py::arg("options") = "{}");
    m.def("canonicalize_url", [](const std::string& url) {
        const auto c = canonicalize_url(url);
        return py::make_tuple(c.url, c.ok);
    });
    m.def("serialize_context", [](const std::string& context) { return serialize_context(parse(context).get<ContextRecord>()); });
    m.def("parse_context", [](const std::string& preamble) {
        Json j = parse_context(preamble);
        return dump(j);
    });
    m.def("compose_training_text", [](const std::string& document, const std::string& mode) {
        const auto d = parse_dwc_mode(mode);
        if (!d) throw ConfigError("unknown dwc mode '" + mode + "'");
        return compose_training_text(decode_document(document), *d);
    });

    // Dedup.
    py::class_<MinHasher>(m, "MinHasher")
        .def(py::init([](std::size_t shingle_size, std::size_t num_perms, std::size_t bands, std::size_t rows,
                         double threshold, std::uint64_t seed) {
                 MinHashParams p;
                 p.shingle_size = shingle_size;
                 p.num_perms = num_perms;
                 p.bands = bands;
                 p.rows = rows;
                 p.threshold = threshold;
                 p.seed = seed;
                 return MinHasher(p);
             }),
             py::arg("shingle_size") = 5, py::arg("num_perms") = 128, py::arg("bands") = 16, py::arg("rows") = 8,
             py::arg("threshold") = 0.8, py::arg("seed") = 0x5eed)
        .def("shingles", &MinHasher::shingles)
        .def("signature", &MinHasher::signature)
        .def("share_band", &MinHasher::share_band)
        .def_static("similarity", &MinHasher::similarity);
    m.def(
        "dedup",
        [](const std::vector<std::string>& documents, const std::vector<std::string>& levels, const MinHasher& hasher,
           std::size_t workers) {
            std::vector<Document> docs;
            docs.reserve(documents.size());
            for (const auto& d : documents) docs.push_back(decode_document(d));
            DedupReport report;
            {
                py::gil_scoped_release release;
                report = dedup_documents(docs, levels, hasher, workers);
            }
            return dump(report.to_json());
        },
        py::arg("documents"), py::arg("levels"), py::arg("hasher"), py::arg("workers") = 1);

    // Vocabulary.
    m.def(
        "train_bpe",
        [](const std::vector<std::string>& texts, std::size_t num_merges, const std::string& pretokenizer) {
            auto r = train_bpe(texts, num_merges, pretokenizer_of(pretokenizer));
            return py::make_tuple(merge_list(r.merges), bytes_list(r.entries));
        },
        py::arg("texts"), py::arg("num_merges"), py::arg("pretokenizer") = "byte");

    py::class_<Vocabulary>(m, "Vocabulary")
        .def(py::init<std::vector<std::string>>())
        .def_static("byte_level", &Vocabulary::byte_level)
        .def_static("load", &Vocabulary::load)
        .def("load_merges", &Vocabulary::load_merges)
        .def("save", &Vocabulary::save)
        .def("save_merges", &Vocabulary::save_merges)
        .def("__len__", &Vocabulary::size)
        .def_property_readonly("tokens", [](const Vocabulary& v) { return bytes_list(v.tokens()); })
        .def_property_readonly("merges", [](const Vocabulary& v) { return merge_list(v.merges()); })
        .def("id_of", [](const Vocabulary& v, const std::string& t) { return v.id_of(t); })
        .def("token", [](const Vocabulary& v, std::uint32_t id) { return py::bytes(v.token(id)); });
    m.def("merge_vocab", [](const Vocabulary& base, const std::vector<MergeRule>& merges,
                            const std::vector<std::string>& entries) {
        auto r = merge_vocab(base, BpeResult{merges, entries});
        return py::make_tuple(std::move(r.vocab), r.learned, r.collisions);
    });

    py::class_<BpeEncoder>(m, "Encoder")
        .def(py::init([](const Vocabulary& v, const std::string& p) { return BpeEncoder(v, pretokenizer_of(p)); }),
             py::arg("vocab"), py::arg("pretokenizer") = "byte", py::keep_alive<1, 2>())
        .def("encode", &BpeEncoder::encode)
        .def("decode", [](const BpeEncoder& e, const std::vector<std::uint32_t>& ids) {
            return py::bytes(e.decode(ids));
        });

    // Packing and mixing.
    m.def(
        "best_fit_assign",
        [](const std::vector<std::size_t>& lengths, std::size_t L, const std::string& order) {
            return best_fit_assign(lengths, L, order_of(order));
        },
        py::arg("lengths"), py::arg("length"), py::arg("order") = "size_desc");
    m.def(
        "pack",
        [](const std::vector<std::pair<std::string, std::vector<std::uint32_t>>>& documents, std::size_t L,
           const std::string& order, std::uint32_t pad_id) {
            std::vector<TokenizedDoc> docs;
            for (const auto& [id, t] : documents) docs.push_back({id, t});
            const auto r = pack_documents(docs, L, order_of(order), pad_id);
            py::list seqs;
            for (const auto& s : r.sequences) {
                py::list spans;
                for (const auto& sp : s.spans) spans.append(py::make_tuple(sp.doc_id, sp.chunk_index, sp.start, sp.end));
                seqs.append(py::make_tuple(s.tokens, spans, s.pad_count));
            }
            auto stats = r.stats.to_json();
            stats["pad_ratio"] = r.stats.pad_ratio();
            auto naive = naive_concat_stats(docs, L);
            stats["naive"] = naive.to_json();
            stats["naive"]["pad_ratio"] = naive.pad_ratio();
            return py::make_tuple(seqs, dump(stats));
        },
        py::arg("documents"), py::arg("length"), py::arg("order") = "size_desc", py::arg("pad_id") = 0);
    m.def("apportion", [](std::uint64_t total, const std::vector<std::uint64_t>& w) { return apportion(total, w); });
    m.def("build_stage_plan", [](const std::string& config) { return dump(to_json(build_stage_plan(parse(config)))); });
    m.def("sample_stage", [](const std::string& plan, const std::string& stage,
                             const std::vector<std::tuple<std::string, std::string, std::uint64_t>>& pool,
                             std::uint64_t seed) {
        const auto p = build_stage_plan(parse(plan));
        const auto it = std::find_if(p.stages.begin(), p.stages.end(), [&](const auto& s) { return s.name == stage; });
        if (it == p.stages.end()) throw ConfigError("no stage named '" + stage + "'");
        std::vector<PoolDoc> docs;
        for (const auto& [id, domain, tokens] : pool) docs.push_back({id, domain, tokens});
        const auto man = sample_stage(*it, docs, seed);
        std::vector<std::string> ids;
        for (const auto& e : man.entries) ids.push_back(e.doc_id);
        return py::make_tuple(ids, dump(man.summary_json()));
    });

    // Whole runs.
    m.def(
        "run_pipeline",
        [](const std::string& config_path, std::optional<std::size_t> workers, std::optional<bool> keep_intermediate,
           std::optional<std::filesystem::path> output_dir) {
            const auto cfg = load_pipeline_config(config_path);
            Json report;
            {
                py::gil_scoped_release release;
                report = run_pipeline(cfg, RunOptions{workers, keep_intermediate, output_dir});
            }
            return dump(report);
        },
        py::arg("config_path"), py::arg("workers") = py::none(), py::arg("keep_intermediate") = py::none(),
        py::arg("output_dir") = py::none());
    m.def("render_report", [](const std::string& report) { return render_report(parse(report)); });
}
