#include <set>

#include "doctest.h"
#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/io.hpp"
#include "dwc/pipeline.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace dwc;
namespace fs = std::filesystem;

namespace {

Json base_config(const std::string& input, std::uint64_t budget = 20'000) {
    return Json::parse(R"({
        "inputs": [{"path": ")" + input + R"("}],
        "filter": {"lm": {"order": 2, "alpha": 1.0, "train_docs": 500}},
        "vocab": {"num_merges": 200, "train_docs": 300},
        "pack": {"sequences_per_shard": 8},
        "plan": {"stages": [
            {"name": "general", "token_budget": )" + std::to_string(budget) + R"(,
             "domain_weights": {"web": 3, "books": 1}},
            {"name": "dwc", "token_budget": )" + std::to_string(budget / 2) + R"(,
             "domain_weights": {"web": 1}, "dwc_mode": "preamble",
             "sequence_lengths": "512:1,1024:1"}
        ]},
        "seed": 7,
        "workers": 2
    })");
}

std::map<std::string, std::string> checksums(const Json& report) {
    std::map<std::string, std::string> out;
    for (const auto& s : report.at("shards")) out[s.at("file").get<std::string>()] = s.at("sha256").get<std::string>();
    return out;
}

}  // namespace

TEST_CASE("config parsing resolves paths and rejects bad input") {
    testing::TempDir dir;
    dir.write("in.jsonl", "{\"text\": \"hello\"}\n");
    auto j = base_config("in.jsonl");
    j["output_dir"] = "out";
    io::write_json(dir / "run.json", j);
    const auto cfg = load_pipeline_config(dir / "run.json");
    REQUIRE(cfg.inputs.size() == 1);
    CHECK(fs::path(cfg.inputs[0].path) == dir / "in.jsonl");
    CHECK(cfg.output_dir == dir / "out");
    CHECK(cfg.plan.stages.size() == 2);
    CHECK(cfg.seed == 7);
    CHECK(cfg.validate().empty());

    auto bad = j;
    bad["colour"] = 1;
    CHECK_THROWS_AS(pipeline_config_from_json(bad, dir.path()), ConfigError);
    bad = j;
    bad.erase("plan");
    CHECK_THROWS_AS(pipeline_config_from_json(bad, dir.path()), ConfigError);
    bad = j;
    bad["vocab"]["pretokenizer"] = "sentencepiece";
    CHECK_THROWS_AS(pipeline_config_from_json(bad, dir.path()), ConfigError);
    bad = j;
    bad["dedup"] = Json{{"levels", {"url", "semantic"}}};
    CHECK_FALSE(pipeline_config_from_json(bad, dir.path()).validate().empty());
    CHECK_THROWS_AS(load_pipeline_config(dir / "missing.json"), ConfigError);

    bad = j;
    bad["inputs"][0]["path"] = "nowhere.jsonl";
    auto missing = pipeline_config_from_json(bad, dir.path());
    CHECK_FALSE(missing.validate().empty());
    CHECK_THROWS_AS(run_pipeline(missing), ConfigError);
    CHECK_FALSE(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("empty ingest set gives zero counts and no shards") {
    testing::TempDir dir;
    auto j = base_config("x");
    j["inputs"] = Json::array();
    auto cfg = pipeline_config_from_json(j, dir.path());
    cfg.output_dir = dir / "out";
    const auto report = run_pipeline(cfg);
    for (const auto& p : report.at("phases")) {
        CHECK(p.at("in") == 0);
        CHECK(p.at("out") == 0);
    }
    CHECK(report.at("shards").empty());
    CHECK_FALSE(fs::exists(dir / "out" / "shards" / "general"));
    CHECK(report.at("warnings").size() >= 2);
    CHECK(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("1,000-document run conserves counts and writes every artifact") {
    testing::TempDir dir;
    testing::SyntheticCorpus synth(11);
    synth.write(dir / "corpus.jsonl", {});
    auto cfg = pipeline_config_from_json(base_config("corpus.jsonl"), dir.path());
    cfg.output_dir = dir / "out";
    const auto report = run_pipeline(cfg);

    const auto& phases = report.at("phases");
    REQUIRE(phases.size() == 9);
    CHECK(phases[0].at("in") == 1000);
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const auto& p = phases[i];
        CHECK(p.at("in").get<std::uint64_t>() == p.at("out").get<std::uint64_t>() + p.at("dropped").get<std::uint64_t>());
        // Document phases feed each other directly.
        if (i >= 1 && i <= 7) CHECK(p.at("in") == phases[i - 1].at("out"));
    }
    std::uint64_t dropped = 0;
    for (std::size_t i = 1; i <= 4; ++i) dropped += phases[i].at("dropped").get<std::uint64_t>();
    std::uint64_t histogram = 0;
    for (const auto& [k, v] : report.at("drop_reasons").items()) histogram += v.get<std::uint64_t>();
    CHECK(histogram == dropped + phases[0].at("dropped").get<std::uint64_t>());

    // The corpus plants every defect class.
    CHECK(report.at("dedup").at("removed").at("exact").get<int>() > 0);
    CHECK(report.at("dedup").at("removed").at("near").get<int>() > 0);
    CHECK(report.at("dedup").at("removed").at("url").get<int>() > 0);
    CHECK(report.at("drop_reasons").contains("filter:low_quality"));
    CHECK(report.at("drop_reasons").contains("filter:invalid_context"));
    CHECK(report.at("filter").at("dropped_safety").get<int>() > 0);

    const auto out = dir / "out";
    for (const char* f : {"ingest", "clean", "filter", "annotate", "dedup"}) {
        const auto docs = io::read_documents(out / "intermediate" / (std::string(f) + ".jsonl"));
        CHECK(docs.size() == 1000);
    }
    CHECK(fs::exists(out / "intermediate" / "dedup_report.json"));
    CHECK(fs::exists(out / "vocab" / "vocab.txt"));
    CHECK(fs::exists(out / "manifests" / "dwc.jsonl"));
    CHECK(fs::exists(out / "shards" / "dwc" / "index.json"));
    CHECK(io::read_json(out / "report.json") == report);

    for (const auto& [file, sum] : checksums(report)) CHECK(sha256_file((out / file).string()) == sum);

    // Preamble stage shards decode to texts that start with a tag line or header.
    const auto vocab = Vocabulary::load(out / "vocab" / "vocab.txt");
    const auto idx = io::read_json(out / "shards" / "dwc" / "index.json");
    const auto first = idx.at("classes")[0].at("shards")[0].at("file").get<std::string>();
    const auto seqs = read_shard(out / "shards" / "dwc" / first);
    REQUIRE_FALSE(seqs.empty());
    const auto& sp = seqs[0].spans.at(0);
    std::string decoded;
    for (auto t = sp.start; t < sp.end; ++t) decoded += vocab.token(seqs[0].tokens[t]);
    if (sp.chunk_index == 0) CHECK(split_training_text(decoded).body.size() < decoded.size());

    const auto& mix = report.at("mix")[0];
    CHECK(mix.at("tokens").get<std::uint64_t>() >= 20'000);
    CHECK(std::abs(mix.at("shares").at("web").get<double>() - 0.75) < 0.05);
    CHECK(report.at("pack").at("total").at("pad_ratio").get<double>() < 0.5);

    const auto text = render_report(report);
    CHECK(text.find("pad ratio:") != std::string::npos);
    CHECK(text.find("dedup") != std::string::npos);
}

TEST_CASE("reruns and worker counts give identical shards") {
    testing::TempDir dir;
    testing::SyntheticCorpus synth(12);
    synth.write(dir / "corpus.jsonl", {.documents = 600});
    auto cfg = pipeline_config_from_json(base_config("corpus.jsonl"), dir.path());

    cfg.output_dir = dir / "a";
    const auto a = run_pipeline(cfg, {.workers = 1});
    cfg.output_dir = dir / "b";
    const auto b = run_pipeline(cfg, {.workers = 8});
    const auto c = run_pipeline(cfg, {.workers = 8});
    CHECK_FALSE(checksums(a).empty());
    CHECK(checksums(a) == checksums(b));
    CHECK(checksums(b) == checksums(c));
    CHECK(io::read_file(dir / "a" / "intermediate" / "dedup.jsonl") ==
          io::read_file(dir / "b" / "intermediate" / "dedup.jsonl"));
    CHECK(io::read_file(dir / "a" / "manifests" / "general.jsonl") ==
          io::read_file(dir / "b" / "manifests" / "general.jsonl"));

    cfg.seed = 8;
    cfg.output_dir = dir / "d";
    CHECK(checksums(run_pipeline(cfg)) != checksums(a));

    cfg.output_dir = dir / "e";
    run_pipeline(cfg, {.keep_intermediate = false});
    CHECK_FALSE(fs::exists(dir / "e" / "intermediate"));
    CHECK(fs::exists(dir / "e" / "report.json"));
}

TEST_CASE("a failing phase aborts with its name and leaves a partial report") {
    testing::TempDir dir;
    // The vocabulary only learns symbols of the first document, so the second cannot be encoded.
    dir.write("corpus.jsonl", "{\"text\": \"the aaa of bbb\"}\n{\"text\": \"the zzz of qqq\"}\n");
    dir.write("vocab.txt", "a\nb\n");
    auto j = base_config("corpus.jsonl");
    j["vocab"]["base"] = "vocab.txt";
    j["vocab"]["train_docs"] = 1;
    auto cfg = pipeline_config_from_json(j, dir.path());
    cfg.output_dir = dir / "out";
    try {
        run_pipeline(cfg);
        FAIL("expected an error");
    } catch (const RuntimeError& e) {
        CHECK(std::string(e.what()).starts_with("encode: "));
    }
    const auto partial = io::read_json(dir / "out" / "report.json");
    CHECK(partial.at("error").at("phase") == "encode");
    CHECK(partial.at("phases").size() == 6);
    CHECK(render_report(partial).find("error in phase encode") != std::string::npos);
}

TEST_CASE("render_report") {
    const auto r = Json::parse(R"({"seed": 1, "workers": 1,
        "phases": [{"name": "ingest", "in": 3, "out": 2, "dropped": 1, "seconds": 0.5}],
        "pack": {"total": {"pad_ratio": 0.125}, "stages": [{"stage": "s", "sequences": 4,
                 "pad_ratio": 0.125, "truncated_documents": 1}]},
        "drop_reasons": {"ingest:invalid_json": 1},
        "warnings": ["mix: stage 's': empty pool"]})");
    const auto text = render_report(r);
    CHECK(text.find("pad ratio: 0.1250") != std::string::npos);
    CHECK(text.find("warnings:\n  - mix: stage 's': empty pool") != std::string::npos);
    CHECK(text.find("ingest:invalid_json") != std::string::npos);
    CHECK_THROWS_AS(render_report(Json::parse("[1,2]")), RuntimeError);
    CHECK_THROWS_AS(render_report(Json::parse(R"({"phases": [{"name": 3}]})")), RuntimeError);
}

TEST_CASE("phase helpers keep dropped documents and only touch survivors") {
    std::vector<Document> docs(3);
    docs[0].id = "a";
    docs[0].text = "  Hello   world.  ";
    docs[1].id = "b";
    docs[1].text = "\xF0\x9F\x98\x80";
    docs[2].id = "c";
    docs[2].text = "Dropped already.";
    docs[2].verdicts.push_back({FilterStage::filter, Decision::drop, "x", std::nullopt});
    const auto stats = clean_documents(docs, CleanOptions{}, CleanRuleSet{}, 4);
    CHECK(docs[0].text == " Hello world. ");
    CHECK(docs[1].dropped());
    CHECK(stats.emptied == 1);
    CHECK(docs[2].text == "Dropped already.");
    CHECK(count_alive(docs) == 1);
}
