// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/core.h>

#include "dwc/annotate.hpp"
#include "dwc/dedup.hpp"
#include "dwc/filter.hpp"
#include "dwc/hash.hpp"
#include "dwc/mix.hpp"
#include "dwc/pack.hpp"
#include "dwc/pipeline.hpp"
#include "dwc/random.hpp"
#include "dwc/vocab.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace dwc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome packing_oracle() {
    Rng rng(1001);
    int identical = 0;
    double fast = 0;
    std::size_t max_items = 0;
    for (int round = 0; round < 1000; ++round) {
        const std::size_t L = 1 + rng.below(512);
        const std::size_t n = rng.below(10'001);
        std::vector<std::size_t> lengths(n);
        // Mix of short items and near-full chunks.
        for (auto& l : lengths) l = 1 + rng.below(rng.below(2) ? L : std::max<std::size_t>(1, L / 4));
        const auto order = rng.below(4) ? PackOrder::size_desc : PackOrder::input;
        const auto t0 = Clock::now();
        const auto got = best_fit_assign(lengths, L, order);
        fast += seconds_since(t0);
        identical += got == testing::linear_best_fit(lengths, L, order);
        max_items = std::max(max_items, n);
    }
    return {identical == 1000 && fast < 60.0,
            fmt::format("{}/1000 identical to the linear scan (up to {} chunks), segment tree {:.2f} s < 60 s",
                        identical, max_items, fast)};
}

std::vector<TokenizedDoc> heavy_tailed_corpus(Rng& rng, std::size_t L) {
    // Log-uniform lengths over [1, 4L]: many short documents, a tail longer than L.
    const std::size_t n = 200 + rng.below(1800);
    std::vector<TokenizedDoc> docs(n);
    const double hi = std::log(4.0 * static_cast<double>(L));
    for (std::size_t i = 0; i < n; ++i) {
        const auto len = static_cast<std::size_t>(std::exp(rng.uniform() * hi));
        docs[i].id = "d" + std::to_string(i);
        docs[i].tokens.assign(std::max<std::size_t>(1, len), static_cast<std::uint32_t>(i + 1));
    }
    return docs;
}

Outcome packing_quality() {
    Rng rng(1002);
    int splits_ok = 0;
    int pad_ok = 0;
    double worst_gap = 0;
    for (int round = 0; round < 100; ++round) {
        const std::size_t L = 256u << rng.below(4);
        const auto docs = heavy_tailed_corpus(rng, L);
        const auto bfp = pack_documents(docs, L).stats;
        const auto naive = naive_concat_stats(docs, L);
        splits_ok += bfp.split_documents <= naive.split_documents;
        pad_ok += bfp.pad_ratio() <= naive.pad_ratio();
        worst_gap = std::max(worst_gap, bfp.pad_ratio() - naive.pad_ratio());
    }
    return {splits_ok == 100 && pad_ok >= 95,
            fmt::format("split documents <= naive in {}/100, pad ratio <= naive in {}/100 (need >= 95), "
                        "worst excess {:.5f}",
                        splits_ok, pad_ok, worst_gap)};
}

std::vector<std::uint64_t> sorted_set(std::vector<std::uint64_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// Two sets with `shared` common elements and `unique` private ones each.
std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> set_pair(Rng& rng, std::size_t shared,
                                                                          std::size_t unique) {
    std::vector<std::uint64_t> a, b;
    for (std::size_t i = 0; i < shared; ++i) {
        const auto x = rng.next();
        a.push_back(x);
        b.push_back(x);
    }
    for (std::size_t i = 0; i < unique; ++i) a.push_back(rng.next());
    for (std::size_t i = 0; i < unique; ++i) b.push_back(rng.next());
    return {sorted_set(std::move(a)), sorted_set(std::move(b))};
}

double jaccard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    std::vector<std::uint64_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    return static_cast<double>(inter.size()) / static_cast<double>(a.size() + b.size() - inter.size());
}

Outcome minhash_fidelity() {
    Rng rng(1003);
    double err = 0;
    for (int i = 0; i < 200; ++i) {
        // Fresh hash family per pair so errors average over permutations too.
        MinHashParams p;
        p.seed = rng.next();
        const MinHasher h(p);
        const std::size_t shared = rng.below(201);
        const std::size_t unique = 1 + rng.below(100);
        const auto [a, b] = set_pair(rng, shared, unique);
        // Every other pair is built from real text shingles.
        double est, truth;
        if (i % 2) {
            std::vector<std::string> words;
            for (std::size_t k = 0; k < 60 + shared; ++k) words.push_back(testing::random_word(rng, 2, 6));
            std::string ta, tb;
            for (std::size_t k = 0; k < words.size(); ++k) {
                ta += words[k] + " ";
                tb += (k % (2 + unique % 9) == 0 ? testing::random_word(rng, 7, 9) : words[k]) + " ";
            }
            const auto sa = h.shingles(ta), sb = h.shingles(tb);
            truth = jaccard(sa, sb);
            est = MinHasher::similarity(h.signature_of_set(sa), h.signature_of_set(sb));
        } else {
            truth = jaccard(a, b);
            est = MinHasher::similarity(h.signature_of_set(a), h.signature_of_set(b));
        }
        err += std::abs(est - truth);
    }
    const double mean_err = err / 200.0;

    const MinHashParams defaults;
    bool curve_ok = true;
    std::string curve;
    // Union of 100 elements split to hit each similarity exactly.
    const std::pair<double, std::size_t> levels[] = {{0.5, 50}, {0.7, 70}, {0.9, 90}};
    for (const auto& [s, shared] : levels) {
        int detected = 0;
        for (int i = 0; i < 500; ++i) {
            MinHashParams p;
            p.seed = rng.next();
            const MinHasher h(p);
            const auto [a, b] = set_pair(rng, shared, (100 - shared) / 2);
            detected += h.share_band(h.signature_of_set(a), h.signature_of_set(b));
        }
        const double rate = detected / 500.0;
        const double expected = 1 - std::pow(1 - std::pow(s, static_cast<double>(defaults.rows)),
                                             static_cast<double>(defaults.bands));
        curve_ok = curve_ok && std::abs(rate - expected) <= 0.1;
        curve += fmt::format(", s={} rate {:.3f} vs {:.4f}", s, rate, expected);
    }
    return {mean_err <= 0.06 && curve_ok,
            fmt::format("mean |estimate - Jaccard| {:.4f} <= 0.06 over 200 pairs{}", mean_err, curve)};
}

Outcome bpe_oracle() {
    Rng rng(1004);
    static const char* kAlphabets[] = {"ab", "abc", "abcd", "aab ", "xyz. ", "low er"};
    int identical = 0;
    const int rounds = 500;
    for (int round = 0; round < rounds; ++round) {
        const std::string alpha = kAlphabets[rng.below(std::size(kAlphabets))];
        std::vector<std::string> texts;
        std::size_t symbols = 0;
        const std::size_t budget = 1 + rng.below(1000);
        while (symbols < budget) {
            const std::size_t len = std::min<std::size_t>(1 + rng.below(12), budget - symbols);
            std::string t;
            for (std::size_t i = 0; i < len; ++i) t += alpha[rng.below(alpha.size())];
            symbols += len;
            texts.push_back(t);
        }
        const auto p = rng.below(2) ? Pretokenizer::byte : Pretokenizer::whitespace;
        const std::size_t merges = rng.below(21);
        const auto counts = count_pieces(texts, p);
        identical += train_bpe(counts, merges, p).merges == testing::oracle_bpe(counts, merges, p);
    }

    // Desk-scale merge: a base that already holds some of the learned tokens.
    std::vector<std::string> corpus;
    for (int i = 0; i < 200; ++i) corpus.push_back(testing::random_word(rng, 2, 9) + " " + testing::random_word(rng, 2, 9));
    const auto learned = train_bpe(corpus, 300, Pretokenizer::byte);
    auto base_tokens = Vocabulary::byte_level().tokens();
    for (std::size_t i = 0; i < learned.entries.size(); i += 3) {
        if (std::find(base_tokens.begin(), base_tokens.end(), learned.entries[i]) == base_tokens.end()) {
            base_tokens.push_back(learned.entries[i]);
        }
    }
    const Vocabulary base(base_tokens);
    const auto merged = merge_vocab(base, learned);
    const bool desk = merged.vocab.size() == base.size() + merged.learned - merged.collisions && merged.collisions > 0;
    const bool paper = kQwenBaseVocabSize == 151'643 && kLearnedVocabSize == 15'901 &&
                       kMergedVocabSize == 167'544 && kQwenBaseVocabSize + kLearnedVocabSize == kMergedVocabSize;
    return {identical == rounds && desk && paper,
            fmt::format("{}/{} trainer runs equal the oracle; desk merge {} + {} - {} = {}; {} + {} = {}", identical,
                        rounds, base.size(), merged.learned, merged.collisions, merged.vocab.size(),
                        kQwenBaseVocabSize, kLearnedVocabSize, kMergedVocabSize)};
}

Outcome perplexity_closed_form() {
    Rng rng(1005);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> corpus;
        const std::size_t types = 1 + rng.below(60);
        for (int i = 0; i < 100; ++i) corpus.push_back("t" + std::to_string(rng.below(types)));
        std::map<std::string, double> counts;
        for (const auto& t : corpus) counts[t] += 1;
        double h = 0;
        for (const auto& [w, c] : counts) h -= (c / 100.0) * std::log(c / 100.0);
        const auto lm = NGramLM::train(std::vector<std::vector<std::string>>{corpus}, 1, 0.0);
        worst = std::max(worst, std::abs(*lm.perplexity(corpus) - std::exp(h)));
    }
    bool uniform_ok = true;
    for (std::size_t v = 1; v <= 1000; v += 37) {
        std::vector<std::string> vocab;
        for (std::size_t i = 0; i < v; ++i) vocab.push_back("w" + std::to_string(i));
        const auto lm = NGramLM::uniform(vocab);
        std::vector<std::string> text;
        for (std::size_t i = 0; i < 100; ++i) text.push_back(vocab[rng.below(v)]);
        // The unknown-word slot counts as one more vocabulary entry.
        uniform_ok = uniform_ok && *lm.perplexity(text) == static_cast<double>(lm.vocab_size()) &&
                     lm.vocab_size() == v + 1;
    }
    return {worst <= 1e-9 && uniform_ok,
            fmt::format("max |ppl - exp(H)| {:.2e} <= 1e-9 over 50 unigram corpora; uniform ppl == |V| {}", worst,
                        uniform_ok ? "in every case" : "violated")};
}

Outcome dwc_round_trip() {
    Rng rng(1006);
    int failures = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto ctx = testing::random_context(rng);
        try {
            if (!(parse_context(serialize_context(ctx)) == ctx)) ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    ContextRecord news;
    news.category_primary = "News";
    news.category_secondary = "Politics";
    const auto tag = serialize_context(news);
    const bool exact = tag == "[News][Politics]\n\n";
    return {failures == 0 && exact, fmt::format("{} failures in 1000 random records; tag line {}", failures,
                                                exact ? "\"[News][Politics]\" byte-exact" : "mismatch")};
}

Outcome mix_calibration() {
    Rng rng(1007);
    StageSpec stage;
    stage.name = "general";
    stage.token_budget = 2'000'000;
    stage.domain_weights = {{"web", 3}, {"code", 1}};
    std::vector<PoolDoc> pool;
    for (int i = 0; i < 20'000; ++i) {
        pool.push_back({"d" + std::to_string(i), i % 2 ? "web" : "code", 50 + rng.below(400)});
    }
    const auto shares = sample_stage(stage, pool, 7).shares();
    const double web = shares.at("web");
    const bool shares_ok = std::abs(web - 0.75) <= 0.01 && std::abs(shares.at("code") - 0.25) <= 0.01;

    // 62M-token schedule over a pool large enough for the biggest stage.
    const auto plan = paper_stage_plan(62'000'000, {{"web", 1}});
    std::vector<PoolDoc> big;
    std::uint64_t max_doc = 0;
    for (int i = 0; i < 100'000; ++i) {
        big.push_back({"b" + std::to_string(i), "web", 100 + rng.below(1800)});
        max_doc = std::max(max_doc, big.back().tokens);
    }
    bool stages_ok = plan.stages.size() == 3;
    std::string detail;
    const auto budgets = apportion(62'000'000, kPaperStageProportions);
    for (std::size_t s = 0; s < plan.stages.size(); ++s) {
        const auto m = sample_stage(plan.stages[s], big, derive_seed(7, plan.stages[s].name));
        const auto diff = static_cast<std::int64_t>(m.total_tokens) - static_cast<std::int64_t>(budgets[s]);
        stages_ok = stages_ok && plan.stages[s].token_budget == budgets[s] &&
                    static_cast<std::uint64_t>(std::abs(diff)) <= max_doc;
        detail += fmt::format(", {} {}/{}", plan.stages[s].name, m.total_tokens, budgets[s]);
    }
    return {shares_ok && stages_ok,
            fmt::format("3:1 plan realized web share {:.4f} (+-0.01){} (max doc {} tokens)", web, detail, max_doc)};
}

Json pipeline_config(const fs::path& input, std::uint64_t budget, std::size_t workers) {
    Json plan = {
        {"stages",
         {{{"name", "general"}, {"token_budget", budget}, {"domain_weights", {{"web", 3}, {"books", 1}}}},
          {{"name", "dwc_safety"},
           {"token_budget", budget / 3},
           {"domain_weights", {{"web", 1}, {"books", 1}}},
           {"dwc_mode", "preamble"}},
          {{"name", "long_context"},
           {"token_budget", budget / 20},
           {"domain_weights", {{"books", 1}}},
           {"sequence_lengths", "8192:1,16384:1"}}}}};
    return {{"inputs", {{{"path", input.string()}}}},
            {"filter", {{"lm", {{"order", 2}, {"alpha", 1.0}, {"train_docs", 2000}}}}},
            {"vocab", {{"num_merges", 1000}, {"train_docs", 5000}}},
            {"plan", plan},
            {"seed", 20240601},
            {"workers", workers}};
}

std::map<std::string, std::string> checksums(const Json& report) {
    std::map<std::string, std::string> out;
    for (const auto& s : report.at("shards")) out[s.at("file").get<std::string>()] = s.at("sha256").get<std::string>();
    return out;
}

Outcome determinism() {
    testing::TempDir dir;
    testing::SyntheticCorpus(1008).write(dir / "corpus.jsonl", {.documents = 10'000});
    auto cfg = pipeline_config_from_json(pipeline_config(dir / "corpus.jsonl", 1'000'000, 4), dir.path());
    cfg.output_dir = dir / "a";
    const auto a = run_pipeline(cfg, {.workers = 1});
    cfg.output_dir = dir / "b";
    const auto b = run_pipeline(cfg, {.workers = 1});
    cfg.output_dir = dir / "c";
    const auto c = run_pipeline(cfg, {.workers = 8});
    bool manifests = true;
    for (const auto& stage : cfg.plan.stages) {
        const auto m = "manifests/" + stage.name + ".jsonl";
        manifests = manifests && io::read_file(dir / "a" / m) == io::read_file(dir / "c" / m);
    }
    const auto sums = checksums(a);
    return {!sums.empty() && sums == checksums(b) && sums == checksums(c) && manifests,
            fmt::format("{} shard files; rerun {}; workers 1 vs 8 {}", sums.size(),
                        sums == checksums(b) ? "byte-identical" : "differs",
                        sums == checksums(c) && manifests ? "identical" : "differs")};
}

Outcome throughput() {
    testing::TempDir dir;
    const std::uint64_t target = 100ull * 1000 * 1000;
    const auto stats = testing::SyntheticCorpus(1009).write(dir / "corpus.jsonl", {.target_bytes = target});
    const auto workers = std::max(1u, std::thread::hardware_concurrency());
    auto cfg = pipeline_config_from_json(pipeline_config(dir / "corpus.jsonl", 20'000'000, workers), dir.path());
    cfg.output_dir = dir / "out";
    const auto t0 = Clock::now();
    const auto report = run_pipeline(cfg);
    const double secs = seconds_since(t0);
    return {secs < 600.0 && !report.at("shards").empty(),
            fmt::format("{:.1f} MB in {} documents, {} worker(s), {:.1f} s < 600 s",
                        static_cast<double>(stats.text_bytes) / 1e6, stats.documents, workers, secs)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"packing oracle equivalence", packing_oracle},
        {"packing quality", packing_quality},
        {"minhash fidelity", minhash_fidelity},
        {"bpe oracle equivalence", bpe_oracle},
        {"perplexity closed form", perplexity_closed_form},
        {"dwc round trip", dwc_round_trip},
        {"mix calibration", mix_calibration},
        {"end-to-end determinism", determinism},
        {"throughput", throughput},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!only.empty() && !only.contains(n)) continue;
        Outcome r;
        const auto t0 = Clock::now();
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what()};
        }
        failed += !r.pass;
        fmt::print("{} {}. {}: {} [{:.1f} s]\n", r.pass ? "PASS" : "FAIL", n, criteria[i].first, r.detail,
                   seconds_since(t0));
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
