#include <set>

#include "doctest.h"
#include "dwc/error.hpp"
#include "dwc/mix.hpp"
#include "dwc/random.hpp"

using namespace dwc;

namespace {

std::vector<PoolDoc> pool_of(std::size_t n, const std::string& domain, std::uint64_t tokens, std::size_t offset = 0) {
    std::vector<PoolDoc> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({domain + std::to_string(offset + i), domain, tokens});
    return out;
}

StageSpec stage(std::uint64_t budget, std::map<std::string, double> weights) {
    StageSpec s;
    s.name = "s";
    s.token_budget = budget;
    s.domain_weights = std::move(weights);
    return s;
}

}  // namespace

TEST_CASE("apportion") {
    CHECK(apportion(62'000'000, kPaperStageProportions) ==
          std::vector<std::uint64_t>{45'000'000, 15'000'000, 2'000'000});
    CHECK(apportion(10, std::vector<std::uint64_t>{1, 1, 1}) == std::vector<std::uint64_t>{4, 3, 3});
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
        const auto total = rng.below(1'000'000'000);
        const std::vector<std::uint64_t> w{1 + rng.below(9000), 1 + rng.below(9000), 1 + rng.below(9000)};
        const auto parts = apportion(total, w);
        CHECK(parts[0] + parts[1] + parts[2] == total);
        const double sum = static_cast<double>(w[0] + w[1] + w[2]);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(std::abs(static_cast<double>(parts[k]) - static_cast<double>(total) * w[k] / sum) < 1.0 + 1e-6);
        }
    }
}

TEST_CASE("build_stage_plan") {
    const auto plan = build_stage_plan(Json{{"template", "paper"}, {"total_tokens", 62'000'000}});
    REQUIRE(plan.stages.size() == 3);
    CHECK(plan.stages[0].token_budget == 45'000'000);
    CHECK(plan.stages[1].token_budget == 15'000'000);
    CHECK(plan.stages[2].token_budget == 2'000'000);
    CHECK(plan.stages[1].dwc_mode == DwcMode::preamble);
    CHECK(plan.stages[2].sequence_lengths.size() == 3);
    CHECK(build_stage_plan(to_json(plan)).stages.size() == 3);

    const auto one = build_stage_plan(Json::parse(R"({"stages":[{"name":"only","token_budget":100,
        "domain_weights":{"web":1}}]})"));
    CHECK(one.stages.size() == 1);
    CHECK(one.stages[0].sequence_lengths.at(0).length == 4096);

    CHECK_THROWS_AS(build_stage_plan(Json::parse(R"({"stages":[{"name":"a","token_budget":1,"domain_weights":{"x":1}},
        {"name":"a","token_budget":1,"domain_weights":{"x":1}}]})")),
                    ConfigError);
    CHECK_THROWS_AS(build_stage_plan(Json::parse(R"({"stages":[{"name":"a","token_budget":0,"domain_weights":{"x":1}}]})")),
                    ConfigError);
    CHECK_THROWS_AS(build_stage_plan(Json::parse(R"({"stages":[{"name":"a","token_budget":5,"domain_weights":{"x":0}}]})")),
                    ConfigError);
    CHECK_THROWS_AS(build_stage_plan(Json::parse(R"({"stages":[{"name":"a","token_budget":5,"domain_weights":{"x":1},
        "dwc_mode":"tags"}]})")),
                    ConfigError);
    CHECK_THROWS_AS(build_stage_plan(Json{{"total_tokens", -1}}), ConfigError);
}

TEST_CASE("sample_stage examples") {
    const auto pool = pool_of(50, "web", 100);
    auto m = sample_stage(stage(1000, {{"web", 1}}), pool, 7);
    CHECK(m.entries.size() == 10);
    CHECK(m.total_tokens == 1000);
    CHECK(m.warnings.empty());

    m = sample_stage(stage(1000, {{"web", 1}}), std::span<const PoolDoc>{}, 7);
    CHECK(m.entries.empty());
    CHECK_FALSE(m.warnings.empty());

    m = sample_stage(stage(10'000, {{"web", 1}}), pool, 7);
    CHECK(m.entries.size() == 50);
    CHECK(m.warnings.size() == 1);
}

TEST_CASE("sample_stage: 3:1 calibration over an ample pool") {
    std::vector<PoolDoc> pool;
    Rng rng(3);
    for (int i = 0; i < 20'000; ++i) {
        const bool code = rng.below(2);
        pool.push_back({"d" + std::to_string(i), code ? "code" : "web", 20 + rng.below(200)});
    }
    const auto m = sample_stage(stage(40'000, {{"web", 3}, {"code", 1}}), pool, 11);
    const auto shares = m.shares();
    CHECK(std::abs(shares.at("web") - 0.75) <= 0.01);
    CHECK(std::abs(shares.at("code") - 0.25) <= 0.01);
    CHECK(m.warnings.empty());
    std::set<std::string> ids;
    for (const auto& e : m.entries) CHECK(ids.insert(e.doc_id).second);
    CHECK(m.total_tokens >= 40'000);
    CHECK(m.total_tokens < 40'000 + 220);
}

TEST_CASE("sample_stage is deterministic and respects the budget bound (property)") {
    Rng rng(5);
    for (int round = 0; round < 100; ++round) {
        std::vector<PoolDoc> pool;
        std::uint64_t max_doc = 0;
        const std::size_t domains = 1 + rng.below(4);
        for (int i = 0; i < 400; ++i) {
            const auto d = "dom" + std::to_string(rng.below(domains));
            pool.push_back({"d" + std::to_string(i), d, 1 + rng.below(300)});
            max_doc = std::max(max_doc, pool.back().tokens);
        }
        std::map<std::string, double> w;
        for (std::size_t d = 0; d < domains; ++d) w["dom" + std::to_string(d)] = 0.5 + static_cast<double>(rng.below(5));
        const auto st = stage(1 + rng.below(20'000), w);
        const auto seed = rng.next();
        const auto a = sample_stage(st, pool, seed);
        const auto b = sample_stage(st, pool, seed);
        CHECK(a.entries == b.entries);
        std::set<std::string> ids;
        for (const auto& e : a.entries) CHECK(ids.insert(e.doc_id).second);
        if (a.warnings.empty()) {
            CHECK(a.total_tokens + max_doc >= st.token_budget);
            CHECK(a.total_tokens <= st.token_budget + max_doc * domains);
        }
    }
}

TEST_CASE("paper stage proportions at desk scale") {
    const auto plan = paper_stage_plan(62'000'000, {{"general", 1}});
    std::vector<PoolDoc> pool;
    Rng rng(9);
    std::uint64_t max_doc = 0;
    for (int i = 0; i < 60'000; ++i) {
        pool.push_back({"d" + std::to_string(i), "general", 500 + rng.below(1500)});
        max_doc = std::max(max_doc, pool.back().tokens);
    }
    for (const auto& st : plan.stages) {
        const auto m = sample_stage(st, pool, 1);
        CHECK(m.warnings.empty());
        CHECK(m.total_tokens >= st.token_budget);
        CHECK(m.total_tokens - st.token_budget < max_doc);
    }
}
