#include "dwc/mix.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "dwc/error.hpp"
#include "dwc/hash.hpp"
#include "dwc/random.hpp"

namespace dwc {

std::vector<std::string> StagePlan::validate() const {
    std::vector<std::string> v;
    if (stages.empty()) v.emplace_back("plan has no stages");
    std::set<std::string> names;
    for (const auto& s : stages) {
        const std::string where = "stage '" + s.name + "': ";
        if (s.name.empty()) v.emplace_back("stage name is empty");
        if (!names.insert(s.name).second) v.push_back("duplicate stage name '" + s.name + "'");
        if (s.token_budget == 0) v.push_back(where + "token budget must be positive");
        if (s.domain_weights.empty()) v.push_back(where + "no domain weights");
        for (const auto& [d, w] : s.domain_weights) {
            if (!(w > 0)) v.push_back(where + "weight of '" + d + "' must be positive");
        }
        if (s.sequence_lengths.empty()) v.push_back(where + "no sequence lengths");
        for (const auto& c : s.sequence_lengths) {
            if (c.length == 0 || !(c.ratio > 0)) v.push_back(where + "sequence lengths and ratios must be positive");
        }
    }
    return v;
}

std::vector<std::uint64_t> apportion(std::uint64_t total, std::span<const std::uint64_t> weights) {
    const auto sum = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
    if (sum == 0) throw ConfigError("apportion needs a positive weight");
    std::vector<std::uint64_t> out(weights.size());
    std::vector<std::pair<unsigned __int128, std::size_t>> rem;
    std::uint64_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto num = static_cast<unsigned __int128>(total) * weights[i];
        out[i] = static_cast<std::uint64_t>(num / sum);
        given += out[i];
        rem.emplace_back(num % sum, i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; given < total; ++k, ++given) ++out[rem[k].second];
    return out;
}

StagePlan paper_stage_plan(std::uint64_t total_tokens, const std::map<std::string, double>& domain_weights) {
    const auto budgets = apportion(total_tokens, kPaperStageProportions);
    StagePlan plan;
    plan.stages = {
        {"general", budgets[0], domain_weights, DwcMode::none, {{4096, 1.0}}},
        {"dwc_safety", budgets[1], domain_weights, DwcMode::preamble, {{4096, 1.0}}},
        {"long_context", budgets[2], domain_weights, DwcMode::none, {{8192, 1.0}, {16384, 1.0}, {32768, 1.0}}},
    };
    return plan;
}

namespace {

std::map<std::string, double> weights_from_json(const Json& j) {
    std::map<std::string, double> out;
    if (!j.is_object()) throw ConfigError("domain_weights must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!v.is_number()) throw ConfigError("weight of domain '" + k + "' must be a number");
        out[k] = v.get<double>();
    }
    return out;
}

std::vector<LengthClass> lengths_from_json(const Json& j) {
    if (j.is_string()) return parse_length_classes(j.get<std::string>());
    if (j.is_number_integer() && j.get<std::int64_t>() > 0) return {{j.get<std::size_t>(), 1.0}};
    if (!j.is_array()) throw ConfigError("sequence_lengths must be a string, number or array");
    std::vector<LengthClass> out;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("length")) throw ConfigError("sequence_lengths entries need a length");
        out.push_back({e.at("length").get<std::size_t>(), e.value("ratio", 1.0)});
    }
    return out;
}

Json lengths_to_json(const std::vector<LengthClass>& classes) {
    Json out = Json::array();
    for (const auto& c : classes) out.push_back(Json{{"length", c.length}, {"ratio", c.ratio}});
    return out;
}

}  // namespace

StagePlan build_stage_plan(const Json& config) {
    StagePlan plan;
    try {
        if (config.contains("stages")) {
            for (const auto& s : config.at("stages")) {
                StageSpec spec;
                spec.name = s.at("name").get<std::string>();
                const auto& budget = s.at("token_budget");
                if (!budget.is_number_integer() || budget.get<std::int64_t>() <= 0) {
                    throw ConfigError("stage '" + spec.name + "': token_budget must be a positive integer");
                }
                spec.token_budget = budget.get<std::uint64_t>();
                spec.domain_weights = weights_from_json(s.at("domain_weights"));
                const auto mode = s.value("dwc_mode", std::string("none"));
                const auto m = parse_dwc_mode(mode);
                if (!m) throw ConfigError("stage '" + spec.name + "': unknown dwc_mode '" + mode + "'");
                spec.dwc_mode = *m;
                if (s.contains("sequence_lengths")) spec.sequence_lengths = lengths_from_json(s.at("sequence_lengths"));
                plan.stages.push_back(std::move(spec));
            }
        } else {
            const auto tmpl = config.value("template", std::string("paper"));
            if (tmpl != "paper") throw ConfigError("unknown stage plan template '" + tmpl + "'");
            const auto& total = config.at("total_tokens");
            if (!total.is_number_integer() || total.get<std::int64_t>() <= 0) {
                throw ConfigError("total_tokens must be a positive integer");
            }
            std::map<std::string, double> weights{{"general", 1.0}};
            if (config.contains("domain_weights")) weights = weights_from_json(config.at("domain_weights"));
            plan = paper_stage_plan(total.get<std::uint64_t>(), weights);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("stage plan: ") + e.what());
    }
    if (const auto v = plan.validate(); !v.empty()) throw ConfigError("stage plan: " + v.front());
    return plan;
}

Json to_json(const StagePlan& plan) {
    Json stages = Json::array();
    for (const auto& s : plan.stages) {
        stages.push_back(Json{{"name", s.name},
                              {"token_budget", s.token_budget},
                              {"domain_weights", s.domain_weights},
                              {"dwc_mode", to_string(s.dwc_mode)},
                              {"sequence_lengths", lengths_to_json(s.sequence_lengths)}});
    }
    return Json{{"stages", stages}};
}

std::map<std::string, double> Manifest::shares() const {
    std::map<std::string, double> out;
    for (const auto& [d, n] : realized) {
        out[d] = total_tokens == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total_tokens);
    }
    return out;
}

std::string Manifest::to_jsonl() const {
    std::string out;
    for (const auto& e : entries) {
        out += Json{{"doc_id", e.doc_id}, {"stage", stage}, {"domain", e.domain}, {"tokens", e.tokens}}.dump();
        out += '\n';
    }
    return out;
}

Json Manifest::summary_json() const {
    return Json{{"stage", stage},           {"budget", budget},       {"documents", entries.size()},
                {"tokens", total_tokens},   {"realized", realized},   {"shares", shares()},
                {"warnings", warnings}};
}

Manifest sample_stage(const StageSpec& stage, std::span<const PoolDoc> pool, std::uint64_t seed) {
    Manifest m;
    m.stage = stage.name;
    m.budget = stage.token_budget;
    double weight_sum = 0;
    for (const auto& [d, w] : stage.domain_weights) weight_sum += w;

    struct Lane {
        std::string domain;
        double target = 0;
        std::vector<std::size_t> order;
        std::size_t next = 0;
        std::uint64_t realized = 0;
    };
    std::vector<Lane> lanes;
    std::map<std::string, std::size_t> lane_of;
    for (const auto& [d, w] : stage.domain_weights) {
        lane_of[d] = lanes.size();
        lanes.push_back({d, static_cast<double>(stage.token_budget) * w / weight_sum, {}, 0, 0});
    }
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto it = lane_of.find(pool[i].domain);
        if (it == lane_of.end() || pool[i].tokens == 0) continue;
        if (!seen.insert(pool[i].id).second) continue;
        lanes[it->second].order.push_back(i);
    }
    for (auto& lane : lanes) {
        Rng rng(derive_seed(seed, stage.name + "/" + lane.domain));
        rng.shuffle(lane.order);
    }

    while (m.total_tokens < stage.token_budget) {
        Lane* pick = nullptr;
        double worst = 0;
        for (auto& lane : lanes) {
            const double deficit = lane.target - static_cast<double>(lane.realized);
            if (deficit <= 0 || lane.next >= lane.order.size()) continue;
            // Relative deficit keeps small domains from starving behind big ones.
            const double rel = deficit / lane.target;
            if (!pick || rel > worst) {
                pick = &lane;
                worst = rel;
            }
        }
        if (!pick) break;
        const auto& doc = pool[pick->order[pick->next++]];
        m.entries.push_back({doc.id, pick->domain, doc.tokens});
        pick->realized += doc.tokens;
        m.total_tokens += doc.tokens;
    }

    for (const auto& lane : lanes) {
        m.realized[lane.domain] = lane.realized;
        if (lane.next >= lane.order.size() && static_cast<double>(lane.realized) < lane.target) {
            m.warnings.push_back("stage '" + stage.name + "': domain '" + lane.domain + "' exhausted after " +
                                 std::to_string(lane.realized) + " of " +
                                 std::to_string(static_cast<std::uint64_t>(lane.target)) + " target tokens");
        }
    }
    if (pool.empty()) m.warnings.push_back("stage '" + stage.name + "': empty pool");
    return m;
}

}  // namespace dwc
