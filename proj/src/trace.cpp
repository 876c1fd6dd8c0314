#include "pnr/trace.hpp"

#include "pnr/text.hpp"

#include <istream>
#include <ostream>
#include <set>

namespace pnr {

using nlohmann::json;

json to_json(const PipelineConfig& c) {
    return {
        {"n_plans", c.n_plans},
        {"rounds", c.rounds},
        {"retrieval_budget", c.retrieval_budget},
        {"planner_temperature", c.planner_temperature},
        {"generator_temperature", c.generator_temperature},
        {"editor_temperature", c.editor_temperature},
        {"max_output_tokens", c.max_output_tokens},
        {"seed", c.seed},
        {"planning", c.planning},
        {"ladder_increment", c.ladder_increment},
        {"ladder_attempts", c.ladder_attempts},
        {"context_order", to_string(c.context_order)},
        {"jobs", c.jobs},
        {"record_timings", c.record_timings},
    };
}

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c) {
    if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "n_plans") c.n_plans = value.get<int>();
            else if (key == "rounds") c.rounds = value.get<int>();
            else if (key == "retrieval_budget") c.retrieval_budget = value.get<int>();
            else if (key == "planner_temperature") c.planner_temperature = value.get<double>();
            else if (key == "generator_temperature") c.generator_temperature = value.get<double>();
            else if (key == "editor_temperature") c.editor_temperature = value.get<double>();
            else if (key == "max_output_tokens") c.max_output_tokens = value.get<int>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "planning") c.planning = value.get<bool>();
            else if (key == "ladder_increment") c.ladder_increment = value.get<double>();
            else if (key == "ladder_attempts") c.ladder_attempts = value.get<int>();
            else if (key == "context_order") c.context_order = context_order_from_string(value.get<std::string>());
            else if (key == "jobs") c.jobs = value.get<int>();
            else if (key == "record_timings") c.record_timings = value.get<bool>();
            else throw ConfigError("unknown pipeline key: " + key);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    return c;
}

namespace {

json plan_object(const Plan& plan) { return json::parse(serialize_plan(plan.steps)); }

}  // namespace

void write_trace(const RunTrace& t, std::ostream& out) {
    out << json{{"type", "run"}, {"query", t.query}, {"config", to_json(t.config)}}.dump() << '\n';
    for (std::size_t i = 0; i < t.plans.size(); ++i) {
        const auto& sp = t.plans[i];
        out << json{{"type", "plan"},
                    {"plan_index", i},
                    {"attempts", sp.attempts},
                    {"temperature", sp.plan.origin_temperature},
                    {"plan", plan_object(sp.plan)}}
                   .dump()
            << '\n';
    }
    for (std::size_t i = 0; i < t.contexts.size(); ++i) {
        json docs = json::array();
        for (const auto& d : t.contexts[i].docs) docs.push_back({{"id", d.doc_id}, {"step", d.step}, {"score", d.score}});
        out << json{{"type", "context"}, {"plan_index", i}, {"budget", t.contexts[i].budget}, {"docs", std::move(docs)}}
                   .dump()
            << '\n';
    }
    for (std::size_t i = 0; i < t.pool.candidates.size(); ++i) {
        const auto& c = t.pool.candidates[i];
        json rec = {{"type", "candidate"},
                    {"plan_index", c.plan_index},
                    {"edit_depth", c.edit_depth},
                    {"temperature", c.temperature},
                    {"parent", c.edit_depth == 0 ? json(nullptr) : json::array({c.plan_index, c.edit_depth - 1})},
                    {"score", i < t.scores.size() ? json(t.scores[i]) : json(nullptr)},
                    {"text", c.text}};
        out << rec.dump() << '\n';
    }
    if (t.selected && *t.selected < t.pool.candidates.size()) {
        const auto& c = t.pool.candidates[*t.selected];
        out << json{{"type", "selection"},
                    {"plan_index", c.plan_index},
                    {"edit_depth", c.edit_depth},
                    {"pool_index", *t.selected},
                    {"score", *t.selected < t.scores.size() ? json(t.scores[*t.selected]) : json(nullptr)},
                    {"reward", t.reward_used ? "head" : "none"}}
                   .dump()
            << '\n';
    }
    for (const auto& tm : t.timings) out << json{{"type", "timing"}, {"stage", tm.stage}, {"ms", tm.millis}}.dump() << '\n';
    if (!t.error.empty()) out << json{{"type", "error"}, {"message", t.error}}.dump() << '\n';
}

RunTrace read_trace(std::istream& in) {
    RunTrace t;
    std::string line;
    std::size_t line_no = 0;
    bool scored = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto where = "trace line " + std::to_string(line_no);
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("type")) throw FormatError(where + ": not a record");
        try {
            auto type = rec["type"].get<std::string>();
            if (type == "run") {
                t.query = rec.at("query").get<std::string>();
                t.config = pipeline_config_from_json(rec.at("config"));
            } else if (type == "plan") {
                auto parsed = parse_plan(rec.at("plan").dump());
                if (auto* err = std::get_if<PlanParseError>(&parsed)) throw FormatError(where + ": " + err->message);
                auto plan = std::get<Plan>(std::move(parsed));
                plan.origin_temperature = rec.at("temperature").get<double>();
                t.plans.push_back({std::move(plan), rec.at("attempts").get<int>()});
            } else if (type == "context") {
                RetrievedContext ctx;
                ctx.budget = rec.at("budget").get<int>();
                for (const auto& d : rec.at("docs")) {
                    ctx.docs.push_back({d.at("id").get<std::string>(), d.at("step").get<int>(), d.at("score").get<double>()});
                }
                t.contexts.push_back(std::move(ctx));
            } else if (type == "candidate") {
                t.pool.candidates.push_back({rec.at("text").get<std::string>(), rec.at("plan_index").get<int>(),
                                             rec.at("edit_depth").get<int>(), rec.at("temperature").get<double>()});
                if (!rec.at("score").is_null()) {
                    scored = true;
                    t.scores.push_back(rec["score"].get<double>());
                }
            } else if (type == "selection") {
                t.selected = rec.at("pool_index").get<std::size_t>();
                t.reward_used = rec.at("reward").get<std::string>() == "head";
            } else if (type == "timing") {
                t.timings.push_back({rec.at("stage").get<std::string>(), rec.at("ms").get<double>()});
            } else if (type == "error") {
                t.error = rec.at("message").get<std::string>();
            } else {
                throw FormatError(where + ": unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
    }
    if (scored && t.scores.size() != t.pool.candidates.size()) throw FormatError("trace scores only part of the pool");
    t.pool.n_plans = t.config.n_plans;
    t.pool.rounds = t.config.rounds;
    return t;
}

std::vector<std::string> check_trace(const RunTrace& t) {
    std::vector<std::string> problems;
    const auto expected = static_cast<std::size_t>(t.config.n_plans) * static_cast<std::size_t>(t.config.rounds);
    if (t.pool.candidates.size() != expected) {
        problems.push_back("pool holds " + std::to_string(t.pool.candidates.size()) + " candidates, expected " +
                           std::to_string(expected));
    }
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < t.pool.candidates.size(); ++i) {
        const auto& c = t.pool.candidates[i];
        if (!seen.insert({c.plan_index, c.edit_depth}).second) {
            problems.push_back("duplicate candidate (" + std::to_string(c.plan_index) + ", " +
                               std::to_string(c.edit_depth) + ")");
        }
        if (c.plan_index < 0 || c.plan_index >= t.config.n_plans || c.edit_depth < 0 || c.edit_depth >= t.config.rounds) {
            problems.push_back("candidate " + std::to_string(i) + " outside the budget grid");
        }
        // Linear chains: the entry before a depth-e candidate is depth e-1 of the same plan.
        if (c.edit_depth > 0) {
            if (i == 0 || t.pool.candidates[i - 1].plan_index != c.plan_index ||
                t.pool.candidates[i - 1].edit_depth != c.edit_depth - 1) {
                problems.push_back("candidate " + std::to_string(i) + " does not continue its plan's chain");
            }
        } else if (i > 0 && t.pool.candidates[i - 1].plan_index >= c.plan_index) {
            problems.push_back("candidate " + std::to_string(i) + " breaks (plan_index, edit_depth) order");
        }
    }
    if (t.error.empty()) {
        if (!t.selected || *t.selected >= t.pool.candidates.size()) {
            problems.push_back("selection is not a pool member");
        } else if (!t.scores.empty()) {
            for (double s : t.scores) {
                if (s > t.scores[*t.selected]) {
                    problems.push_back("selected score is not maximal");
                    break;
                }
            }
        }
    }
    return problems;
}

}  // namespace pnr
