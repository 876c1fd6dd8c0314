#include "pnr/planner.hpp"

#include "pnr/error.hpp"
#include "pnr/text.hpp"

#include <json.hpp>

namespace pnr {

using nlohmann::json;

std::string serialize_plan(const std::vector<PlanStep>& steps) {
    json aspects = json::array();
    for (const auto& s : steps) {
        aspects.push_back({{"title", s.aspect}, {"reason", s.reason}, {"query", s.query}});
    }
    return json{{"aspects", std::move(aspects)}}.dump();
}

Plan trivial_plan(std::string_view query) {
    Plan plan;
    plan.steps.push_back({"answer", "address the question directly", trim(query)});
    plan.raw_text = serialize_plan(plan.steps);
    return plan;
}

const char* to_string(PlanParseErrorKind kind) noexcept {
    switch (kind) {
        case PlanParseErrorKind::malformed_json: return "malformed JSON";
        case PlanParseErrorKind::not_an_object: return "not an object";
        case PlanParseErrorKind::missing_field: return "missing field";
        case PlanParseErrorKind::wrong_type: return "wrong type";
        case PlanParseErrorKind::empty_field: return "empty field";
        case PlanParseErrorKind::empty_steps: return "empty steps";
    }
    return "unknown";
}

namespace {

PlanParseError fail(PlanParseErrorKind kind, const std::string& detail) {
    return {kind, std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)};
}

}  // namespace

PlanParseResult parse_plan(std::string_view text) {
    auto open = text.find('{');
    auto close = text.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        return fail(PlanParseErrorKind::malformed_json, "no JSON object found");
    }
    std::string_view body = text.substr(open, close - open + 1);
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) return fail(PlanParseErrorKind::malformed_json, "");
    if (!doc.is_object()) return fail(PlanParseErrorKind::not_an_object, "top level");
    if (!doc.contains("aspects")) return fail(PlanParseErrorKind::missing_field, "aspects");
    const auto& aspects = doc["aspects"];
    if (!aspects.is_array()) return fail(PlanParseErrorKind::wrong_type, "aspects is not an array");
    if (aspects.empty()) return fail(PlanParseErrorKind::empty_steps, "");

    Plan plan;
    plan.raw_text = std::string(body);
    for (std::size_t i = 0; i < aspects.size(); ++i) {
        const auto& item = aspects[i];
        auto where = "aspects[" + std::to_string(i) + "]";
        if (!item.is_object()) return fail(PlanParseErrorKind::not_an_object, where);
        PlanStep step;
        for (auto [key, target] : {std::pair{"title", &step.aspect}, std::pair{"reason", &step.reason},
                                   std::pair{"query", &step.query}}) {
            if (!item.contains(key)) return fail(PlanParseErrorKind::missing_field, where + "." + key);
            if (!item[key].is_string()) return fail(PlanParseErrorKind::wrong_type, where + "." + key);
            *target = trim(item[key].get<std::string>());
            if (target->empty()) return fail(PlanParseErrorKind::empty_field, where + "." + key);
        }
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

std::string build_plan_prompt(std::string_view query) {
    auto q = trim(query);
    if (q.empty()) throw PreconditionError("plan prompt needs a nonempty query");
    std::string p;
    p += "You are planning a complete and factual answer to a question.\n";
    p += "Analyze the question and list the distinct aspects a thorough answer must cover.\n";
    p += "For every aspect give a short title, the reason it matters for a complete and factual answer, ";
    p += "and a search query that would retrieve supporting information about it.\n\n";
    p += "Respond with JSON only, in exactly this format:\n";
    p += R"({"aspects": [{"title": "<aspect title>", "reason": "<why this aspect matters>", "query": "<search query>"}]})";
    p += "\n\nQuestion: ";
    p += q;
    p += "\n";
    return p;
}

RetryLadder RetryLadder::starting_at(double temperature) {
    RetryLadder ladder;
    ladder.base_temperature = temperature;
    return ladder;
}

void RetryLadder::validate() const {
    if (!(base_temperature >= 0.0 && base_temperature <= max_temperature)) {
        throw PreconditionError("retry ladder base temperature must lie in [0, max_temperature]");
    }
    if (max_temperature > 1.0) throw PreconditionError("retry ladder max temperature exceeds 1.0");
    if (!(increment > 0.0)) throw PreconditionError("retry ladder increment must be positive");
    if (max_attempts < 1) throw PreconditionError("retry ladder needs at least one attempt");
}

double RetryLadder::temperature_at(int attempt) const {
    double t = base_temperature + attempt * increment;
    return round_micro(t < max_temperature ? t : max_temperature);
}

std::vector<SampledPlan> sample_plans(std::string_view query, int n, const RetryLadder& ladder,
                                      GenerationBackend& backend, const PlanSamplingOptions& options) {
    if (n < 1) throw PreconditionError("sample_plans needs n >= 1");
    ladder.validate();
    auto prompt = build_plan_prompt(query);
    std::vector<SampledPlan> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int slot = 0; slot < n; ++slot) {
        std::string diagnostic;
        bool done = false;
        for (int attempt = 0; attempt < ladder.max_attempts && !done; ++attempt) {
            GenerationRequest req;
            req.prompt = prompt;
            req.temperature = ladder.temperature_at(attempt);
            req.max_output_tokens = options.max_output_tokens;
            if (options.seed) req.seed = *options.seed + static_cast<std::uint64_t>(slot);
            auto parsed = parse_plan(backend.generate(req));
            if (auto* plan = std::get_if<Plan>(&parsed)) {
                plan->origin_temperature = req.temperature;
                out.push_back({std::move(*plan), attempt + 1});
                done = true;
            } else {
                diagnostic = std::get<PlanParseError>(parsed).message;
            }
        }
        if (!done) {
            throw PlanLadderExhausted("plan slot " + std::to_string(slot) + " failed after " +
                                      std::to_string(ladder.max_attempts) + " attempts: " + diagnostic);
        }
    }
    return out;
}

}  // namespace pnr
