#include "pnr/selftrain.hpp"

#include "pnr/text.hpp"
#include "pnr/trace.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <future>
#include <istream>
#include <ostream>

namespace pnr {

using nlohmann::json;

double percentile_threshold(std::vector<double> scores, double z) {
    if (scores.empty()) throw PreconditionError("percentile of an empty score list");
    if (!(z >= 0.0 && z <= 100.0)) throw PreconditionError("percentile z must lie in [0, 100]");
    std::sort(scores.begin(), scores.end());
    const auto n = static_cast<double>(scores.size());
    // z * n / 100 keeps integral products exact; the epsilon absorbs
    // representation error for non-integral z.
    auto rank = static_cast<std::size_t>(std::ceil(z * n / 100.0 - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, scores.size());
    return scores[rank - 1];
}

bool meets_gap(double worse, double better, double threshold) noexcept {
    return better - worse >= threshold - kGapTolerance;
}

void SelfTrainConfig::validate() const {
    pipeline.validate();
    if (!(sampling_temperature >= 0.0 && sampling_temperature <= 1.0)) {
        throw PreconditionError("sampling temperature must lie in [0, 1]");
    }
    if (plan_samples < 1 || edit_pairs < 1 || reward_pairs < 1) throw PreconditionError("B must be at least 1");
    if (!(z >= 0.0 && z <= 100.0)) throw PreconditionError("z must lie in [0, 100]");
    if (jobs < 1) throw PreconditionError("jobs must be at least 1");
}

namespace {

struct Rollout {
    Plan plan;
    std::string response;
    double score = 0.0;
};

PipelineConfig rollout_config(const SelfTrainConfig& config, std::size_t query_index) {
    PipelineConfig c = config.pipeline;
    // Distinct seed ranges per query.
    c.seed = config.pipeline.seed + 1'000'000ULL * query_index;
    return c;
}

std::vector<Plan> plans_for(const Query& q, int n, double temperature, const PipelineConfig& c, const Models& models) {
    RetryLadder ladder = RetryLadder::starting_at(temperature);
    ladder.increment = c.ladder_increment;
    ladder.max_attempts = c.ladder_attempts;
    PlanSamplingOptions opts;
    opts.max_output_tokens = c.max_output_tokens;
    opts.seed = c.seed;
    std::vector<Plan> plans;
    for (auto& sp : sample_plans(q.text, n, ladder, *models.planner, opts)) plans.push_back(std::move(sp.plan));
    return plans;
}

Rollout roll_out(const Query& q, Plan plan, int plan_index, const PipelineConfig& c, const Models& models,
                 const Retriever& retriever, Utility& metric) {
    auto ctx = assemble_context(plan, retriever, c.retrieval_budget);
    auto cand = generate_initial(q.text, plan, plan_index, ctx, retriever, *models.generator, c);
    double s = metric.score(q, cand.text);
    return {std::move(plan), std::move(cand.text), s};
}

// Runs fn(query, index) over all queries, at most `jobs` at a time, and
// concatenates the per-query example lists in query order.
template <typename Example, typename Fn>
Dataset<Example> for_each_query(const std::vector<Query>& queries, int jobs, Fn fn) {
    std::vector<std::vector<Example>> per_query(queries.size());
    std::vector<bool> failed(queries.size(), false);
    auto step = static_cast<std::size_t>(jobs);
    for (std::size_t start = 0; start < queries.size(); start += step) {
        auto end = std::min(queries.size(), start + step);
        std::vector<std::future<void>> running;
        for (std::size_t i = start; i < end; ++i) {
            running.push_back(std::async(step == 1 ? std::launch::deferred : std::launch::async, [&, i] {
                try {
                    per_query[i] = fn(queries[i], i);
                } catch (const std::exception& e) {
                    spdlog::warn("skipping query {}: {}", queries[i].id, e.what());
                    failed[i] = true;
                }
            }));
        }
        for (auto& f : running) f.get();
    }
    Dataset<Example> out;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (failed[i]) {
            out.skipped.push_back(queries[i].id);
            continue;
        }
        for (auto& e : per_query[i]) out.examples.push_back(std::move(e));
    }
    return out;
}

template <typename Example>
std::vector<Example> consecutive_pairs(const Query& q, const std::vector<Rollout>& rollouts, double threshold,
                                       bool with_plan) {
    std::vector<Example> out;
    for (std::size_t i = 0; i + 1 < rollouts.size(); i += 2) {
        const Rollout* worse = &rollouts[i];
        const Rollout* better = &rollouts[i + 1];
        if (worse->score > better->score) std::swap(worse, better);
        if (!meets_gap(worse->score, better->score, threshold)) continue;
        Example e;
        e.query_id = q.id;
        e.query = q.text;
        if constexpr (requires { e.plan; }) {
            if (with_plan) e.plan = worse->plan.raw_text;
        }
        e.worse = worse->response;
        e.better = better->response;
        e.gap = better->score - worse->score;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

Dataset<PlanExample> build_plan_dataset(const std::vector<Query>& queries, const Models& models,
                                        const Retriever& retriever, Utility& metric, const SelfTrainConfig& config) {
    config.validate();
    return for_each_query<PlanExample>(queries, config.jobs, [&](const Query& q, std::size_t qi) {
        auto c = rollout_config(config, qi);
        auto plans = plans_for(q, config.plan_samples, config.sampling_temperature, c, models);
        std::vector<Rollout> rollouts;
        for (std::size_t i = 0; i < plans.size(); ++i) {
            rollouts.push_back(roll_out(q, std::move(plans[i]), static_cast<int>(i), c, models, retriever, metric));
        }
        std::vector<double> scores;
        for (const auto& r : rollouts) scores.push_back(r.score);
        double alpha = percentile_threshold(scores, config.z);
        std::vector<PlanExample> kept;
        for (auto& r : rollouts) {
            if (r.score >= alpha) kept.push_back({q.id, q.text, r.plan.raw_text, std::move(r.response), r.score, alpha});
        }
        return kept;
    });
}

Dataset<EditExample> build_edit_dataset(const std::vector<Query>& queries, const Models& models,
                                        const Retriever& retriever, Utility& metric, const SelfTrainConfig& config) {
    config.validate();
    return for_each_query<EditExample>(queries, config.jobs, [&](const Query& q, std::size_t qi) {
        auto c = rollout_config(config, qi);
        Plan plan = std::move(plans_for(q, 1, 0.0, c, models).front());
        c.generator_temperature = config.sampling_temperature;
        std::vector<Rollout> rollouts;
        for (int i = 0; i < 2 * config.edit_pairs; ++i) rollouts.push_back(roll_out(q, plan, i, c, models, retriever, metric));
        return consecutive_pairs<EditExample>(q, rollouts, config.beta, true);
    });
}

Dataset<RewardExample> build_reward_dataset(const std::vector<Query>& queries, const Models& models,
                                            const Retriever& retriever, Utility& metric,
                                            const SelfTrainConfig& config) {
    config.validate();
    return for_each_query<RewardExample>(queries, config.jobs, [&](const Query& q, std::size_t qi) {
        auto c = rollout_config(config, qi);
        auto plans = plans_for(q, 2 * config.reward_pairs, config.sampling_temperature, c, models);
        std::vector<Rollout> rollouts;
        for (std::size_t i = 0; i < plans.size(); ++i) {
            rollouts.push_back(roll_out(q, std::move(plans[i]), static_cast<int>(i), c, models, retriever, metric));
        }
        return consecutive_pairs<RewardExample>(q, rollouts, config.gamma, false);
    });
}

void write_jsonl(const std::vector<PlanExample>& examples, std::ostream& out) {
    for (const auto& e : examples) {
        out << json{{"query_id", e.query_id}, {"query", e.query},  {"plan", e.plan},
                    {"response", e.response}, {"score", e.score}, {"threshold", e.threshold}}
                   .dump()
            << '\n';
    }
}

void write_jsonl(const std::vector<EditExample>& examples, std::ostream& out) {
    for (const auto& e : examples) {
        out << json{{"query_id", e.query_id}, {"query", e.query},   {"plan", e.plan},
                    {"worse", e.worse},       {"better", e.better}, {"gap", e.gap}}
                   .dump()
            << '\n';
    }
}

void write_jsonl(const std::vector<RewardExample>& examples, std::ostream& out) {
    for (const auto& e : examples) {
        out << json{{"query_id", e.query_id}, {"query", e.query}, {"worse", e.worse}, {"better", e.better}, {"gap", e.gap}}
                   .dump()
            << '\n';
    }
}

std::vector<RewardExample> read_reward_jsonl(std::istream& in) {
    std::vector<RewardExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto rec = json::parse(line, nullptr, false);
        auto where = "reward dataset line " + std::to_string(line_no);
        if (rec.is_discarded() || !rec.is_object()) throw FormatError(where + ": not a JSON object");
        try {
            out.push_back({rec.value("query_id", ""), rec.at("query").get<std::string>(),
                           rec.at("worse").get<std::string>(), rec.at("better").get<std::string>(),
                           rec.value("gap", 0.0)});
        } catch (const json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<RewardPair> to_reward_pairs(const std::vector<RewardExample>& examples) {
    std::vector<RewardPair> pairs;
    pairs.reserve(examples.size());
    for (const auto& e : examples) pairs.push_back({e.query, e.worse, e.better, e.gap});
    return pairs;
}

json manifest_json(const SelfTrainConfig& c) {
    return {
        {"plan", {{"B", c.plan_samples}, {"z", c.z}}},
        {"edit", {{"B", c.edit_pairs}, {"beta", c.beta}}},
        {"reward", {{"B", c.reward_pairs}, {"gamma", c.gamma}}},
        {"sampling_temperature", c.sampling_temperature},
        {"pairing", "2B generations per query paired consecutively: (0,1), (2,3), ..."},
        {"gap_tolerance", kGapTolerance},
        {"seed", c.pipeline.seed},
        {"pipeline", to_json(c.pipeline)},
    };
}

std::vector<Query> read_queries_jsonl(std::istream& in) {
    std::vector<Query> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto rec = json::parse(line, nullptr, false);
        auto where = "query line " + std::to_string(line_no);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("query") || !rec["query"].is_string()) {
            throw FormatError(where + ": expected {\"query_id\": text, \"query\": text}");
        }
        std::string id = std::to_string(line_no);
        if (rec.contains("query_id")) {
            const auto& v = rec["query_id"];
            id = v.is_string() ? v.get<std::string>() : v.dump();
        }
        out.push_back({std::move(id), rec["query"].get<std::string>()});
    }
    return out;
}

}  // namespace pnr
