#include "pnr/orchestrator.hpp"

#include "pnr/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <future>

namespace pnr {

const char* to_string(ContextOrder order) noexcept { return order == ContextOrder::by_step ? "step" : "score"; }

ContextOrder context_order_from_string(std::string_view name) {
    if (name == "step") return ContextOrder::by_step;
    if (name == "score") return ContextOrder::by_score;
    throw ConfigError("unknown context order: " + std::string(name));
}

void PipelineConfig::validate() const {
    if (n_plans < 1) throw PreconditionError("n_plans must be at least 1");
    if (rounds < 1) throw PreconditionError("rounds must be at least 1");
    if (retrieval_budget < 1) throw PreconditionError("retrieval budget must be at least 1");
    for (double t : {planner_temperature, generator_temperature, editor_temperature}) {
        if (!(t >= 0.0 && t <= 1.0)) throw PreconditionError("temperatures must lie in [0, 1]");
    }
    if (max_output_tokens < 1) throw PreconditionError("max_output_tokens must be at least 1");
    if (jobs < 1) throw PreconditionError("jobs must be at least 1");
    ladder().validate();
}

RetryLadder PipelineConfig::ladder() const {
    RetryLadder l = RetryLadder::starting_at(planner_temperature);
    l.increment = ladder_increment;
    l.max_attempts = ladder_attempts;
    return l;
}

std::vector<ResolvedDoc> ordered_context(const RetrievedContext& context, const Retriever& retriever,
                                         ContextOrder order) {
    std::vector<ResolvedDoc> docs;
    docs.reserve(context.docs.size());
    for (const auto& d : context.docs) docs.push_back({&retriever.document(d.doc_id), d.step, d.score});
    if (order == ContextOrder::by_score) {
        std::stable_sort(docs.begin(), docs.end(),
                         [](const ResolvedDoc& a, const ResolvedDoc& b) { return a.score > b.score; });
    }
    return docs;
}

namespace {

void append_plan(std::string& p, const Plan& plan) {
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        p += std::to_string(i + 1) + ". " + plan.steps[i].aspect + ": " + plan.steps[i].reason + "\n";
    }
}

std::uint64_t request_seed(const PipelineConfig& config, int plan_index) {
    return config.seed + static_cast<std::uint64_t>(plan_index);
}

}  // namespace

std::string build_generation_prompt(std::string_view query, const Plan& plan, const std::vector<ResolvedDoc>& docs) {
    std::string p;
    p += "Write a complete and factual answer to the question below.\n";
    p += "Follow the plan: address every aspect it lists, using each reason as guidance for what to say.\n";
    if (!docs.empty()) p += "Base your claims on the provided documents wherever they are relevant.\n";
    p += "\nQuestion: ";
    p += trim(query);
    p += "\n\nPlan:\n";
    append_plan(p, plan);
    if (!docs.empty()) {
        p += "\nDocuments:\n";
        for (std::size_t i = 0; i < docs.size(); ++i) {
            p += "[" + std::to_string(i + 1) + "] " + docs[i].document->body + "\n";
        }
    }
    p += "\nAnswer:\n";
    return p;
}

std::string build_edit_prompt(std::string_view query, const Plan& plan, std::string_view previous) {
    std::string p;
    p += "Improve the response below so that it answers the question more completely and more factually.\n";
    p += "Keep to the plan: every aspect it lists should be covered. Return only the improved response.\n";
    p += "\nQuestion: ";
    p += trim(query);
    p += "\n\nPlan:\n";
    append_plan(p, plan);
    p += "\nResponse:\n";
    p += previous;
    p += "\n\nImproved response:\n";
    return p;
}

Candidate generate_initial(std::string_view query, const Plan& plan, int plan_index, const RetrievedContext& context,
                           const Retriever& retriever, GenerationBackend& generator, const PipelineConfig& config) {
    if (plan.steps.empty()) throw PreconditionError("generate_initial needs a nonempty plan");
    GenerationRequest req;
    req.prompt = build_generation_prompt(query, plan, ordered_context(context, retriever, config.context_order));
    req.temperature = config.generator_temperature;
    req.max_output_tokens = config.max_output_tokens;
    req.seed = request_seed(config, plan_index);
    return {generator.generate(req), plan_index, 0, req.temperature};
}

Candidate refine(std::string_view query, const Plan& plan, const Candidate& previous, GenerationBackend& editor,
                 const PipelineConfig& config) {
    if (previous.edit_depth + 1 >= config.rounds) {
        throw PreconditionError("refinement budget exhausted: depth " + std::to_string(previous.edit_depth) +
                                " is the last of " + std::to_string(config.rounds) + " rounds");
    }
    GenerationRequest req;
    req.prompt = build_edit_prompt(query, plan, previous.text);
    req.temperature = config.editor_temperature;
    req.max_output_tokens = config.max_output_tokens;
    req.seed = request_seed(config, previous.plan_index);
    return {editor.generate(req), previous.plan_index, previous.edit_depth + 1, req.temperature};
}

namespace {

class Stopwatch {
public:
    explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
    double millis() const {
        if (!enabled_) return 0.0;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

struct PlanOutcome {
    RetrievedContext context;
    std::vector<Candidate> chain;
    double millis = 0.0;
};

// Context, initial generation and the edit chain for one plan. On failure the
// outcome keeps whatever finished before the exception.
void run_plan(std::string_view query, const Plan& plan, int plan_index, const PipelineConfig& config,
              const Models& models, const Retriever& retriever, PlanOutcome& out) {
    Stopwatch watch(config.record_timings);
    out.context = assemble_context(plan, retriever, config.retrieval_budget);
    out.chain.push_back(generate_initial(query, plan, plan_index, out.context, retriever, *models.generator, config));
    for (int depth = 1; depth < config.rounds; ++depth) {
        out.chain.push_back(refine(query, plan, out.chain.back(), *models.editor, config));
    }
    out.millis = watch.millis();
}

}  // namespace

CandidatePool explore(std::string_view query, const PipelineConfig& config, const Models& models,
                      const Retriever& retriever, RunTrace& trace) {
    config.validate();
    if (!models.planner || !models.generator || !models.editor) {
        throw PreconditionError("planner, generator and editor backends are required");
    }
    trace.query = std::string(query);
    trace.config = config;
    trace.pool = {{}, config.n_plans, config.rounds};

    Stopwatch planning(config.record_timings);
    if (config.planning) {
        PlanSamplingOptions opts;
        opts.max_output_tokens = config.max_output_tokens;
        opts.seed = config.seed;
        trace.plans = sample_plans(query, config.n_plans, config.ladder(), *models.planner, opts);
    } else {
        for (int i = 0; i < config.n_plans; ++i) trace.plans.push_back({trivial_plan(query), 0});
    }
    trace.timings.push_back({"planning", planning.millis()});

    std::vector<PlanOutcome> outcomes(static_cast<std::size_t>(config.n_plans));
    std::exception_ptr failure;
    auto jobs = static_cast<std::size_t>(config.jobs);
    for (std::size_t start = 0; start < outcomes.size() && !failure; start += jobs) {
        auto end = std::min(outcomes.size(), start + jobs);
        std::vector<std::future<void>> running;
        for (std::size_t i = start; i < end; ++i) {
            auto task = [&, i] {
                run_plan(query, trace.plans[i].plan, static_cast<int>(i), config, models, retriever, outcomes[i]);
            };
            running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, task));
        }
        for (auto& f : running) {
            try {
                f.get();
            } catch (...) {
                if (!failure) failure = std::current_exception();
            }
        }
    }

    // Partial results are kept up to the first incomplete plan.
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        auto& o = outcomes[i];
        trace.contexts.push_back(std::move(o.context));
        for (auto& c : o.chain) trace.pool.candidates.push_back(std::move(c));
        trace.timings.push_back({"plan[" + std::to_string(i) + "]", o.millis});
        if (static_cast<int>(o.chain.size()) != config.rounds) break;
    }
    if (failure) std::rethrow_exception(failure);
    return trace.pool;
}

RunResult run_pipeline(std::string_view query, const PipelineConfig& config, const Models& models,
                       const Retriever& retriever, const RewardHead* head) {
    RunResult result;
    auto& trace = result.trace;
    Stopwatch total(config.record_timings);
    try {
        explore(query, config, models, retriever, trace);
        Stopwatch selecting(config.record_timings);
        if (head != nullptr) {
            if (!models.embedder) throw PreconditionError("reward selection needs an embedding backend");
            auto sel = select_best(*head, trace.pool, query, *models.embedder);
            trace.scores = std::move(sel.scores);
            trace.selected = sel.index;
            trace.reward_used = true;
        } else {
            spdlog::warn("no reward head: returning the first candidate");
            trace.selected = 0;
        }
        trace.timings.push_back({"selection", selecting.millis()});
    } catch (const std::exception& e) {
        trace.error = e.what();
        trace.timings.push_back({"total", total.millis()});
        throw PipelineError(e.what(), trace);
    }
    trace.timings.push_back({"total", total.millis()});
    result.final_text = trace.pool.candidates[*trace.selected].text;
    return result;
}

}  // namespace pnr
