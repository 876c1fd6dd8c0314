#pragma once

// Global exploration (N plan-conditioned generations), local exploitation
// (T - 1 chained edits per plan) and reward selection over the pool.
//
// Budget convention: T counts every generation made under one plan, the
// initial one included, so a run makes exactly N * T generations.

#include "pnr/backends.hpp"
#include "pnr/candidate.hpp"
#include "pnr/error.hpp"
#include "pnr/planner.hpp"
#include "pnr/retrieval.hpp"
#include "pnr/reward.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace pnr {

/// How context documents are listed in the generation prompt.
enum class ContextOrder {
    by_step,   // plan step order, then retrieval order within a step
    by_score,  // descending retrieval score across steps
};

const char* to_string(ContextOrder order) noexcept;
ContextOrder context_order_from_string(std::string_view name);

struct PipelineConfig {
    int n_plans = 4;
    int rounds = 4;
    int retrieval_budget = 40;
    double planner_temperature = 0.7;
    double generator_temperature = 0.1;
    double editor_temperature = 0.0;
    int max_output_tokens = 4096;
    std::uint64_t seed = 0;
    /// When false every slot uses trivial_plan(query): Best-of-N mode.
    bool planning = true;
    double ladder_increment = 0.1;
    int ladder_attempts = 5;
    ContextOrder context_order = ContextOrder::by_step;
    /// Plans processed concurrently. Replay order of a scripted backend's
    /// per-fingerprint queues is only deterministic with 1.
    int jobs = 1;
    /// When false every timing is recorded as 0 so traces are reproducible
    /// byte for byte.
    bool record_timings = true;

    void validate() const;
    RetryLadder ladder() const;
};

struct Models {
    std::shared_ptr<GenerationBackend> planner;
    std::shared_ptr<GenerationBackend> generator;
    std::shared_ptr<GenerationBackend> editor;
    /// Only needed for reward selection.
    std::shared_ptr<EmbeddingBackend> embedder;

    /// One backend playing every role.
    template <typename Backend>
    static Models uniform(const std::shared_ptr<Backend>& backend) {
        Models m{backend, backend, backend, nullptr};
        if constexpr (std::is_base_of_v<EmbeddingBackend, Backend>) m.embedder = backend;
        return m;
    }
};

struct ResolvedDoc {
    const Document* document = nullptr;
    int step = 0;
    double score = 0.0;
};

/// Context documents in prompt order.
std::vector<ResolvedDoc> ordered_context(const RetrievedContext& context, const Retriever& retriever,
                                         ContextOrder order);

std::string build_generation_prompt(std::string_view query, const Plan& plan, const std::vector<ResolvedDoc>& docs);
std::string build_edit_prompt(std::string_view query, const Plan& plan, std::string_view previous);

/// Depth-0 candidate for one plan at config.generator_temperature.
Candidate generate_initial(std::string_view query, const Plan& plan, int plan_index, const RetrievedContext& context,
                           const Retriever& retriever, GenerationBackend& generator, const PipelineConfig& config);

/// Edits `previous` under the same plan. Retrieved documents are not shown to
/// the editor. Throws PreconditionError when previous is already at depth
/// rounds - 1.
Candidate refine(std::string_view query, const Plan& plan, const Candidate& previous, GenerationBackend& editor,
                 const PipelineConfig& config);

struct TimingEntry {
    std::string stage;
    double millis = 0.0;
};

struct RunTrace {
    std::string query;
    PipelineConfig config;
    std::vector<SampledPlan> plans;
    std::vector<RetrievedContext> contexts;
    CandidatePool pool;
    /// One per candidate when a reward head scored the pool.
    std::vector<double> scores;
    std::optional<std::size_t> selected;
    bool reward_used = false;
    std::vector<TimingEntry> timings;
    /// Set when the run aborted; the trace then holds what was completed.
    std::string error;
};

/// Thrown by explore and run_pipeline; carries the partial trace.
class PipelineError : public Error {
public:
    PipelineError(const std::string& what, RunTrace partial) : Error(what), trace_(std::move(partial)) {}
    const RunTrace& trace() const noexcept { return trace_; }

private:
    RunTrace trace_;
};

/// Samples plans, assembles one context per plan, generates and refines.
/// Fills trace.plans, trace.contexts and trace.pool. The pool holds exactly
/// n_plans * rounds candidates in (plan_index, edit_depth) order.
CandidatePool explore(std::string_view query, const PipelineConfig& config, const Models& models,
                      const Retriever& retriever, RunTrace& trace);

struct RunResult {
    std::string final_text;
    RunTrace trace;
};

/// explore followed by reward selection. Without a head the first pool
/// candidate is returned and trace.reward_used is false.
RunResult run_pipeline(std::string_view query, const PipelineConfig& config, const Models& models,
                       const Retriever& retriever, const RewardHead* head);

}  // namespace pnr
