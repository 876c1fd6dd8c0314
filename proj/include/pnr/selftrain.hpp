#pragma once

// Self-training dataset builders. Rollouts go through generate_initial so
// that training prompts match inference prompts exactly.
//
// Output files are line-delimited JSON, one example per line:
//   plan    {"query_id", "query", "plan", "response", "score", "threshold"}
//   edit    {"query_id", "query", "plan", "worse", "better", "gap"}
//   reward  {"query_id", "query", "worse", "better", "gap"}
// "plan" holds the plan's wire-schema JSON as a string. Pairs are always
// written (worse, better).

#include "pnr/metric.hpp"
#include "pnr/orchestrator.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace pnr {

/// Slack on gap thresholds absorbing binary rounding of score differences,
/// so that 0.5 - 0.4 counts as a gap of 0.1.
inline constexpr double kGapTolerance = 1e-12;

/// Nearest-rank percentile: the ascending-sorted value at 1-based rank
/// ceil(z / 100 * n), with rank 0 read as rank 1. Throws PreconditionError on
/// an empty list or z outside [0, 100].
double percentile_threshold(std::vector<double> scores, double z);

/// True when better - worse reaches the threshold (within kGapTolerance).
bool meets_gap(double worse, double better, double threshold) noexcept;

struct PlanExample {
    std::string query_id;
    std::string query;
    std::string plan;
    std::string response;
    double score = 0.0;
    double threshold = 0.0;
};

struct EditExample {
    std::string query_id;
    std::string query;
    std::string plan;
    std::string worse;
    std::string better;
    double gap = 0.0;
};

struct RewardExample {
    std::string query_id;
    std::string query;
    std::string worse;
    std::string better;
    double gap = 0.0;
};

struct SelfTrainConfig {
    /// Generator temperature, retrieval budget, token cap, seed and ladder.
    PipelineConfig pipeline;
    double sampling_temperature = 0.7;
    int plan_samples = 32;
    double z = 95.0;
    int edit_pairs = 8;
    double beta = 0.1;
    int reward_pairs = 8;
    double gamma = 0.1;
    /// Queries processed concurrently.
    int jobs = 1;

    void validate() const;
};

template <typename Example>
struct Dataset {
    std::vector<Example> examples;
    /// Ids of queries skipped after a planner or backend failure.
    std::vector<std::string> skipped;
};

/// Per query: plan_samples plans at the sampling temperature, one response
/// each, keep the examples scoring at least the query's percentile threshold.
Dataset<PlanExample> build_plan_dataset(const std::vector<Query>& queries, const Models& models,
                                        const Retriever& retriever, Utility& metric, const SelfTrainConfig& config);

/// Per query: one greedy plan, 2 * edit_pairs responses at the sampling
/// temperature paired consecutively, keep pairs whose gap reaches beta.
Dataset<EditExample> build_edit_dataset(const std::vector<Query>& queries, const Models& models,
                                        const Retriever& retriever, Utility& metric, const SelfTrainConfig& config);

/// Per query: 2 * reward_pairs plans at the sampling temperature, one
/// response each, paired consecutively, keep pairs whose gap reaches gamma.
Dataset<RewardExample> build_reward_dataset(const std::vector<Query>& queries, const Models& models,
                                            const Retriever& retriever, Utility& metric,
                                            const SelfTrainConfig& config);

void write_jsonl(const std::vector<PlanExample>& examples, std::ostream& out);
void write_jsonl(const std::vector<EditExample>& examples, std::ostream& out);
void write_jsonl(const std::vector<RewardExample>& examples, std::ostream& out);

std::vector<RewardExample> read_reward_jsonl(std::istream& in);
std::vector<RewardPair> to_reward_pairs(const std::vector<RewardExample>& examples);

nlohmann::json manifest_json(const SelfTrainConfig& config);

/// Lines of {"query_id": ..., "query": ...}; a missing id defaults to the
/// 1-based line number. Throws FormatError.
std::vector<Query> read_queries_jsonl(std::istream& in);

}  // namespace pnr
