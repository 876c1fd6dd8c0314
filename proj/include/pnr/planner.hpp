#pragma once

// Plan prompts, plan parsing and plan sampling with the JSON retry ladder.
//
// Plan wire schema (also used inside dataset records):
//
//   {"aspects": [{"title": "...", "reason": "...", "query": "..."}, ...]}
//
// All three string fields are required and must be nonempty after trimming.
// Additional keys are ignored.

#include "pnr/backends.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pnr {

struct PlanStep {
    std::string aspect;
    std::string reason;
    std::string query;

    bool operator==(const PlanStep&) const = default;
};

struct Plan {
    std::vector<PlanStep> steps;
    double origin_temperature = 0.0;
    std::string raw_text;
};

/// Canonical JSON text for a list of steps in the wire schema.
std::string serialize_plan(const std::vector<PlanStep>& steps);

/// Single-step plan whose only retrieval query is the user query itself.
/// Used when planning is disabled (Best-of-N mode).
Plan trivial_plan(std::string_view query);

enum class PlanParseErrorKind { malformed_json, not_an_object, missing_field, wrong_type, empty_field, empty_steps };

const char* to_string(PlanParseErrorKind kind) noexcept;

struct PlanParseError {
    PlanParseErrorKind kind;
    std::string message;
};

using PlanParseResult = std::variant<Plan, PlanParseError>;

/// Parses the planner's output. Leading or trailing prose around the JSON
/// object (for example a markdown code fence) is tolerated: the outermost
/// '{' ... '}' span is parsed.
PlanParseResult parse_plan(std::string_view text);

std::string build_plan_prompt(std::string_view query);

struct RetryLadder {
    double base_temperature = 0.7;
    double increment = 0.1;
    double max_temperature = 1.0;
    int max_attempts = 5;

    static RetryLadder starting_at(double temperature);

    /// Throws PreconditionError when base > max, max > 1, increment <= 0 or
    /// max_attempts < 1.
    void validate() const;

    /// Temperature of the given zero-based attempt, min(base + attempt *
    /// increment, max), rounded to six decimals.
    double temperature_at(int attempt) const;
};

struct PlanSamplingOptions {
    int max_output_tokens = 4096;
    /// Slot i is requested with seed + i; none when unset.
    std::optional<std::uint64_t> seed;
};

/// One sampled plan slot plus how many generations it took.
struct SampledPlan {
    Plan plan;
    int attempts = 1;
};

/// Samples n plans. Each slot retries on parse failure along the ladder and
/// throws PlanLadderExhausted with the last diagnostic when it runs out.
std::vector<SampledPlan> sample_plans(std::string_view query, int n, const RetryLadder& ladder,
                                      GenerationBackend& backend, const PlanSamplingOptions& options = {});

}  // namespace pnr
