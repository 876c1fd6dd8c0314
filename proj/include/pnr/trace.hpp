#pragma once

// Run traces as line-delimited JSON. One object per line, discriminated by
// "type":
//
//   run        query, config
//   plan       plan_index, attempts, temperature, plan (wire-schema object)
//   context    plan_index, budget, docs [{id, step, score}]
//   candidate  plan_index, edit_depth, temperature, parent, score, text
//   selection  plan_index, edit_depth, pool_index, score, reward ("head"|"none")
//   timing     stage, ms
//   error      message
//
// Lines appear in that order; candidates in pool order.

#include "pnr/orchestrator.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace pnr {

nlohmann::json to_json(const PipelineConfig& config);
/// Unknown keys are rejected with ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});

void write_trace(const RunTrace& trace, std::ostream& out);
/// Throws FormatError on malformed lines.
RunTrace read_trace(std::istream& in);

/// Structural problems of a trace: pool size, duplicate or missing
/// (plan_index, edit_depth) pairs, selection outside the pool or not the
/// maximal score. Empty when the trace is sound.
std::vector<std::string> check_trace(const RunTrace& trace);

}  // namespace pnr
