#pragma once

// Engine configuration: one flat JSON object. Defaults: N=4, T=4, k=40,
// temperatures 0.7/0.1/0.0, z=95, beta=gamma=0.1, B=32/8/8, 4096 output
// tokens.

#include "pnr/metric.hpp"
#include "pnr/orchestrator.hpp"
#include "pnr/retrieval.hpp"
#include "pnr/reward.hpp"
#include "pnr/selftrain.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace pnr {

struct EngineConfig {
    // backends
    std::string backend = "scripted";  // "scripted" or "http"
    std::string endpoint;              // falls back to PNR_ENDPOINT
    std::string model;
    std::string embedding_model;
    std::string script;  // scripted backend: optional JSONL script
    int embedding_dimension = 64;

    PipelineConfig pipeline;

    // retrieval
    std::size_t min_words = kDefaultMinWords;
    Bm25Params bm25;
    std::string retriever = "bm25";  // "bm25" or "dense"
    std::optional<double> mmr_lambda;
    int mmr_pool = 1000;

    // metric
    IcatConfig metric;
    std::string annotations;

    // self-training
    double sampling_temperature = 0.7;
    int plan_samples = 32;
    double z = 95.0;
    int edit_pairs = 8;
    double beta = 0.1;
    int reward_pairs = 8;
    double gamma = 0.1;

    TrainConfig reward;

    // paths
    std::string corpus;
    std::string index = "pnr.index";
    std::string queries;
    std::string datasets_dir = "datasets";
    std::string trace_dir = "traces";
    std::string reward_head;

    SelfTrainConfig selftrain() const;
};

nlohmann::json to_json(const EngineConfig& config);
/// Overlays the keys of `j` on `base`. Unknown keys and wrong types are
/// ConfigErrors.
EngineConfig engine_config_from_json(const nlohmann::json& j, EngineConfig base = {});
EngineConfig load_engine_config(const std::string& path);

/// Everything the commands need to talk to models.
struct EngineBackends {
    Models models;
    IcatBackends metric;
    /// Set for the scripted backend so callers can inspect its call log.
    std::shared_ptr<ScriptedBackend> scripted;
};

EngineBackends make_backends(const EngineConfig& config);

/// Lines of {"prompt", "temperature", "response"}, {"embed", "vector"} or
/// {"premise", "hypothesis", "label"} loaded into a scripted backend.
void load_script(ScriptedBackend& backend, std::istream& in);

/// BM25 hits re-ordered by MMR over a candidate pool.
class MmrRetriever final : public Retriever {
public:
    MmrRetriever(const Index& index, double lambda, int pool_size);
    std::vector<ScoredDoc> retrieve(std::string_view query, int k) const override;
    const Document& document(std::string_view id) const override { return index_.document(id); }

private:
    const Index& index_;
    double lambda_;
    int pool_size_;
};

}  // namespace pnr
