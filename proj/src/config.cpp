#include "pnr/config.hpp"

#include "pnr/error.hpp"
#include "pnr/http_backend.hpp"
#include "pnr/simulator.hpp"
#include "pnr/text.hpp"
#include "pnr/trace.hpp"

#include <fstream>
#include <unordered_map>

namespace pnr {

using nlohmann::json;

SelfTrainConfig EngineConfig::selftrain() const {
    SelfTrainConfig c;
    c.pipeline = pipeline;
    c.sampling_temperature = sampling_temperature;
    c.plan_samples = plan_samples;
    c.z = z;
    c.edit_pairs = edit_pairs;
    c.beta = beta;
    c.reward_pairs = reward_pairs;
    c.gamma = gamma;
    c.jobs = pipeline.jobs;
    return c;
}

json to_json(const EngineConfig& c) {
    json j = {
        {"backend", c.backend},
        {"endpoint", c.endpoint},
        {"model", c.model},
        {"embedding_model", c.embedding_model},
        {"script", c.script},
        {"embedding_dimension", c.embedding_dimension},
        {"min_words", c.min_words},
        {"bm25_k1", c.bm25.k1},
        {"bm25_b", c.bm25.b},
        {"retriever", c.retriever},
        {"mmr_lambda", c.mmr_lambda ? json(*c.mmr_lambda) : json(nullptr)},
        {"mmr_pool", c.mmr_pool},
        {"metric_level", to_string(c.metric.level)},
        {"evidence_depth", c.metric.evidence_depth},
        {"annotations", c.annotations},
        {"sampling_temperature", c.sampling_temperature},
        {"plan_samples", c.plan_samples},
        {"z", c.z},
        {"edit_pairs", c.edit_pairs},
        {"beta", c.beta},
        {"reward_pairs", c.reward_pairs},
        {"gamma", c.gamma},
        {"reward_learning_rate", c.reward.learning_rate},
        {"reward_epochs", c.reward.epochs},
        {"reward_batch_size", c.reward.batch_size},
        {"reward_holdout_fraction", c.reward.holdout_fraction},
        {"reward_loss_space", to_string(c.reward.loss_space)},
        {"reward_separator", c.reward.separator},
        {"corpus", c.corpus},
        {"index", c.index},
        {"queries", c.queries},
        {"datasets_dir", c.datasets_dir},
        {"trace_dir", c.trace_dir},
        {"reward_head", c.reward_head},
    };
    j.update(to_json(c.pipeline));
    return j;
}

EngineConfig engine_config_from_json(const json& j, EngineConfig c) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    static const std::unordered_map<std::string, bool> pipeline_keys = [] {
        std::unordered_map<std::string, bool> keys;
        const json defaults = to_json(PipelineConfig{});
        for (const auto& [k, _] : defaults.items()) keys[k] = true;
        return keys;
    }();
    json pipeline_part = json::object();
    try {
        for (const auto& [key, v] : j.items()) {
            if (pipeline_keys.count(key) != 0) pipeline_part[key] = v;
            else if (key == "backend") c.backend = v.get<std::string>();
            else if (key == "endpoint") c.endpoint = v.get<std::string>();
            else if (key == "model") c.model = v.get<std::string>();
            else if (key == "embedding_model") c.embedding_model = v.get<std::string>();
            else if (key == "script") c.script = v.get<std::string>();
            else if (key == "embedding_dimension") c.embedding_dimension = v.get<int>();
            else if (key == "min_words") c.min_words = v.get<std::size_t>();
            else if (key == "bm25_k1") c.bm25.k1 = v.get<double>();
            else if (key == "bm25_b") c.bm25.b = v.get<double>();
            else if (key == "retriever") c.retriever = v.get<std::string>();
            else if (key == "mmr_lambda") c.mmr_lambda = v.is_null() ? std::nullopt : std::optional(v.get<double>());
            else if (key == "mmr_pool") c.mmr_pool = v.get<int>();
            else if (key == "metric_level") c.metric.level = metric_level_from_string(v.get<std::string>());
            else if (key == "evidence_depth") c.metric.evidence_depth = v.get<int>();
            else if (key == "annotations") c.annotations = v.get<std::string>();
            else if (key == "sampling_temperature") c.sampling_temperature = v.get<double>();
            else if (key == "plan_samples") c.plan_samples = v.get<int>();
            else if (key == "z") c.z = v.get<double>();
            else if (key == "edit_pairs") c.edit_pairs = v.get<int>();
            else if (key == "beta") c.beta = v.get<double>();
            else if (key == "reward_pairs") c.reward_pairs = v.get<int>();
            else if (key == "gamma") c.gamma = v.get<double>();
            else if (key == "reward_learning_rate") c.reward.learning_rate = v.get<double>();
            else if (key == "reward_epochs") c.reward.epochs = v.get<int>();
            else if (key == "reward_batch_size") c.reward.batch_size = v.get<int>();
            else if (key == "reward_holdout_fraction") c.reward.holdout_fraction = v.get<double>();
            else if (key == "reward_loss_space") c.reward.loss_space = loss_space_from_string(v.get<std::string>());
            else if (key == "reward_separator") c.reward.separator = v.get<std::string>();
            else if (key == "corpus") c.corpus = v.get<std::string>();
            else if (key == "index") c.index = v.get<std::string>();
            else if (key == "queries") c.queries = v.get<std::string>();
            else if (key == "datasets_dir") c.datasets_dir = v.get<std::string>();
            else if (key == "trace_dir") c.trace_dir = v.get<std::string>();
            else if (key == "reward_head") c.reward_head = v.get<std::string>();
            else throw ConfigError("unknown configuration key: " + key);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("configuration: ") + e.what());
    }
    c.pipeline = pipeline_config_from_json(pipeline_part, c.pipeline);
    c.reward.seed = c.pipeline.seed;
    if (c.backend != "scripted" && c.backend != "http") throw ConfigError("backend must be \"scripted\" or \"http\"");
    if (c.retriever != "bm25" && c.retriever != "dense") throw ConfigError("retriever must be \"bm25\" or \"dense\"");
    return c;
}

EngineConfig load_engine_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("configuration file " + path + " is not valid JSON");
    return engine_config_from_json(j);
}

void load_script(ScriptedBackend& backend, std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto where = "script line " + std::to_string(line_no);
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) throw FormatError(where + ": not a JSON object");
        try {
            if (rec.contains("prompt")) {
                backend.on_generate(rec["prompt"].get<std::string>(), rec.value("temperature", 0.0),
                                    rec.at("response").get<std::string>());
            } else if (rec.contains("embed")) {
                auto values = rec.at("vector").get<std::vector<double>>();
                backend.on_embed(rec["embed"].get<std::string>(),
                                 Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
            } else if (rec.contains("premise")) {
                auto label = rec.at("label").get<std::string>();
                backend.on_nli(rec["premise"].get<std::string>(), rec.at("hypothesis").get<std::string>(),
                               {label == "entailed" ? NliLabel::entailed : NliLabel::not_entailed,
                                rec.value("confidence", 1.0)});
            } else {
                throw FormatError(where + ": unrecognised script entry");
            }
        } catch (const json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
    }
}

EngineBackends make_backends(const EngineConfig& config) {
    EngineBackends out;
    if (config.backend == "scripted") {
        auto backend = make_simulated_backend(config.embedding_dimension);
        if (!config.script.empty()) {
            std::ifstream in(config.script);
            if (!in) throw ConfigError("cannot open script file " + config.script);
            load_script(*backend, in);
        }
        out.models = Models::uniform(backend);
        out.metric = {backend, backend, backend, backend};
        out.scripted = backend;
        return out;
    }
    HttpEndpoint ep;
    if (config.endpoint.empty()) {
        ep = HttpEndpoint::from_env();
    } else {
        ep.base_url = config.endpoint;
        if (const char* key = std::getenv("PNR_API_KEY")) ep.api_key = key;
    }
    if (!config.model.empty()) ep.model = config.model;
    if (!config.embedding_model.empty()) ep.embedding_model = config.embedding_model;
    auto http = std::make_shared<HttpBackend>(ep);
    out.models = Models::uniform(http);
    auto judge = std::make_shared<PromptedNli>(http);
    out.metric = {judge, http, http, judge};
    return out;
}

MmrRetriever::MmrRetriever(const Index& index, double lambda, int pool_size)
    : index_(index), lambda_(lambda), pool_size_(pool_size) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("MMR lambda must lie in [0, 1]");
    if (pool_size < 1) throw ConfigError("MMR pool size must be positive");
}

std::vector<ScoredDoc> MmrRetriever::retrieve(std::string_view query, int k) const {
    if (k < 1) throw PreconditionError("retrieve needs k >= 1");
    int pool = std::max(pool_size_, k);
    auto hits = index_.retrieve(query, pool);
    std::unordered_map<std::string, double> score;
    for (const auto& h : hits) score[h.id] = h.score;
    std::vector<ScoredDoc> out;
    for (auto& id : mmr_rerank(index_, query, pool, lambda_, k)) {
        double s = score[id];
        out.push_back({std::move(id), s});
    }
    return out;
}

}  // namespace pnr
