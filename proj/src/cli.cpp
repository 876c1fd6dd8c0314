#include "pnr/cli.hpp"

#include "pnr/config.hpp"
#include "pnr/error.hpp"
#include "pnr/text.hpp"
#include "pnr/trace.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace pnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Routes the default logger to `err` for the duration of one invocation.
class LogRedirect {
public:
    explicit LogRedirect(std::ostream& err) : previous_(spdlog::default_logger()) {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
        auto logger = std::make_shared<spdlog::logger>("pnr", sink);
        logger->set_pattern("%l: %v");
        spdlog::set_default_logger(logger);
    }
    ~LogRedirect() { spdlog::set_default_logger(previous_); }
    LogRedirect(const LogRedirect&) = delete;
    LogRedirect& operator=(const LogRedirect&) = delete;

private:
    std::shared_ptr<spdlog::logger> previous_;
};

std::ifstream open_in(const std::string& path, std::string_view what) {
    if (path.empty()) throw ConfigError(std::string("no ") + std::string(what) + " file configured");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + std::string(what) + " file " + path);
    return in;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

std::string utc_stamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

// A generation budget b as N plans x T rounds: N = T = sqrt(b) for perfect
// squares, otherwise b plans of one round.
std::pair<int, int> split_budget(int budget) {
    if (budget < 1) throw PreconditionError("generation budget must be at least 1");
    int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(budget))));
    if (root * root == budget) return {root, root};
    return {budget, 1};
}

template <typename Fn>
auto parallel_map(std::size_t n, int jobs, Fn fn) {
    using R = decltype(fn(std::size_t{0}));
    std::vector<R> results(n);
    auto step = static_cast<std::size_t>(std::max(jobs, 1));
    for (std::size_t start = 0; start < n; start += step) {
        std::vector<std::future<void>> running;
        for (std::size_t i = start; i < std::min(n, start + step); ++i) {
            running.push_back(std::async(step == 1 ? std::launch::deferred : std::launch::async,
                                         [&, i] { results[i] = fn(i); }));
        }
        for (auto& f : running) f.get();
    }
    return results;
}

struct Engine {
    EngineConfig config;
    EngineBackends backends;
    std::unique_ptr<Index> index;
    std::unique_ptr<Retriever> wrapped;
    SubtopicAnnotations annotations;

    const Retriever& retriever() const { return wrapped ? *wrapped : *index; }

    IcatEvaluator evaluator() const { return IcatEvaluator(config.metric, retriever(), backends.metric, annotations); }
};

Engine open_engine(const EngineConfig& config) {
    Engine e;
    e.config = config;
    {
        auto in = open_in(config.index, "index");
        e.index = std::make_unique<Index>(load_index(in));
    }
    e.backends = make_backends(config);
    if (config.retriever == "dense") {
        if (!e.backends.models.embedder) throw ConfigError("dense retrieval needs an embedding backend");
        e.wrapped = std::make_unique<DenseRetriever>(e.index->corpus(), *e.backends.models.embedder);
    } else if (config.mmr_lambda) {
        e.wrapped = std::make_unique<MmrRetriever>(*e.index, *config.mmr_lambda, config.mmr_pool);
    }
    if (!config.annotations.empty()) {
        auto in = open_in(config.annotations, "annotations");
        e.annotations = read_annotations_jsonl(in);
    }
    return e;
}

std::optional<RewardHead> load_head_file(const std::string& path) {
    if (path.empty()) return std::nullopt;
    auto in = open_in(path, "reward head");
    return load_head(in);
}

std::vector<Query> load_queries(const std::string& path) {
    auto in = open_in(path, "queries");
    auto queries = read_queries_jsonl(in);
    if (queries.empty()) throw ConfigError("queries file " + path + " holds no queries");
    return queries;
}

json report_json(const MetricReport& r) {
    return {{"coverage", r.coverage},
            {"factuality", r.factuality},
            {"f_measure", r.f_measure},
            {"level", to_string(r.level)},
            {"degenerate", r.degenerate},
            {"claims", r.claims},
            {"supported_claims", r.supported_claims},
            {"subtopics", r.subtopics},
            {"covered_subtopics", r.covered_subtopics}};
}

// Options shared by every command; unset values leave the file's value.
struct Overrides {
    std::string config_path;
    bool show_config = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> backend, script, endpoint, index, corpus, queries, trace_dir, head, datasets_dir;
    bool no_timings = false;

    void register_on(CLI::App& app) {
        app.add_option("--config", config_path, "JSON configuration file");
        app.add_flag("--show-config", show_config, "print the effective configuration and exit");
        app.add_option("--seed", seed, "base random seed");
        app.add_option("--jobs", jobs, "concurrency bound");
        app.add_option("--backend", backend, "scripted or http");
        app.add_option("--script", script, "JSONL script for the scripted backend");
        app.add_option("--endpoint", endpoint, "base URL of a chat-completion server");
        app.add_option("--index", index, "index file");
        app.add_option("--corpus", corpus, "corpus JSONL file");
        app.add_option("--queries", queries, "queries JSONL file");
        app.add_option("--trace-dir", trace_dir, "directory for run traces");
        app.add_option("--head", head, "reward head file");
        app.add_option("--datasets-dir", datasets_dir, "directory for self-training datasets");
        app.add_flag("--no-timings", no_timings, "record all timings as 0 for reproducible traces");
    }

    EngineConfig apply(EngineConfig c) const {
        if (seed) c.pipeline.seed = *seed, c.reward.seed = *seed;
        if (jobs) c.pipeline.jobs = *jobs;
        if (backend) c.backend = *backend;
        if (script) c.script = *script;
        if (endpoint) c.endpoint = *endpoint;
        if (index) c.index = *index;
        if (corpus) c.corpus = *corpus;
        if (queries) c.queries = *queries;
        if (trace_dir) c.trace_dir = *trace_dir;
        if (head) c.reward_head = *head;
        if (datasets_dir) c.datasets_dir = *datasets_dir;
        if (no_timings) c.pipeline.record_timings = false;
        return engine_config_from_json(json::object(), c);  // re-validates enums
    }
};

struct PipelineFlags {
    std::optional<int> n_plans, rounds, budget, k;
    bool no_planning = false;
    bool no_reward = false;

    void register_on(CLI::App& cmd) {
        cmd.add_option("--n-plans", n_plans, "plans per query (N)");
        cmd.add_option("--rounds", rounds, "generations per plan, initial included (T)");
        cmd.add_option("--budget", budget, "generation budget; sets N = T = sqrt(budget) or N = budget, T = 1");
        cmd.add_option("--k", k, "retrieval budget per plan");
        cmd.add_flag("--no-planning", no_planning, "use the trivial single-step plan everywhere");
        cmd.add_flag("--no-reward", no_reward, "skip reward selection and return the first candidate");
    }

    void apply(EngineConfig& c) const {
        if (budget) {
            if (n_plans || rounds) throw ConfigError("--budget cannot be combined with --n-plans or --rounds");
            std::tie(c.pipeline.n_plans, c.pipeline.rounds) = split_budget(*budget);
        }
        if (n_plans) c.pipeline.n_plans = *n_plans;
        if (rounds) c.pipeline.rounds = *rounds;
        if (k) c.pipeline.retrieval_budget = *k;
        if (no_planning) c.pipeline.planning = false;
        c.pipeline.validate();
    }
};

const RewardHead* head_for(const std::optional<RewardHead>& head, bool no_reward) {
    if (no_reward || !head) return nullptr;
    return &*head;
}

fs::path trace_path_for(const EngineConfig& c, std::string_view query) {
    std::string name = hash_hex(query);
    if (c.pipeline.record_timings) name += "-" + utc_stamp();
    return fs::path(c.trace_dir) / (name + ".jsonl");
}

void save_trace(const RunTrace& trace, const fs::path& path) {
    auto out = open_out(path);
    write_trace(trace, out);
    spdlog::info("trace written to {}", path.string());
}

// ---- commands ----

int cmd_index(const EngineConfig& c, const std::string& out_path, bool force, std::ostream& out) {
    if (c.corpus.empty()) throw ConfigError("no corpus file given");
    std::ifstream in(c.corpus);
    if (!in) throw ConfigError("cannot open corpus file " + c.corpus);
    if (fs::exists(out_path) && !force) {
        throw ConfigError("refusing to overwrite existing index " + out_path + " (pass --force)");
    }
    auto records = read_corpus_jsonl(in);
    auto index = build_index(ingest_corpus(records, c.min_words), c.bm25);
    auto file = open_out(out_path);
    save_index(index, file);
    out << "ingested " << index.size() << " / " << records.size() << '\n';
    return 0;
}

int cmd_ask(const EngineConfig& c, const std::string& query, const PipelineFlags& flags,
            const std::optional<std::string>& trace_out, std::ostream& out) {
    auto engine = open_engine(c);
    auto head = flags.no_reward ? std::nullopt : load_head_file(c.reward_head);
    if (flags.no_reward) spdlog::warn("reward selection disabled; returning the first candidate");
    fs::path path = trace_out ? fs::path(*trace_out) : trace_path_for(c, query);
    try {
        auto result = run_pipeline(query, c.pipeline, engine.backends.models, engine.retriever(),
                                   head_for(head, flags.no_reward));
        save_trace(result.trace, path);
        out << result.final_text << '\n';
    } catch (const PipelineError& e) {
        save_trace(e.trace(), path);
        throw;
    }
    return 0;
}

int cmd_build_datasets(const EngineConfig& c, std::ostream& out) {
    auto engine = open_engine(c);
    auto queries = load_queries(c.queries);
    auto st = c.selftrain();
    st.pipeline.jobs = 1;
    auto metric = engine.evaluator();
    const auto& models = engine.backends.models;

    auto plan = build_plan_dataset(queries, models, engine.retriever(), metric, st);
    auto edit = build_edit_dataset(queries, models, engine.retriever(), metric, st);
    auto reward = build_reward_dataset(queries, models, engine.retriever(), metric, st);

    fs::path dir = c.datasets_dir;
    {
        auto f = open_out(dir / "plan.jsonl");
        write_jsonl(plan.examples, f);
    }
    {
        auto f = open_out(dir / "edit.jsonl");
        write_jsonl(edit.examples, f);
    }
    {
        auto f = open_out(dir / "reward.jsonl");
        write_jsonl(reward.examples, f);
    }
    auto manifest = manifest_json(st);
    manifest["queries"] = queries.size();
    manifest["examples"] = {{"plan", plan.examples.size()},
                            {"edit", edit.examples.size()},
                            {"reward", reward.examples.size()}};
    manifest["skipped"] = {{"plan", plan.skipped}, {"edit", edit.skipped}, {"reward", reward.skipped}};
    {
        auto f = open_out(dir / "manifest.json");
        f << manifest.dump(2) << '\n';
    }
    out << "plan " << plan.examples.size() << "\nedit " << edit.examples.size() << "\nreward "
        << reward.examples.size() << '\n';
    const auto n = queries.size();
    if (plan.skipped.size() == n && edit.skipped.size() == n && reward.skipped.size() == n) {
        throw Error("every query failed; see warnings");
    }
    return 0;
}

int cmd_train_reward(const EngineConfig& c, const std::string& data_path, const std::string& head_path,
                     std::ostream& out) {
    auto in = open_in(data_path, "reward dataset");
    auto pairs = to_reward_pairs(read_reward_jsonl(in));
    if (pairs.empty()) throw PreconditionError("reward dataset " + data_path + " holds no pairs");
    auto backends = make_backends(c);
    if (!backends.models.embedder) throw ConfigError("reward training needs an embedding backend");
    auto report = train_head(pairs, *backends.models.embedder, c.reward);
    auto file = open_out(head_path);
    save_head(report.head, file);
    out << "pairs " << report.train_pairs << " train, " << report.holdout_pairs << " held out\n";
    out << "loss " << report.initial_loss << " -> " << report.final_loss << '\n';
    out << "held-out accuracy ";
    if (report.holdout_accuracy) out << *report.holdout_accuracy << '\n';
    else out << "n/a\n";
    return 0;
}

struct QueryOutcome {
    MetricReport report;
    std::size_t pool = 0;
};

std::vector<QueryOutcome> run_and_evaluate(const Engine& engine, const std::vector<Query>& queries,
                                           const EngineConfig& c, const RewardHead* head) {
    auto per_query = c.pipeline;
    per_query.jobs = 1;
    return parallel_map(queries.size(), c.pipeline.jobs, [&](std::size_t i) {
        auto result = run_pipeline(queries[i].text, per_query, engine.backends.models, engine.retriever(), head);
        if (!c.trace_dir.empty()) save_trace(result.trace, trace_path_for(c, queries[i].text));
        return QueryOutcome{engine.evaluator().evaluate(queries[i], result.final_text), result.trace.pool.size()};
    });
}

int cmd_eval(const EngineConfig& c, const std::optional<std::string>& responses_path, bool no_reward,
             std::ostream& out) {
    auto engine = open_engine(c);
    auto queries = load_queries(c.queries);
    std::vector<MetricReport> reports;
    if (responses_path) {
        auto in = open_in(*responses_path, "responses");
        std::map<std::string, std::string, std::less<>> responses;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto rec = json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.is_object() || !rec.contains("query_id") || !rec.contains("response") ||
                !rec["response"].is_string()) {
                throw FormatError("responses line " + std::to_string(line_no) +
                                  ": expected {\"query_id\": ..., \"response\": text}");
            }
            const auto& id = rec["query_id"];
            responses[id.is_string() ? id.get<std::string>() : id.dump()] = rec["response"].get<std::string>();
        }
        auto evaluator = engine.evaluator();
        for (const auto& q : queries) {
            auto it = responses.find(q.id);
            if (it == responses.end()) throw ConfigError("no response for query " + q.id);
            reports.push_back(evaluator.evaluate(q, it->second));
        }
    } else {
        auto head = no_reward ? std::nullopt : load_head_file(c.reward_head);
        EngineConfig quiet = c;
        quiet.trace_dir.clear();
        for (auto& o : run_and_evaluate(engine, queries, quiet, head_for(head, no_reward))) reports.push_back(o.report);
    }
    for (std::size_t i = 0; i < queries.size(); ++i) {
        out << json{{"query_id", queries[i].id}, {"report", report_json(reports[i])}}.dump() << '\n';
    }
    out << json{{"mean", report_json(mean_report(reports))}, {"queries", queries.size()}}.dump() << '\n';
    return 0;
}

int cmd_sweep(const EngineConfig& c, std::vector<int> budgets, std::vector<int> n_plans, std::vector<int> rounds,
              std::vector<double> zs, bool no_reward, std::ostream& out) {
    auto engine = open_engine(c);
    auto queries = load_queries(c.queries);
    auto head = no_reward ? std::nullopt : load_head_file(c.reward_head);

    struct Cell {
        std::optional<int> budget;
        int n_plans, rounds;
    };
    std::vector<Cell> cells;
    if (!budgets.empty()) {
        if (!n_plans.empty() || !rounds.empty()) throw ConfigError("sweep takes --budgets or --n-plans/--rounds, not both");
        for (int b : budgets) {
            auto [n, t] = split_budget(b);
            cells.push_back({b, n, t});
        }
    } else {
        if (n_plans.empty()) n_plans = {c.pipeline.n_plans};
        if (rounds.empty()) rounds = {c.pipeline.rounds};
        for (int n : n_plans)
            for (int t : rounds) cells.push_back({std::nullopt, n, t});
    }

    // Plan-dataset retention per z; independent of N and T.
    std::map<double, std::size_t> retained;
    for (double z : zs) {
        auto st = c.selftrain();
        st.z = z;
        st.pipeline.jobs = 1;
        auto metric = engine.evaluator();
        retained[z] = build_plan_dataset(queries, engine.backends.models, engine.retriever(), metric, st).examples.size();
    }

    out << "budget\tn_plans\trounds\tz\tqueries\tpool\tcoverage\tfactuality\tf_measure\tplan_examples\n";
    EngineConfig run = c;
    run.trace_dir.clear();
    for (const auto& cell : cells) {
        run.pipeline.n_plans = cell.n_plans;
        run.pipeline.rounds = cell.rounds;
        run.pipeline.validate();
        auto outcomes = run_and_evaluate(engine, queries, run, head_for(head, no_reward));
        std::vector<MetricReport> reports;
        std::size_t pool = 0;
        for (const auto& o : outcomes) {
            reports.push_back(o.report);
            pool = std::max(pool, o.pool);
        }
        auto mean = mean_report(reports);
        auto row = [&](std::string z, std::string kept) {
            out << (cell.budget ? std::to_string(*cell.budget) : std::to_string(cell.n_plans * cell.rounds)) << '\t'
                << cell.n_plans << '\t' << cell.rounds << '\t' << z << '\t' << queries.size() << '\t' << pool << '\t'
                << mean.coverage << '\t' << mean.factuality << '\t' << mean.f_measure << '\t' << kept << '\n';
        };
        if (zs.empty()) row("-", "-");
        for (double z : zs) {
            std::ostringstream zt;
            zt << z;
            row(zt.str(), std::to_string(retained[z]));
        }
    }
    return 0;
}

int cmd_inspect_trace(const std::string& path, std::ostream& out) {
    auto in = open_in(path, "trace");
    auto trace = read_trace(in);
    out << "query: " << trace.query << '\n';
    out << "plans: " << trace.plans.size() << " (N=" << trace.config.n_plans << ", T=" << trace.config.rounds << ")\n";
    for (std::size_t i = 0; i < trace.plans.size(); ++i) {
        out << "  plan " << i << ": " << trace.plans[i].plan.steps.size() << " steps, " << trace.plans[i].attempts
            << " attempt(s)\n";
    }
    out << "pool: " << trace.pool.size() << " candidates\n";
    if (trace.selected) {
        const auto& s = trace.pool.candidates.at(*trace.selected);
        out << "selected: pool index " << *trace.selected << " (plan " << s.plan_index << ", depth " << s.edit_depth
            << "), reward " << (trace.reward_used ? "head" : "none") << '\n';
    } else {
        out << "selected: none\n";
    }
    for (const auto& t : trace.timings) out << "timing " << t.stage << ": " << t.millis << " ms\n";
    if (!trace.error.empty()) out << "error: " << trace.error << '\n';
    auto problems = check_trace(trace);
    for (const auto& p : problems) out << "problem: " << p << '\n';
    if (problems.empty()) {
        out << "trace ok\n";
        return 0;
    }
    return 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    LogRedirect redirect(err);
    CLI::App app{"Plan-and-refine answering engine", "pnr"};
    app.require_subcommand(0, 1);
    app.fallthrough();
    Overrides overrides;
    overrides.register_on(app);

    auto* index_cmd = app.add_subcommand("index", "build a BM25 index from a corpus");
    std::optional<std::string> corpus_arg, index_out;
    std::optional<std::size_t> min_words;
    bool force = false;
    index_cmd->add_option("corpus", corpus_arg, "corpus JSONL file");
    index_cmd->add_option("-o,--out", index_out, "index file to write");
    index_cmd->add_option("--min-words", min_words, "minimum document length in words");
    index_cmd->add_flag("--force", force, "overwrite an existing index");

    auto* ask_cmd = app.add_subcommand("ask", "answer one query and write its trace");
    std::string query;
    PipelineFlags ask_flags;
    std::optional<std::string> trace_out;
    ask_cmd->add_option("query", query, "the question")->required();
    ask_flags.register_on(*ask_cmd);
    ask_cmd->add_option("--trace-out", trace_out, "write the trace to this exact path");

    auto* build_cmd = app.add_subcommand("build-datasets", "build plan, edit and reward datasets");
    std::optional<int> plan_samples, edit_pairs, reward_pairs;
    std::optional<double> z, beta, gamma, sampling_temperature;
    build_cmd->add_option("--plan-samples", plan_samples, "plans sampled per query");
    build_cmd->add_option("--z", z, "percentile threshold for plan examples");
    build_cmd->add_option("--edit-pairs", edit_pairs, "edit pairs attempted per query");
    build_cmd->add_option("--beta", beta, "minimum score gap of edit pairs");
    build_cmd->add_option("--reward-pairs", reward_pairs, "reward pairs attempted per query");
    build_cmd->add_option("--gamma", gamma, "minimum score gap of reward pairs");
    build_cmd->add_option("--sampling-temperature", sampling_temperature, "temperature of sampled rollouts");

    auto* train_cmd = app.add_subcommand("train-reward", "train a reward head on reward pairs");
    std::optional<std::string> train_data, head_out;
    std::optional<int> epochs, batch_size;
    std::optional<double> learning_rate, holdout;
    std::optional<std::string> loss_space;
    train_cmd->add_option("--data", train_data, "reward dataset (default: <datasets-dir>/reward.jsonl)");
    train_cmd->add_option("-o,--out", head_out, "head file to write (default: configured reward_head)");
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--batch-size", batch_size);
    train_cmd->add_option("--learning-rate", learning_rate);
    train_cmd->add_option("--holdout", holdout, "held-out fraction of pairs");
    train_cmd->add_option("--loss-space", loss_space, "probability or logit");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate answers for a query set");
    std::optional<std::string> responses;
    PipelineFlags eval_flags;
    eval_flags.register_on(*eval_cmd);
    eval_cmd->add_option("--responses", responses, "JSONL of {query_id, response} to score instead of running the pipeline");

    auto* sweep_cmd = app.add_subcommand("sweep", "grid over budget, N, T and z");
    std::vector<int> sweep_budgets, sweep_n, sweep_t;
    std::vector<double> sweep_z;
    bool sweep_no_reward = false;
    sweep_cmd->add_option("--budgets", sweep_budgets, "generation budgets")->delimiter(',');
    sweep_cmd->add_option("--n-plans", sweep_n, "values of N")->delimiter(',');
    sweep_cmd->add_option("--rounds", sweep_t, "values of T")->delimiter(',');
    sweep_cmd->add_option("--z", sweep_z, "plan-dataset percentiles")->delimiter(',');
    sweep_cmd->add_flag("--no-reward", sweep_no_reward, "skip reward selection");

    auto* inspect_cmd = app.add_subcommand("inspect-trace", "summarize and check a run trace");
    std::string trace_file;
    inspect_cmd->add_option("trace", trace_file, "trace file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        EngineConfig config;
        if (!overrides.config_path.empty()) config = load_engine_config(overrides.config_path);
        config = overrides.apply(config);

        if (index_cmd->parsed()) {
            if (corpus_arg) config.corpus = *corpus_arg;
            if (index_out) config.index = *index_out;
            if (min_words) config.min_words = *min_words;
        }
        if (ask_cmd->parsed()) ask_flags.apply(config);
        if (eval_cmd->parsed()) eval_flags.apply(config);
        if (build_cmd->parsed()) {
            if (plan_samples) config.plan_samples = *plan_samples;
            if (z) config.z = *z;
            if (edit_pairs) config.edit_pairs = *edit_pairs;
            if (beta) config.beta = *beta;
            if (reward_pairs) config.reward_pairs = *reward_pairs;
            if (gamma) config.gamma = *gamma;
            if (sampling_temperature) config.sampling_temperature = *sampling_temperature;
            config.selftrain().validate();
        }
        if (train_cmd->parsed()) {
            if (epochs) config.reward.epochs = *epochs;
            if (batch_size) config.reward.batch_size = *batch_size;
            if (learning_rate) config.reward.learning_rate = *learning_rate;
            if (holdout) config.reward.holdout_fraction = *holdout;
            if (loss_space) config.reward.loss_space = loss_space_from_string(*loss_space);
            config.reward.validate();
        }

        if (overrides.show_config) {
            out << to_json(config).dump(2) << '\n';
            return 0;
        }
        if (index_cmd->parsed()) return cmd_index(config, config.index, force, out);
        if (ask_cmd->parsed()) return cmd_ask(config, query, ask_flags, trace_out, out);
        if (build_cmd->parsed()) return cmd_build_datasets(config, out);
        if (train_cmd->parsed()) {
            std::string data = train_data ? *train_data : (fs::path(config.datasets_dir) / "reward.jsonl").string();
            std::string dest = head_out ? *head_out : config.reward_head;
            if (dest.empty()) throw ConfigError("no head output path: pass --out or set reward_head");
            return cmd_train_reward(config, data, dest, out);
        }
        if (eval_cmd->parsed()) return cmd_eval(config, responses, eval_flags.no_reward, out);
        if (sweep_cmd->parsed()) return cmd_sweep(config, sweep_budgets, sweep_n, sweep_t, sweep_z, sweep_no_reward, out);
        if (inspect_cmd->parsed()) return cmd_inspect_trace(trace_file, out);
        err << app.help();
        return 1;
    } catch (const PreconditionError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace pnr
