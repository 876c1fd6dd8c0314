// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include "pnr/cli.hpp"
#include "pnr/error.hpp"
#include "pnr/metric.hpp"
#include "pnr/orchestrator.hpp"
#include "pnr/planner.hpp"
#include "pnr/retrieval.hpp"
#include "pnr/reward.hpp"
#include "pnr/selftrain.hpp"
#include "pnr/simulator.hpp"
#include "pnr/trace.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace pnr;
using namespace pnr::testing;

namespace {

// Collects the first few failure messages of one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (notes_.size() < 3) notes_.push_back(what);
    }
    bool ok() const { return failures_ == 0; }
    std::string summary() const {
        std::string s = std::to_string(failures_) + " failure(s)";
        for (const auto& n : notes_) s += "; " + n;
        return s;
    }

private:
    int failures_ = 0;
    std::vector<std::string> notes_;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Index topic_index(std::uint64_t seed, int docs_per_topic = 6) {
    Rng rng(seed);
    return build_index(ingest_corpus(topic_records(docs_per_topic, rng)));
}

std::vector<Query> topic_queries(int n) {
    std::vector<Query> out;
    auto texts = topic_questions(n);
    for (int i = 0; i < n; ++i) out.push_back({"q" + std::to_string(i), texts[static_cast<std::size_t>(i)]});
    return out;
}

void pool_accounting(Check& c, std::string& detail) {
    auto index = topic_index(1);
    auto backend = make_simulated_backend(16);
    auto models = Models::uniform(backend);
    PipelineConfig cfg;
    cfg.record_timings = false;
    auto start = std::chrono::steady_clock::now();
    for (const auto& q : topic_queries(5)) {
        auto before = backend->call_count();
        auto trace = run_pipeline(q.text, cfg, models, index, nullptr).trace;
        const auto& pool = trace.pool;
        c.expect(pool.size() == 16, "pool size " + std::to_string(pool.size()));
        std::set<std::pair<int, int>> seen;
        for (const auto& cand : pool.candidates) seen.insert({cand.plan_index, cand.edit_depth});
        c.expect(seen.size() == 16, "duplicate (plan_index, edit_depth)");
        for (int p = 0; p < 4; ++p)
            for (int d = 0; d < 4; ++d) c.expect(seen.count({p, d}) == 1, "missing pair");
        c.expect(check_trace(trace).empty(), "trace problems");

        // Every depth-d candidate is the editor's answer to the depth-(d-1)
        // text of the same plan.
        auto log = backend->call_log();
        std::map<std::string, const CallRecord*> by_prompt;
        for (std::size_t i = before; i < log.size(); ++i) {
            if (log[i].kind == CallRecord::Kind::generate) by_prompt[log[i].input] = &log[i];
        }
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto& cand = pool.candidates[i];
            if (cand.edit_depth == 0) continue;
            const auto& parent = pool.candidates[i - 1];
            c.expect(parent.plan_index == cand.plan_index && parent.edit_depth == cand.edit_depth - 1, "chain order");
            auto prompt = build_edit_prompt(q.text, trace.plans[static_cast<std::size_t>(cand.plan_index)].plan, parent.text);
            auto it = by_prompt.find(prompt);
            c.expect(it != by_prompt.end(), "no edit call for a chain link");
            if (it == by_prompt.end()) continue;
            GenerationRequest req;
            req.prompt = prompt;
            req.temperature = it->second->temperature;
            req.seed = it->second->seed;
            c.expect(simulate_response(req) == cand.text, "edit output does not match its parent's edit call");
        }
    }
    double secs = seconds_since(start);
    c.expect(secs < 5.0, "runtime " + std::to_string(secs) + " s");
    detail = "5 queries, N=4 T=4, 16 candidates each, " + std::to_string(secs) + " s";
}

void determinism(Check& c, std::string& detail) {
    auto run_all = [&](const TempDir& dir) {
        auto cli = [&](std::vector<std::string> args) {
            std::vector<std::string> full = {"pnr",          "--index",    dir.file("c.index"),
                                             "--queries",    dir.file("q.jsonl"),
                                             "--datasets-dir", dir.file("ds"),
                                             "--seed",       "7",
                                             "--no-timings"};
            full.insert(full.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : full) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            c.expect(code == 0, "command failed: " + err.str());
            return out.str();
        };
        Rng rng(3);
        std::string corpus, queries;
        for (const auto& r : topic_records(4, rng)) corpus += nlohmann::json{{"id", r.id}, {"text", r.text}}.dump() + "\n";
        for (const auto& q : topic_queries(3)) queries += nlohmann::json{{"query_id", q.id}, {"query", q.text}}.dump() + "\n";
        write_file(dir.file("corpus.jsonl"), corpus);
        write_file(dir.file("q.jsonl"), queries);
        auto head = RewardHead::zeros(64);
        Rng hr(5);
        for (Eigen::Index j = 0; j < 64; ++j) head.weights[j] = hr.normal();
        {
            std::ofstream f(dir.file("head.txt"));
            save_head(head, f);
        }
        std::string everything = cli({"index", dir.file("corpus.jsonl"), "-o", dir.file("c.index")});
        for (const auto& q : topic_queries(3)) {
            auto trace = dir.file("trace-" + q.id + ".jsonl");
            everything += cli({"--head", dir.file("head.txt"), "ask", q.text, "--trace-out", trace});
            everything += slurp(trace);
        }
        everything += cli({"build-datasets", "--plan-samples", "8", "--edit-pairs", "2", "--reward-pairs", "2"});
        for (auto name : {"plan.jsonl", "edit.jsonl", "reward.jsonl", "manifest.json"}) {
            everything += slurp(dir.file(std::string("ds/") + name));
        }
        return everything;
    };
    TempDir a("accept-a"), b("accept-b");
    auto first = run_all(a);
    auto second = run_all(b);
    c.expect(first.find("\"type\":\"selection\"") != std::string::npos, "no selection recorded");
    c.expect(first == second, "outputs differ between runs");
    detail = "index, 3 asks with a head, datasets: " + std::to_string(first.size()) + " bytes identical";
}

void allocation(Check& c, std::string& detail) {
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        int k = rng.uniform_int(1, 100), steps = rng.uniform_int(1, 10);
        auto got = allocate_budget(k, steps);
        c.expect(static_cast<int>(got.size()) == steps, "wrong length");
        int sum = 0;
        for (int v : got) sum += v;
        c.expect(sum == k, "counts do not sum to k");
        auto [lo, hi] = std::minmax_element(got.begin(), got.end());
        c.expect(*hi - *lo <= 1, "spread above 1");
        c.expect(std::is_sorted(got.rbegin(), got.rend()), "remainder not earliest-first");
        c.expect(got == oracle_allocation(k, steps), "differs from round-robin oracle");
    }
    c.expect(allocate_budget(40, 5) == std::vector<int>(5, 8), "40 over 5 is not all 8s");
    detail = "1000 random cases, 40/5 -> 8,8,8,8,8";
}

void percentile(Check& c, std::string& detail) {
    Rng rng(95);
    for (int i = 0; i < 1000; ++i) {
        int n = rng.uniform_int(1, 100);
        std::vector<double> s;
        for (int j = 0; j < n; ++j) s.push_back(j > 0 && rng.uniform_int(0, 4) == 0 ? s.back() : rng.uniform());
        double z = rng.uniform_int(0, 1) ? rng.uniform_int(0, 100) : rng.uniform(0, 100);
        c.expect(percentile_threshold(s, z) == oracle_percentile(s, z), "oracle mismatch");
    }
    std::vector<double> s;
    for (int i = 1; i <= 32; ++i) s.push_back(i / 32.0);
    double t = percentile_threshold(s, 95);
    auto kept = std::count_if(s.begin(), s.end(), [&](double v) { return v >= t; });
    c.expect(kept == 2, "32 scores at z=95 kept " + std::to_string(kept));
    detail = "1000 random vectors, 32 scores at z=95 keep " + std::to_string(kept);
}

void reward_calculus(Check& c, std::string& detail) {
    Rng rng(55);
    double worst_rel = 0, worst_ln2 = 0;
    for (int i = 0; i < 200; ++i) {
        int d = rng.uniform_int(1, 8), n = rng.uniform_int(1, 10);
        Eigen::MatrixXd b(n, d), w(n, d);
        Eigen::VectorXd wt(d);
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < d; ++j) b(r, j) = rng.normal(), w(r, j) = rng.normal();
        for (int j = 0; j < d; ++j) wt[j] = rng.normal();
        for (auto space : {LossSpace::probability, LossSpace::logit}) {
            double l0 = mean_pairwise_loss(Eigen::VectorXd::Zero(d), b, w, space);
            worst_ln2 = std::max(worst_ln2, std::abs(l0 - std::log(2.0)));
            auto g = mean_pairwise_loss_gradient(wt, b, w, space);
            auto fd = finite_difference_gradient(wt, b, w, space);
            double rel = (g - fd).norm() / std::max({g.norm(), fd.norm(), 1e-12});
            worst_rel = std::max(worst_rel, rel);
        }
    }
    c.expect(worst_ln2 <= 1e-6, "initial loss off ln 2");
    c.expect(worst_rel <= 1e-5, "gradient relative error " + std::to_string(worst_rel));
    auto planted = planted_pairs(1000, 8, rng);
    auto start = std::chrono::steady_clock::now();
    auto report = train_head(EmbeddedPairs{planted.better, planted.worse}, TrainConfig{});
    double secs = seconds_since(start);
    double acc = report.holdout_accuracy.value_or(0.0);
    c.expect(acc >= 0.95, "held-out accuracy " + std::to_string(acc));
    c.expect(secs < 10.0, "training took " + std::to_string(secs) + " s");
    std::ostringstream d;
    d << "ln2 error " << worst_ln2 << ", max gradient rel error " << worst_rel << ", held-out accuracy " << acc
      << " in " << secs << " s";
    detail = d.str();
}

void selection(Check& c, std::string& detail) {
    Rng rng(6);
    HashedEmbedder e(16);
    for (int i = 0; i < 200; ++i) {
        CandidatePool pool;
        int n = rng.uniform_int(1, 16);
        for (int j = 0; j < n; ++j) {
            std::string text = j > 0 && rng.uniform_int(0, 4) == 0 ? pool.candidates[static_cast<std::size_t>(rng.uniform_int(0, j - 1))].text
                                                                   : random_query(rng);
            pool.candidates.push_back({text, j, 0, 0.1});
        }
        auto head = RewardHead::zeros(16);
        for (int j = 0; j < 16; ++j) head.weights[j] = rng.normal();
        auto sel = select_best(head, pool, "query", e);
        c.expect(sel.index == oracle_select(head, pool, "query", e), "brute force disagrees");
        // Strictly increasing transforms of the logit: positive scaling here,
        // and a cubic applied to the logits directly.
        auto scaled = head;
        scaled.weights *= rng.uniform(0.05, 20.0);
        c.expect(select_best(scaled, pool, "query", e).index == sel.index, "argmax moved under scaling");
        std::vector<double> cubed;
        for (const auto& cand : pool.candidates) {
            double z = reward_logit(head, e.embed(join_for_reward("query", cand.text, head.separator)));
            cubed.push_back(z * z * z + z);
        }
        c.expect(argmax_first(cubed) == sel.index, "argmax moved under a monotone transform");
    }
    detail = "200 random pools";
}

void gap_audit(Check& c, std::string& detail) {
    auto index = topic_index(9);
    auto backend = make_simulated_backend(16);
    auto models = Models::uniform(backend);
    IcatEvaluator metric({MetricLevel::A, 5}, index, {backend, backend, backend, backend});
    SelfTrainConfig cfg;
    cfg.pipeline.record_timings = false;
    auto queries = topic_queries(50);
    auto edit = build_edit_dataset(queries, models, index, metric, cfg);
    auto reward = build_reward_dataset(queries, models, index, metric, cfg);
    std::map<std::string, Query> by_id;
    for (const auto& q : queries) by_id[q.id] = q;
    int violations = 0;
    auto audit = [&](const auto& examples, double threshold) {
        for (const auto& ex : examples) {
            const auto& q = by_id.at(ex.query_id);
            double w = metric.score(q, ex.worse), b = metric.score(q, ex.better);
            if (!meets_gap(w, b, threshold) || std::abs((b - w) - ex.gap) > 1e-12) ++violations;
        }
    };
    audit(edit.examples, cfg.beta);
    audit(reward.examples, cfg.gamma);
    c.expect(violations == 0, std::to_string(violations) + " violations");
    c.expect(!edit.examples.empty() && !reward.examples.empty(), "audit had nothing to check");
    c.expect(edit.skipped.empty() && reward.skipped.empty(), "queries skipped");
    detail = "50 queries, " + std::to_string(edit.examples.size()) + " edit + " +
             std::to_string(reward.examples.size()) + " reward examples, " + std::to_string(violations) +
             " violations";
}

void bm25(Check& c, std::string& detail) {
    Rng rng(50);
    auto records = toy_records(50, rng);
    auto index = build_index(ingest_corpus(records));
    c.expect(index.size() == 50, "toy corpus not fully ingested");
    for (int i = 0; i < 100; ++i) {
        auto q = random_query(rng);
        int k = rng.uniform_int(1, 60);
        auto got = index.retrieve(q, k);
        auto want = oracle_bm25(records, q, k, 1.2, 0.75);
        bool same = got.size() == want.size();
        for (std::size_t j = 0; same && j < got.size(); ++j) {
            same = got[j].id == want[j].id && std::abs(got[j].score - want[j].score) <= 1e-12 * std::abs(want[j].score);
        }
        c.expect(same, "mismatch for \"" + q + "\"");
    }
    std::vector<CorpusRecord> mixed;
    std::set<std::string> expected;
    for (int i = 0; i < 200; ++i) {
        int n = rng.uniform_int(1, 100);
        std::string text;
        for (int w = 0; w < n; ++w) text += (w ? (rng.uniform_int(0, 5) ? " " : " \n\t ") : "") + rng.pick(toy_vocabulary());
        auto id = "m" + std::to_string(i);
        if (n >= 50) expected.insert(id);
        mixed.push_back({id, text});
    }
    std::set<std::string> kept;
    auto corpus = ingest_corpus(mixed);
    for (const auto& d : corpus.documents()) kept.insert(d.id);
    c.expect(kept == expected, "ingestion kept the wrong documents");
    detail = "100 queries on 50 docs; ingestion kept " + std::to_string(kept.size()) + " of 200";
}

void mmr(Check& c, std::string& detail) {
    Rng rng(77);
    auto index = build_index(ingest_corpus(toy_records(40, rng)));
    int checked = 0;
    for (int i = 0; i < 50; ++i) {
        auto q = random_query(rng);
        auto hits = index.retrieve(q, 20);
        if (hits.size() < 2) continue;
        ++checked;
        int m = std::min<int>(5, static_cast<int>(hits.size()));
        auto relevance = mmr_rerank(index, q, 20, 1.0, m);
        for (int j = 0; j < m; ++j) c.expect(relevance[static_cast<std::size_t>(j)] == hits[static_cast<std::size_t>(j)].id, "lambda 1 order");
        auto diverse = mmr_rerank(index, q, 20, 0.0, 2);
        const auto& first = index.document(diverse[0]).body;
        double best = 2;
        std::string want;
        for (std::size_t j = 1; j < hits.size(); ++j) {
            double sim = oracle_cosine(first, index.document(hits[j].id).body);
            if (sim < best - 1e-12) {
                best = sim;
                want = hits[j].id;
            }
        }
        c.expect(diverse[1] == want, "lambda 0 second pick");
    }
    std::vector<CorpusRecord> dup = {{"a", "apple apple apple pie crust"},
                                     {"a2", "apple apple apple pie crust"},
                                     {"b", "apple river stone cloud music"}};
    auto small = build_index(ingest_corpus(dup, 1));
    auto picks = mmr_rerank(small, "apple", 3, 0.5, 2);
    c.expect(picks == std::vector<std::string>{"a", "b"}, "duplicate case");
    detail = std::to_string(checked) + " queries, duplicate case -> a, b";
}

void metric_algebra(Check& c, std::string& detail) {
    Rng rng(10);
    for (int i = 0; i < 1000; ++i) {
        double x = i % 7 == 0 ? 0.0 : rng.uniform(), y = rng.uniform();
        double f = f_measure(x, y);
        c.expect(f == f_measure(y, x), "asymmetric");
        c.expect(f >= 0.0 && f <= 1.0, "out of bounds");
        c.expect(f <= std::max(x, y) + 1e-15 && f >= std::min(x, y) - 1e-15, "outside [min, max]");
        if (x == 0.0 || y == 0.0) c.expect(f == 0.0, "zero input, nonzero output");
    }
    double table = f_measure(0.6318, 0.6237);
    c.expect(std::abs(table - 0.6277) <= 1e-4, "f(0.6318, 0.6237) = " + std::to_string(table));

    std::vector<std::string> claims = {"Alpha rays travel short distances.", "Beta rays are fast electrons.",
                                       "Radiation shielding uses lead.", "Zzyzx qwv."};
    std::vector<CorpusRecord> docs = {{"e1", claims[0] + " Detectors count them."},
                                      {"e2", claims[1] + " Thin foil stops them."},
                                      {"e3", claims[2] + " Concrete helps too."}};
    auto index = build_index(ingest_corpus(docs, 1));
    auto scripted = std::make_shared<ScriptedBackend>();
    std::string response = claims[0] + " " + claims[1] + " " + claims[2] + " " + claims[3];
    std::string listed = claims[0] + "\n" + claims[1] + "\n" + claims[2] + "\n" + claims[3];
    scripted->on_generate(build_claim_prompt(response), 0.0, listed);
    for (std::size_t i = 0; i < 3; ++i) {
        scripted->on_nli(docs[i].text, claims[i], {NliLabel::entailed, 1.0});
    }
    for (const auto& sub : {"alpha", "beta"}) scripted->on_nli(claims[sub[0] == 'a' ? 0 : 1], sub, {NliLabel::entailed, 1.0});
    for (const auto& claim : claims)
        for (const auto& sub : {"alpha", "beta", "gamma", "delta"}) {
            bool yes = (claim == claims[0] && std::string(sub) == "alpha") || (claim == claims[1] && std::string(sub) == "beta");
            if (!yes) scripted->on_nli(claim, sub, {NliLabel::not_entailed, 1.0});
        }
    IcatEvaluator eval({MetricLevel::S, 5}, index, {scripted, scripted, nullptr, scripted},
                       {{"q", {"alpha", "beta", "gamma", "delta"}}});
    auto r = eval.evaluate({"q", "radiation"}, response);
    c.expect(r.coverage == 0.5, "coverage " + std::to_string(r.coverage));
    c.expect(r.factuality == 0.75, "factuality " + std::to_string(r.factuality));
    c.expect(r.f_measure == 0.6, "f-measure " + std::to_string(r.f_measure));
    std::ostringstream d;
    d << "1000 pairs; f(0.6318, 0.6237) = " << table << "; evaluate -> (" << r.coverage << ", " << r.factuality
      << ", " << r.f_measure << ")";
    detail = d.str();
}

void retry_ladder(Check& c, std::string& detail) {
    const std::string plan = R"({"aspects":[{"title":"optics","reason":"explains scattering","query":"rayleigh scattering"}]})";
    ScriptedBackend b;
    auto prompt = build_plan_prompt("why is the sky blue");
    b.on_generate(prompt, 0.7, "not json").on_generate(prompt, 0.8, "{\"aspects\": 3}").on_generate(prompt, 0.9, plan);
    auto plans = sample_plans("why is the sky blue", 1, RetryLadder{}, b);
    auto calls = b.calls(CallRecord::Kind::generate);
    c.expect(calls.size() == 3, std::to_string(calls.size()) + " calls");
    for (std::size_t i = 1; i < calls.size(); ++i) c.expect(calls[i].temperature > calls[i - 1].temperature, "not increasing");
    c.expect(plans.size() == 1 && plans[0].attempts == 3, "attempt count");

    // Starting high, the ladder stops at 1.0.
    ScriptedBackend capped;
    capped.respond_with([](const GenerationRequest&) { return std::string("nope"); });
    RetryLadder high = RetryLadder::starting_at(0.85);
    try {
        sample_plans("q", 1, high, capped);
        c.expect(false, "ladder did not give up");
    } catch (const PlanLadderExhausted&) {
    }
    auto hc = capped.calls(CallRecord::Kind::generate);
    for (const auto& call : hc) c.expect(call.temperature <= 1.0, "temperature above 1");
    c.expect(!hc.empty() && hc.back().temperature == 1.0, "cap not reached");
    std::ostringstream d;
    d << "temperatures";
    for (const auto& call : calls) d << ' ' << call.temperature;
    d << "; from 0.85:";
    for (const auto& call : hc) d << ' ' << call.temperature;
    detail = d.str();
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        std::function<void(Check&, std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "pool accounting", pool_accounting},
        {2, "determinism", determinism},
        {3, "budget allocation", allocation},
        {4, "percentile oracle", percentile},
        {5, "reward calculus", reward_calculus},
        {6, "selection correctness", selection},
        {7, "dataset gap audit", gap_audit},
        {8, "bm25 oracle", bm25},
        {9, "mmr limits", mmr},
        {10, "metric algebra", metric_algebra},
        {11, "json retry ladder", retry_ladder},
    };
    spdlog::set_level(spdlog::level::err);
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        std::string detail;
        try {
            cr.run(check, detail);
        } catch (const std::exception& e) {
            check.expect(false, std::string("exception: ") + e.what());
        }
        if (!check.ok()) ++failed;
        std::cout << (check.ok() ? "PASS" : "FAIL") << " [" << cr.number << "] " << cr.name << ": "
                  << (check.ok() ? detail : check.summary()) << '\n';
    }
    std::cout << "SKIP [12] live endpoint smoke test: manual, see README\n";
    return failed == 0 ? 0 : 1;
}
