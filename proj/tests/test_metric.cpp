#include "pnr/error.hpp"
#include "pnr/metric.hpp"

#include <doctest.h>

#include <sstream>

#include "support.hpp"

using namespace pnr;
using namespace pnr::testing;

namespace {

const std::vector<std::string> kClaims = {
    "Alpha rays travel short distances.",
    "Beta rays are fast electrons.",
    "Radiation shielding uses lead.",
    "Zzyzx qwv.",
};

std::string response_text() {
    std::string out;
    for (const auto& c : kClaims) out += (out.empty() ? "" : " ") + c;
    return out;
}

Index evidence_index() {
    std::vector<CorpusRecord> records = {
        {"e1", kClaims[0] + " Detectors count them in the laboratory."},
        {"e2", kClaims[1] + " Thin aluminium stops most of them."},
        {"e3", kClaims[2] + " Concrete walls help as well."},
        {"e4", "Unrelated text about bread ovens and flour."},
    };
    return build_index(ingest_corpus(records, 1));
}

SubtopicAnnotations greek() { return {{"q", {"alpha", "beta", "gamma", "delta"}}}; }

IcatEvaluator level_m(const Index& index) {
    return IcatEvaluator({MetricLevel::M, 5}, index, {std::make_shared<LexicalNli>(), nullptr, nullptr, nullptr},
                         greek());
}

}  // namespace

TEST_CASE("level names") {
    CHECK(metric_level_from_string("S") == MetricLevel::S);
    CHECK(std::string(to_string(MetricLevel::A)) == "A");
    CHECK_THROWS_AS(metric_level_from_string("X"), ConfigError);
}

TEST_CASE("claim extraction") {
    auto split = extract_claims("One fact. Two facts! Three?", nullptr);
    REQUIRE(split.size() == 3);
    CHECK(split[1].text == "Two facts!");

    ScriptedBackend b;
    b.on_generate(build_claim_prompt("some text"), 0.0, "- first\n- second\n\n3. third\n");
    auto scripted = extract_claims("some text", &b);
    REQUIRE(scripted.size() == 3);
    CHECK(scripted[2].text == "third");

    ScriptedBackend empty;
    empty.on_generate(build_claim_prompt("A. B."), 0.0, "\n");
    CHECK(extract_claims("A. B.", &empty).size() == 2);

    CHECK_THROWS_AS(extract_claims("  \n", nullptr), PreconditionError);
}

TEST_CASE("claim verification") {
    auto index = evidence_index();
    LexicalNli nli;
    CHECK(verify_claim(kClaims[0], index, nli, 5));
    CHECK(verify_claim("alpha rays travel", index, nli, 5));
    CHECK_FALSE(verify_claim(kClaims[3], index, nli, 5));
    CHECK_FALSE(verify_claim("Alpha rays are electrons.", index, nli, 5));
    CHECK_THROWS_AS(verify_claim("x", index, nli, 0), PreconditionError);

    ScriptedBackend b;
    b.on_nli(index.document("e4").body, "bread is great", {NliLabel::entailed, 0.9});
    CHECK(verify_claim("bread is great", index, b, 5));
}

TEST_CASE("subtopic sources") {
    std::vector<std::string> labels = {" alpha ", "", "beta"};
    auto manual = subtopics_for("q", MetricLevel::M, &labels, nullptr);
    REQUIRE(manual.size() == 2);
    CHECK(manual[0].label == "alpha");
    CHECK(manual[0].source == SubtopicSource::manual);
    CHECK_THROWS_AS(subtopics_for("q", MetricLevel::M, nullptr, nullptr), ConfigError);
    CHECK_THROWS_AS(subtopics_for("q", MetricLevel::S, nullptr, nullptr), ConfigError);
    CHECK_THROWS_AS(subtopics_for("q", MetricLevel::A, nullptr, nullptr), ConfigError);

    ScriptedBackend b;
    b.on_generate(build_subtopic_prompt("why rays"), 0.0, "1. sources\n2. shielding\n");
    auto generated = subtopics_for("why rays", MetricLevel::A, nullptr, &b);
    REQUIRE(generated.size() == 2);
    CHECK(generated[1].label == "shielding");
    CHECK(generated[1].source == SubtopicSource::generated);
}

TEST_CASE("coverage counts subtopics hit by any claim") {
    std::vector<Subtopic> subs = {{"alpha"}, {"beta"}, {"gamma"}, {"delta"}};
    std::vector<Claim> claims = {{"Alpha and beta.", {}, {}}, {"Also beta.", {}, {}}};
    CHECK(coverage_of(claims, subs, nullptr) == 0.5);
    CHECK(claims[0].covered_subtopics == std::set<std::size_t>{0, 1});
    CHECK(claims[1].covered_subtopics == std::set<std::size_t>{1});
    std::vector<Claim> none = {{"nothing here", {}, {}}};
    CHECK(coverage_of(none, subs, nullptr) == 0.0);
    std::vector<Claim> all = {{"alpha beta gamma delta", {}, {}}};
    CHECK(coverage_of(all, subs, nullptr) == 1.0);
    CHECK_THROWS_AS(coverage_of(all, {}, nullptr), PreconditionError);

    ScriptedBackend matcher;
    matcher.on_nli("nothing here", "gamma", {NliLabel::entailed, 1.0});
    CHECK(coverage_of(none, subs, &matcher) == 0.25);
}

TEST_CASE("f-measure examples") {
    CHECK(f_measure(0.5, 0.5) == 0.5);
    CHECK(f_measure(1.0, 0.0) == 0.0);
    CHECK(f_measure(0.0, 0.0) == 0.0);
    CHECK(f_measure(0.6318, 0.6237) == doctest::Approx(0.6277).epsilon(1e-4));
    CHECK(f_measure(0.5, 0.75) == doctest::Approx(0.6));
    CHECK_THROWS_AS(f_measure(1.5, 0.2), PreconditionError);
}

TEST_CASE("f-measure properties") {
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        double c = rng.uniform(), f = rng.uniform();
        if (i % 10 == 0) c = 0;
        double v = f_measure(c, f);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == f_measure(f, c));
        CHECK(v <= std::max(c, f) + 1e-15);
        CHECK(v >= std::min(c, f) - 1e-15);
        if (c == 0 || f == 0) CHECK(v == 0.0);
        double c2 = std::min(1.0, c + rng.uniform(0, 0.1));
        CHECK(f_measure(c2, f) >= v - 1e-15);
    }
}

TEST_CASE("evaluate on a hand-built case") {
    auto index = evidence_index();
    auto eval = level_m(index);
    auto r = eval.evaluate({"q", "greek rays"}, response_text());
    CHECK(r.claims == 4);
    CHECK(r.supported_claims == 3);
    CHECK(r.subtopics == 4);
    CHECK(r.covered_subtopics == 2);
    CHECK(r.coverage == 0.5);
    CHECK(r.factuality == 0.75);
    CHECK(r.f_measure == doctest::Approx(0.6));
    CHECK_FALSE(r.degenerate);
    CHECK(eval.score({"q", "greek rays"}, response_text()) == r.f_measure);

    auto again = eval.evaluate({"q", "greek rays"}, response_text());
    CHECK(again.f_measure == r.f_measure);
    // Annotations are found by query text as well.
    CHECK(eval.evaluate({"other-id", "q"}, response_text()).coverage == 0.5);
}

TEST_CASE("empty response is degenerate") {
    auto index = evidence_index();
    auto r = level_m(index).evaluate({"q", "x"}, "   ");
    CHECK(r.degenerate);
    CHECK(r.coverage == 0.0);
    CHECK(r.factuality == 0.0);
    CHECK(r.f_measure == 0.0);
    CHECK(r.subtopics == 4);
}

TEST_CASE("level M ignores a matcher while S uses it") {
    auto index = evidence_index();
    auto matcher = std::make_shared<ScriptedBackend>();
    matcher->on_nli(kClaims[2], "gamma", {NliLabel::entailed, 1.0});
    auto nli = std::make_shared<LexicalNli>();
    IcatEvaluator m({MetricLevel::M, 5}, index, {nli, nullptr, nullptr, matcher}, greek());
    IcatEvaluator s({MetricLevel::S, 5}, index, {nli, nullptr, nullptr, matcher}, greek());
    CHECK(m.evaluate({"q", "x"}, response_text()).coverage == 0.5);
    CHECK(s.evaluate({"q", "x"}, response_text()).coverage == 0.75);
}

TEST_CASE("evaluator configuration errors") {
    auto index = evidence_index();
    auto nli = std::make_shared<LexicalNli>();
    CHECK_THROWS_AS(IcatEvaluator({MetricLevel::M, 5}, index, {nli, nullptr, nullptr, nullptr}), ConfigError);
    CHECK_THROWS_AS(IcatEvaluator({MetricLevel::A, 5}, index, {nli, nullptr, nullptr, nullptr}), ConfigError);
    CHECK_THROWS_AS(IcatEvaluator({MetricLevel::M, 5}, index, {nullptr, nullptr, nullptr, nullptr}, greek()),
                    ConfigError);
    CHECK_THROWS_AS(IcatEvaluator({MetricLevel::M, 0}, index, {nli, nullptr, nullptr, nullptr}, greek()), ConfigError);
}

TEST_CASE("adding a supported covering claim never lowers coverage") {
    auto index = evidence_index();
    auto eval = level_m(index);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        std::string text;
        for (int k = 0; k < rng.uniform_int(1, 4); ++k) text += rng.pick(kClaims) + " ";
        auto base = eval.evaluate({"q", "x"}, text);
        auto more = eval.evaluate({"q", "x"}, text + kClaims[0]);
        CHECK(more.coverage >= base.coverage);
        CHECK(more.supported_claims == base.supported_claims + 1);
    }
}

TEST_CASE("mean report") {
    MetricReport a, b;
    a.f_measure = 0.6;
    a.coverage = 1.0;
    b.f_measure = 0.4;
    b.factuality = 0.5;
    auto m = mean_report({a, b});
    CHECK(m.f_measure == doctest::Approx(0.5));
    CHECK(m.coverage == 0.5);
    CHECK(m.factuality == 0.25);
    CHECK(mean_report({}).f_measure == 0.0);
}

TEST_CASE("annotation file") {
    std::istringstream in("{\"query_id\":\"q1\",\"subtopics\":[\"a\",\"b\"]}\n\n{\"query_id\":\"q2\",\"subtopics\":[]}\n");
    auto a = read_annotations_jsonl(in);
    CHECK(a.at("q1") == std::vector<std::string>{"a", "b"});
    CHECK(a.at("q2").empty());
    std::istringstream bad("{\"query_id\":\"q1\",\"subtopics\":[1]}\n");
    CHECK_THROWS_AS(read_annotations_jsonl(bad), FormatError);
}
