#include "pnr/metric.hpp"

#include "pnr/error.hpp"
#include "pnr/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <istream>

namespace pnr {

const char* to_string(MetricLevel level) noexcept {
    switch (level) {
        case MetricLevel::M: return "M";
        case MetricLevel::S: return "S";
        case MetricLevel::A: return "A";
    }
    return "?";
}

MetricLevel metric_level_from_string(std::string_view name) {
    if (name == "M") return MetricLevel::M;
    if (name == "S") return MetricLevel::S;
    if (name == "A") return MetricLevel::A;
    throw ConfigError("unknown metric level: " + std::string(name));
}

SubtopicAnnotations read_annotations_jsonl(std::istream& in) {
    SubtopicAnnotations out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto rec = nlohmann::json::parse(line, nullptr, false);
        auto where = "annotation line " + std::to_string(line_no);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("query_id") || !rec["query_id"].is_string() ||
            !rec.contains("subtopics") || !rec["subtopics"].is_array()) {
            throw FormatError(where + ": expected {\"query_id\": text, \"subtopics\": [text]}");
        }
        std::vector<std::string> labels;
        for (const auto& s : rec["subtopics"]) {
            if (!s.is_string()) throw FormatError(where + ": subtopic is not a string");
            labels.push_back(s.get<std::string>());
        }
        out[rec["query_id"].get<std::string>()] = std::move(labels);
    }
    return out;
}

std::string build_claim_prompt(std::string_view response) {
    std::string p;
    p += "Break the text below into short, self-contained factual statements.\n";
    p += "Write one statement per line and nothing else.\n\nText:\n";
    p += response;
    p += "\n\nStatements:\n";
    return p;
}

std::string build_subtopic_prompt(std::string_view query) {
    std::string p;
    p += "List the distinct subtopics a comprehensive answer to the question below should cover.\n";
    p += "Write one short subtopic per line and nothing else.\n\nQuestion: ";
    p += trim(query);
    p += "\n\nSubtopics:\n";
    return p;
}

namespace {

std::vector<Claim> as_claims(const std::vector<std::string>& texts) {
    std::vector<Claim> claims;
    claims.reserve(texts.size());
    for (const auto& t : texts) claims.push_back({t, std::nullopt, {}});
    return claims;
}

}  // namespace

std::vector<Claim> extract_claims(std::string_view response, GenerationBackend* claim_backend) {
    if (trim(response).empty()) throw PreconditionError("cannot extract claims from an empty response");
    if (claim_backend != nullptr) {
        try {
            GenerationRequest req;
            req.prompt = build_claim_prompt(response);
            req.temperature = 0.0;
            auto lines = split_list_lines(claim_backend->generate(req));
            if (!lines.empty()) return as_claims(lines);
            spdlog::warn("claim backend returned no claims; falling back to sentence split");
        } catch (const std::exception& e) {
            spdlog::warn("claim backend failed ({}); falling back to sentence split", e.what());
        }
    }
    return as_claims(split_sentences(response));
}

bool verify_claim(std::string_view claim, const Retriever& evidence, NliBackend& nli, int m) {
    if (m < 1) throw PreconditionError("verify_claim needs m >= 1");
    for (const auto& hit : evidence.retrieve(claim, m)) {
        if (nli.nli(evidence.document(hit.id).body, claim).entailed()) return true;
    }
    return false;
}

std::vector<Subtopic> subtopics_for(std::string_view query, MetricLevel level,
                                    const std::vector<std::string>* annotations, GenerationBackend* subtopic_backend) {
    std::vector<Subtopic> out;
    if (level == MetricLevel::A) {
        if (subtopic_backend == nullptr) throw ConfigError("level A needs a subtopic backend");
        GenerationRequest req;
        req.prompt = build_subtopic_prompt(query);
        req.temperature = 0.0;
        for (auto& label : split_list_lines(subtopic_backend->generate(req))) {
            out.push_back({std::move(label), SubtopicSource::generated});
        }
    } else {
        if (annotations == nullptr) {
            throw ConfigError(std::string("level ") + to_string(level) + " needs subtopic annotations for the query");
        }
        for (const auto& label : *annotations) {
            auto t = trim(label);
            if (!t.empty()) out.push_back({std::move(t), SubtopicSource::manual});
        }
    }
    return out;
}

double coverage_of(std::vector<Claim>& claims, const std::vector<Subtopic>& subtopics, NliBackend* matcher) {
    if (subtopics.empty()) throw PreconditionError("coverage needs at least one subtopic");
    std::size_t covered = 0;
    for (std::size_t s = 0; s < subtopics.size(); ++s) {
        bool hit = false;
        for (auto& claim : claims) {
            bool match = matcher != nullptr ? matcher->nli(claim.text, subtopics[s].label).entailed()
                                            : lexically_contains(claim.text, subtopics[s].label);
            if (match) {
                claim.covered_subtopics.insert(s);
                hit = true;
            }
        }
        if (hit) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(subtopics.size());
}

double f_measure(double coverage, double factuality) {
    if (!(coverage >= 0.0 && coverage <= 1.0 && factuality >= 0.0 && factuality <= 1.0)) {
        throw PreconditionError("f_measure inputs must lie in [0, 1]");
    }
    double sum = coverage + factuality;
    return sum == 0.0 ? 0.0 : 2.0 * coverage * factuality / sum;
}

IcatEvaluator::IcatEvaluator(IcatConfig config, const Retriever& evidence, IcatBackends backends,
                             SubtopicAnnotations annotations)
    : config_(config), evidence_(evidence), backends_(std::move(backends)), annotations_(std::move(annotations)) {
    if (!backends_.nli) throw ConfigError("the evaluator needs an NLI backend");
    if (config_.evidence_depth < 1) throw ConfigError("evidence depth must be at least 1");
    if (config_.level == MetricLevel::A && !backends_.subtopics) throw ConfigError("level A needs a subtopic backend");
    if (config_.level != MetricLevel::A && annotations_.empty()) {
        throw ConfigError(std::string("level ") + to_string(config_.level) + " needs subtopic annotations");
    }
}

MetricReport IcatEvaluator::evaluate(const Query& query, std::string_view response) const {
    MetricReport report;
    report.level = config_.level;

    const std::vector<std::string>* labels = nullptr;
    if (config_.level != MetricLevel::A) {
        auto it = annotations_.find(query.id);
        if (it == annotations_.end()) it = annotations_.find(query.text);
        if (it != annotations_.end()) labels = &it->second;
    }
    auto subtopics = subtopics_for(query.text, config_.level, labels, backends_.subtopics.get());
    report.subtopics = subtopics.size();

    if (trim(response).empty()) {
        report.degenerate = true;
        return report;
    }
    auto claims = extract_claims(response, backends_.claims.get());
    report.claims = claims.size();
    if (claims.empty()) {
        report.degenerate = true;
        return report;
    }
    for (auto& c : claims) {
        c.supported = verify_claim(c.text, evidence_, *backends_.nli, config_.evidence_depth);
        if (*c.supported) ++report.supported_claims;
    }
    report.factuality = static_cast<double>(report.supported_claims) / static_cast<double>(claims.size());
    if (!subtopics.empty()) {
        NliBackend* matcher = config_.level == MetricLevel::M ? nullptr : backends_.matcher.get();
        report.coverage = coverage_of(claims, subtopics, matcher);
        std::set<std::size_t> covered;
        for (const auto& c : claims) covered.insert(c.covered_subtopics.begin(), c.covered_subtopics.end());
        report.covered_subtopics = covered.size();
    } else {
        spdlog::warn("no subtopics for query '{}'; coverage is 0", query.text);
    }
    report.f_measure = f_measure(report.coverage, report.factuality);
    return report;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
    MetricReport mean;
    if (reports.empty()) return mean;
    mean.level = reports.front().level;
    for (const auto& r : reports) {
        mean.coverage += r.coverage;
        mean.factuality += r.factuality;
        mean.f_measure += r.f_measure;
        mean.claims += r.claims;
        mean.supported_claims += r.supported_claims;
        mean.subtopics += r.subtopics;
        mean.covered_subtopics += r.covered_subtopics;
    }
    auto n = static_cast<double>(reports.size());
    mean.coverage /= n;
    mean.factuality /= n;
    mean.f_measure /= n;
    return mean;
}

}  // namespace pnr
