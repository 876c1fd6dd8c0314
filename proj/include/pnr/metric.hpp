#pragma once

// Coverage/factuality utility. A response is split into atomic claims; each
// claim is verified against the top evidence passages by NLI (factuality =
// supported / claims); coverage is the fraction of the query's subtopics
// matched by at least one claim; the utility is their F-measure.
//
// Annotation levels:
//   M  manual subtopics, lexical subtopic matching
//   S  manual subtopics, matching judged by an NLI/LLM backend
//   A  generated subtopics, matching judged by an NLI/LLM backend

#include "pnr/backends.hpp"
#include "pnr/retrieval.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pnr {

enum class MetricLevel { M, S, A };

const char* to_string(MetricLevel level) noexcept;
MetricLevel metric_level_from_string(std::string_view name);

enum class SubtopicSource { manual, generated };

struct Subtopic {
    std::string label;
    SubtopicSource source = SubtopicSource::manual;
};

struct Claim {
    std::string text;
    std::optional<bool> supported;
    std::set<std::size_t> covered_subtopics;
};

struct MetricReport {
    double coverage = 0.0;
    double factuality = 0.0;
    double f_measure = 0.0;
    MetricLevel level = MetricLevel::A;
    /// No claims could be extracted; every score is 0.
    bool degenerate = false;
    std::size_t claims = 0;
    std::size_t supported_claims = 0;
    std::size_t subtopics = 0;
    std::size_t covered_subtopics = 0;
};

/// query_id (or query text) -> subtopic labels.
using SubtopicAnnotations = std::map<std::string, std::vector<std::string>, std::less<>>;

/// Lines of {"query_id": ..., "subtopics": [...]}. Throws FormatError.
SubtopicAnnotations read_annotations_jsonl(std::istream& in);

std::string build_claim_prompt(std::string_view response);
std::string build_subtopic_prompt(std::string_view query);

/// Claims from the backend (one per line of its reply), or sentence split
/// when the backend is null, fails, or returns nothing.
std::vector<Claim> extract_claims(std::string_view response, GenerationBackend* claim_backend);

/// Supported iff any of the top-m passages retrieved for the claim entails it.
bool verify_claim(std::string_view claim, const Retriever& evidence, NliBackend& nli, int m);

/// Level M/S read the annotations (ConfigError when absent); level A asks the
/// backend (ConfigError when null).
std::vector<Subtopic> subtopics_for(std::string_view query, MetricLevel level,
                                    const std::vector<std::string>* annotations, GenerationBackend* subtopic_backend);

/// Marks each claim's covered subtopics and returns the covered fraction.
/// With a matcher, a claim covers a subtopic when the claim entails it;
/// without one, when the subtopic label occurs in the claim
/// case-insensitively.
double coverage_of(std::vector<Claim>& claims, const std::vector<Subtopic>& subtopics, NliBackend* matcher);

/// Harmonic mean; 0 when both inputs are 0.
double f_measure(double coverage, double factuality);

struct Query {
    std::string id;
    std::string text;
};

/// A scalar utility over (query, response) in [0, 1].
class Utility {
public:
    virtual ~Utility() = default;
    virtual double score(const Query& query, std::string_view response) = 0;
};

struct IcatConfig {
    MetricLevel level = MetricLevel::A;
    int evidence_depth = 5;
};

struct IcatBackends {
    std::shared_ptr<NliBackend> nli;  // required
    std::shared_ptr<GenerationBackend> claims;     // optional; sentence split when null
    std::shared_ptr<GenerationBackend> subtopics;  // required at level A
    std::shared_ptr<NliBackend> matcher;           // optional at S/A; lexical when null
};

class IcatEvaluator final : public Utility {
public:
    IcatEvaluator(IcatConfig config, const Retriever& evidence, IcatBackends backends,
                  SubtopicAnnotations annotations = {});

    /// Deterministic under scripted or lexical backends. An empty response
    /// yields a degenerate all-zero report.
    MetricReport evaluate(const Query& query, std::string_view response) const;

    double score(const Query& query, std::string_view response) override { return evaluate(query, response).f_measure; }

    const IcatConfig& config() const noexcept { return config_; }

private:
    IcatConfig config_;
    const Retriever& evidence_;
    IcatBackends backends_;
    SubtopicAnnotations annotations_;
};

/// Arithmetic mean of per-query F-measures (and of the other two fields).
MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace pnr
