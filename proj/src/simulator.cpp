#include "pnr/simulator.hpp"

#include "pnr/planner.hpp"
#include "pnr/text.hpp"

#include <algorithm>
#include <set>

namespace pnr {

namespace {

const std::set<std::string, std::less<>>& stopwords() {
    static const std::set<std::string, std::less<>> words = {
        "a",    "an",   "and",  "are",   "as",   "at",    "be",   "by",   "can",  "do",   "does",
        "for",  "from", "how",  "i",     "if",   "in",    "is",   "it",   "of",   "on",   "or",
        "that", "the",  "this", "to",    "was",  "what",  "when", "where", "which", "who", "why",
        "will", "with", "you",  "your",  "my",   "should", "there", "their", "about", "some", "we",
    };
    return words;
}

// Text between `marker` and the next blank line (or end).
std::string section(std::string_view prompt, std::string_view marker) {
    auto pos = prompt.find(marker);
    if (pos == std::string_view::npos) return {};
    pos += marker.size();
    auto end = prompt.find("\n\n", pos);
    return trim(prompt.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
}

std::string after(std::string_view prompt, std::string_view marker, std::string_view until) {
    auto pos = prompt.find(marker);
    if (pos == std::string_view::npos) return {};
    pos += marker.size();
    auto end = prompt.rfind(until);
    if (end == std::string_view::npos || end < pos) end = prompt.size();
    return trim(prompt.substr(pos, end - pos));
}

std::string line_after(std::string_view prompt, std::string_view marker) {
    auto pos = prompt.find(marker);
    if (pos == std::string_view::npos) return {};
    pos += marker.size();
    auto end = prompt.find('\n', pos);
    return trim(prompt.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
}

std::uint64_t mix(const GenerationRequest& r) {
    return fnv1a64(r.prompt) ^ (r.seed.value_or(0) * 0x9e3779b97f4a7c15ULL);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::string simulate_plan(const GenerationRequest& r) {
    auto question = line_after(r.prompt, "Question: ");
    auto words = content_words(question);
    if (words.empty()) words.push_back(question.empty() ? "topic" : to_lower(question));
    const auto seed = r.seed.value_or(0);
    const std::size_t steps = 1 + static_cast<std::size_t>(seed % std::min<std::size_t>(words.size(), 4));
    std::vector<PlanStep> plan;
    for (std::size_t i = 0; i < steps; ++i) {
        const auto& focus = words[(i + seed) % words.size()];
        plan.push_back({focus, "the answer should explain " + focus, focus + " " + join(words, " ")});
    }
    return serialize_plan(plan);
}

std::string simulate_generation(const GenerationRequest& r) {
    auto docs_text = after(r.prompt, "Documents:\n", "\nAnswer:");
    const auto h = mix(r);
    std::vector<std::string> picked;
    std::size_t start = 0;
    std::size_t doc_no = 0;
    while (start < docs_text.size()) {
        auto end = docs_text.find("\n[", start);
        auto line = std::string_view(docs_text).substr(start, end == std::string::npos ? std::string::npos : end - start);
        auto close = line.find("] ");
        if (close != std::string_view::npos) line = line.substr(close + 2);
        auto sentences = split_sentences(line);
        if (!sentences.empty()) picked.push_back(sentences[(h + doc_no) % sentences.size()]);
        ++doc_no;
        if (end == std::string::npos) break;
        start = end + 1;
    }
    if (picked.empty()) {
        auto question = line_after(r.prompt, "Question: ");
        return "There is no specific evidence available about " + question + ".";
    }
    // Drop a seed-dependent sentence so that rollouts differ in quality.
    if (picked.size() > 2) picked.erase(picked.begin() + static_cast<std::ptrdiff_t>(h % picked.size()));
    return join(picked, " ");
}

std::string simulate_edit(const GenerationRequest& r) {
    auto previous = after(r.prompt, "\nResponse:\n", "\n\nImproved response:");
    std::vector<std::string> kept;
    std::set<std::string> seen;
    for (auto& s : split_sentences(previous)) {
        if (seen.insert(normalize_for_match(s)).second) kept.push_back(std::move(s));
    }
    return kept.empty() ? previous : join(kept, " ");
}

}  // namespace

std::vector<std::string> content_words(std::string_view text) {
    std::vector<std::string> out;
    for (auto& t : tokenize(text)) {
        if (t.size() < 3 || stopwords().count(t) != 0) continue;
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    }
    return out;
}

std::string simulate_response(const GenerationRequest& r) {
    const auto& p = r.prompt;
    if (p.find("Respond with JSON only") != std::string::npos) return simulate_plan(r);
    if (p.find("\nImproved response:\n") != std::string::npos) return simulate_edit(r);
    if (p.find("\nAnswer:\n") != std::string::npos) return simulate_generation(r);
    if (p.find("\nStatements:\n") != std::string::npos) {
        return join(split_sentences(after(p, "Text:\n", "\n\nStatements:")), "\n");
    }
    if (p.find("\nSubtopics:\n") != std::string::npos) {
        auto words = content_words(line_after(p, "Question: "));
        if (words.size() > 4) words.resize(4);
        return join(words, "\n");
    }
    if (p.find("\nAnswer:") != std::string::npos && p.find("Premise:\n") != std::string::npos) {
        auto premise = section(p, "Premise:\n");
        auto hypothesis = section(p, "Hypothesis:\n");
        return lexically_contains(premise, hypothesis) ? "entailed" : "not-entailed";
    }
    return "I do not know.";
}

std::shared_ptr<ScriptedBackend> make_simulated_backend(Eigen::Index embedding_dimension) {
    auto backend = std::make_shared<ScriptedBackend>(embedding_dimension);
    backend->respond_with(simulate_response);
    backend->embed_with([embedding_dimension](std::string_view text) { return hashed_embedding(text, embedding_dimension); });
    return backend;
}

}  // namespace pnr
