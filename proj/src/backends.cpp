#include "pnr/backends.hpp"

#include "pnr/error.hpp"
#include "pnr/text.hpp"

#include <cmath>

namespace pnr {

void GenerationRequest::validate() const {
    if (!(temperature >= 0.0 && temperature <= 1.0)) {
        throw PreconditionError("generation temperature " + std::to_string(temperature) +
                                " outside [0, 1]");
    }
    if (max_output_tokens < 1) {
        throw PreconditionError("max_output_tokens must be at least 1");
    }
}

const char* to_string(NliLabel label) noexcept {
    return label == NliLabel::entailed ? "entailed" : "not-entailed";
}

RequestFingerprint fingerprint(const GenerationRequest& request) {
    return {fnv1a64(request.prompt), static_cast<std::int64_t>(std::llround(request.temperature * 1000.0))};
}

EmbeddingVector hashed_embedding(std::string_view text, Eigen::Index dimension) {
    if (dimension < 1) throw PreconditionError("embedding dimension must be positive");
    EmbeddingVector v = EmbeddingVector::Zero(dimension);
    for (const auto& term : tokenize(text)) {
        auto h = fnv1a64(term);
        auto slot = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dimension));
        v[slot] += ((h >> 63) != 0U) ? -1.0 : 1.0;
    }
    double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

bool lexically_contains(std::string_view premise, std::string_view hypothesis) {
    auto h = normalize_for_match(hypothesis);
    if (h == " ") return false;
    return normalize_for_match(premise).find(h) != std::string::npos;
}

namespace {

void require_text(std::string_view text, const char* what) {
    if (trim(text).empty()) throw PreconditionError(std::string(what) + " must be nonempty");
}

}  // namespace

ScriptedBackend::ScriptedBackend(Eigen::Index embedding_dimension) : dimension_(embedding_dimension) {}

ScriptedBackend& ScriptedBackend::on_generate(std::string_view prompt, double temperature, std::string response) {
    GenerationRequest req;
    req.prompt = std::string(prompt);
    req.temperature = temperature;
    std::lock_guard lock(mutex_);
    script_[fingerprint(req)].push_back(std::move(response));
    return *this;
}

ScriptedBackend& ScriptedBackend::respond_with(Responder responder) {
    std::lock_guard lock(mutex_);
    responder_ = std::move(responder);
    return *this;
}

ScriptedBackend& ScriptedBackend::on_embed(std::string text, EmbeddingVector vector) {
    std::lock_guard lock(mutex_);
    check_dimension(vector);
    embeddings_.insert_or_assign(std::move(text), std::move(vector));
    return *this;
}

ScriptedBackend& ScriptedBackend::embed_with(EmbedResponder responder) {
    std::lock_guard lock(mutex_);
    embed_responder_ = std::move(responder);
    return *this;
}

ScriptedBackend& ScriptedBackend::on_nli(std::string premise, std::string hypothesis, NliVerdict verdict) {
    std::lock_guard lock(mutex_);
    verdicts_.insert_or_assign({std::move(premise), std::move(hypothesis)}, verdict);
    return *this;
}

std::string ScriptedBackend::generate(const GenerationRequest& request) {
    request.validate();
    std::lock_guard lock(mutex_);
    log_.push_back({CallRecord::Kind::generate, request.prompt, request.temperature, request.seed});
    auto it = script_.find(fingerprint(request));
    if (it != script_.end() && !it->second.empty()) {
        std::string out = std::move(it->second.front());
        it->second.pop_front();
        return out;
    }
    if (responder_) return responder_(request);
    throw ScriptError("script exhausted for prompt hash " + hash_hex(request.prompt) + " at temperature " +
                      std::to_string(request.temperature));
}

EmbeddingVector ScriptedBackend::embed(std::string_view text) {
    require_text(text, "embedding input");
    std::lock_guard lock(mutex_);
    log_.push_back({CallRecord::Kind::embed, std::string(text), 0.0, std::nullopt});
    if (auto it = embeddings_.find(text); it != embeddings_.end()) return it->second;
    if (!embed_responder_) throw ScriptError("no scripted embedding for text hash " + hash_hex(text));
    EmbeddingVector v = embed_responder_(text);
    check_dimension(v);
    return v;
}

Eigen::Index ScriptedBackend::dimension() const {
    std::lock_guard lock(mutex_);
    return dimension_;
}

NliVerdict ScriptedBackend::nli(std::string_view premise, std::string_view hypothesis) {
    require_text(premise, "NLI premise");
    require_text(hypothesis, "NLI hypothesis");
    std::lock_guard lock(mutex_);
    log_.push_back({CallRecord::Kind::nli, std::string(premise) + "\n=>\n" + std::string(hypothesis), 0.0,
                    std::nullopt});
    auto it = verdicts_.find({std::string(premise), std::string(hypothesis)});
    if (it != verdicts_.end()) return it->second;
    return {lexically_contains(premise, hypothesis) ? NliLabel::entailed : NliLabel::not_entailed, 1.0};
}

std::vector<CallRecord> ScriptedBackend::call_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t ScriptedBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

std::vector<CallRecord> ScriptedBackend::calls(CallRecord::Kind kind) const {
    std::lock_guard lock(mutex_);
    std::vector<CallRecord> out;
    for (const auto& c : log_) {
        if (c.kind == kind) out.push_back(c);
    }
    return out;
}

void ScriptedBackend::check_dimension(const EmbeddingVector& v) {
    if (!v.allFinite()) throw PreconditionError("embedding has non-finite entries");
    if (dimension_ == 0) {
        dimension_ = v.size();
    } else if (v.size() != dimension_) {
        throw PreconditionError("embedding dimension " + std::to_string(v.size()) + " differs from backend dimension " +
                                std::to_string(dimension_));
    }
}

PromptedNli::PromptedNli(std::shared_ptr<GenerationBackend> generator, int max_output_tokens)
    : generator_(std::move(generator)), max_output_tokens_(max_output_tokens) {}

std::string PromptedNli::build_prompt(std::string_view premise, std::string_view hypothesis) {
    std::string p;
    p += "Decide whether the premise entails the hypothesis.\n";
    p += "Answer with exactly one word: \"entailed\" or \"not-entailed\".\n\n";
    p += "Premise:\n";
    p += premise;
    p += "\n\nHypothesis:\n";
    p += hypothesis;
    p += "\n\nAnswer:";
    return p;
}

NliVerdict PromptedNli::nli(std::string_view premise, std::string_view hypothesis) {
    require_text(premise, "NLI premise");
    require_text(hypothesis, "NLI hypothesis");
    GenerationRequest req;
    req.prompt = build_prompt(premise, hypothesis);
    req.temperature = 0.0;
    req.max_output_tokens = max_output_tokens_;
    auto reply = to_lower(trim(generator_->generate(req)));
    bool yes = reply.rfind("entailed", 0) == 0 || reply.rfind("yes", 0) == 0;
    return {yes ? NliLabel::entailed : NliLabel::not_entailed, 1.0};
}

HashedEmbedder::HashedEmbedder(Eigen::Index dimension) : dimension_(dimension) {
    if (dimension < 1) throw PreconditionError("embedding dimension must be positive");
}

EmbeddingVector HashedEmbedder::embed(std::string_view text) {
    require_text(text, "embedding input");
    return hashed_embedding(text, dimension_);
}

NliVerdict LexicalNli::nli(std::string_view premise, std::string_view hypothesis) {
    require_text(premise, "NLI premise");
    require_text(hypothesis, "NLI hypothesis");
    return {lexically_contains(premise, hypothesis) ? NliLabel::entailed : NliLabel::not_entailed, 1.0};
}

}  // namespace pnr
