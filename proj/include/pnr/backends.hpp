#pragma once

// Model backends: text generation, text embedding and NLI judgment.
//
// Every pipeline component talks to models through these three interfaces.
// Implementations must tolerate concurrent calls from several pipeline tasks.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace pnr {

using EmbeddingVector = Eigen::VectorXd;

struct GenerationRequest {
    /// Optional system message; empty means the request carries only a user turn.
    std::string system;
    std::string prompt;
    double temperature = 0.0;
    int max_output_tokens = 4096;
    std::optional<std::uint64_t> seed;

    /// Throws PreconditionError unless temperature is in [0,1] and the token
    /// cap is positive.
    void validate() const;
};

enum class NliLabel { entailed, not_entailed };

struct NliVerdict {
    NliLabel label = NliLabel::not_entailed;
    double confidence = 1.0;

    bool entailed() const noexcept { return label == NliLabel::entailed; }
};

const char* to_string(NliLabel label) noexcept;

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual std::string generate(const GenerationRequest& request) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual EmbeddingVector embed(std::string_view text) = 0;
    /// Embedding dimension, or 0 while still unknown (live backends learn it
    /// from the first response).
    virtual Eigen::Index dimension() const = 0;
};

class NliBackend {
public:
    virtual ~NliBackend() = default;
    virtual NliVerdict nli(std::string_view premise, std::string_view hypothesis) = 0;
};

/// Key the scripted backend uses to look up generation responses.
struct RequestFingerprint {
    std::uint64_t prompt_hash = 0;
    std::int64_t temperature_milli = 0;

    auto operator<=>(const RequestFingerprint&) const = default;
};

RequestFingerprint fingerprint(const GenerationRequest& request);

/// Deterministic bag-of-words embedding by feature hashing, L2-normalised.
/// Stands in for a neural encoder in desk-scale runs.
EmbeddingVector hashed_embedding(std::string_view text, Eigen::Index dimension);

/// True when the normalised hypothesis occurs inside the normalised premise
/// on word boundaries. Identity is the special case premise == hypothesis.
bool lexically_contains(std::string_view premise, std::string_view hypothesis);

struct CallRecord {
    enum class Kind { generate, embed, nli };
    Kind kind;
    std::string input;
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
};

/// Replays canned responses. Generation entries are queued per fingerprint
/// and consumed in order; an optional responder answers anything the script
/// does not cover. Without a responder an unscripted request is a ScriptError.
///
/// Embeddings and NLI verdicts are looked up by exact text; unscripted
/// embeddings go to the embed responder (none by default), unscripted NLI
/// pairs use the lexical containment rule.
class ScriptedBackend final : public GenerationBackend, public EmbeddingBackend, public NliBackend {
public:
    using Responder = std::function<std::string(const GenerationRequest&)>;
    using EmbedResponder = std::function<EmbeddingVector(std::string_view)>;

    explicit ScriptedBackend(Eigen::Index embedding_dimension = 0);

    ScriptedBackend& on_generate(std::string_view prompt, double temperature, std::string response);
    ScriptedBackend& respond_with(Responder responder);

    ScriptedBackend& on_embed(std::string text, EmbeddingVector vector);
    ScriptedBackend& embed_with(EmbedResponder responder);

    ScriptedBackend& on_nli(std::string premise, std::string hypothesis, NliVerdict verdict);

    std::string generate(const GenerationRequest& request) override;
    EmbeddingVector embed(std::string_view text) override;
    Eigen::Index dimension() const override;
    NliVerdict nli(std::string_view premise, std::string_view hypothesis) override;

    std::vector<CallRecord> call_log() const;
    std::size_t call_count() const;
    /// Calls of one kind only, in order.
    std::vector<CallRecord> calls(CallRecord::Kind kind) const;

private:
    void check_dimension(const EmbeddingVector& v);

    mutable std::mutex mutex_;
    std::map<RequestFingerprint, std::deque<std::string>> script_;
    Responder responder_;
    std::map<std::string, EmbeddingVector, std::less<>> embeddings_;
    EmbedResponder embed_responder_;
    Eigen::Index dimension_;
    std::map<std::pair<std::string, std::string>, NliVerdict> verdicts_;
    std::vector<CallRecord> log_;
};

/// NLI judged by prompting a generation backend. The verdict is "entailed"
/// when the reply starts with "entailed" or "yes" (case-insensitive).
class PromptedNli final : public NliBackend {
public:
    explicit PromptedNli(std::shared_ptr<GenerationBackend> generator, int max_output_tokens = 16);

    NliVerdict nli(std::string_view premise, std::string_view hypothesis) override;

    static std::string build_prompt(std::string_view premise, std::string_view hypothesis);

private:
    std::shared_ptr<GenerationBackend> generator_;
    int max_output_tokens_;
};

/// Embedding backend computing hashed_embedding; stateless and thread-safe.
class HashedEmbedder final : public EmbeddingBackend {
public:
    explicit HashedEmbedder(Eigen::Index dimension);
    EmbeddingVector embed(std::string_view text) override;
    Eigen::Index dimension() const override { return dimension_; }

private:
    Eigen::Index dimension_;
};

/// NLI by lexical containment; stateless and thread-safe.
class LexicalNli final : public NliBackend {
public:
    NliVerdict nli(std::string_view premise, std::string_view hypothesis) override;
};

}  // namespace pnr
