#pragma once

#include "pnr/backends.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <string>

namespace pnr {

/// Connection settings for an OpenAI-compatible inference server.
struct HttpEndpoint {
    std::string base_url;  // scheme://host[:port], no trailing slash
    std::string api_key;
    std::string model;
    std::string embedding_model;
    std::string chat_path = "/v1/chat/completions";
    std::string embeddings_path = "/v1/embeddings";
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
    int timeout_seconds = 300;

    /// Reads PNR_ENDPOINT, PNR_API_KEY, PNR_MODEL and PNR_EMBED_MODEL.
    /// Throws ConfigError when PNR_ENDPOINT is unset.
    static HttpEndpoint from_env();
};

/// Request body for one chat completion.
nlohmann::json chat_request_body(const GenerationRequest& request, const std::string& model);
/// Text of choices[0].message.content; FormatError if absent.
std::string parse_chat_response(const std::string& body);

nlohmann::json embedding_request_body(std::string_view text, const std::string& model);
/// Values of data[0].embedding; FormatError if absent or non-numeric.
EmbeddingVector parse_embedding_response(const std::string& body);

/// Live generation and embedding over HTTP. Connection failures and 5xx
/// responses are retried with doubling backoff; 4xx responses fail at once.
class HttpBackend final : public GenerationBackend, public EmbeddingBackend {
public:
    explicit HttpBackend(HttpEndpoint endpoint);

    std::string generate(const GenerationRequest& request) override;
    EmbeddingVector embed(std::string_view text) override;
    Eigen::Index dimension() const override { return dimension_.load(); }

    const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    std::string post(const std::string& path, const std::string& body);

    HttpEndpoint endpoint_;
    std::atomic<Eigen::Index> dimension_{0};
};

}  // namespace pnr
