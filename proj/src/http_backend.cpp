#include "pnr/http_backend.hpp"

#include "pnr/error.hpp"
#include "pnr/text.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <thread>

namespace pnr {

using nlohmann::json;

HttpEndpoint HttpEndpoint::from_env() {
    HttpEndpoint ep;
    const char* url = std::getenv("PNR_ENDPOINT");
    if (url == nullptr || *url == '\0') throw ConfigError("PNR_ENDPOINT is not set");
    ep.base_url = url;
    while (!ep.base_url.empty() && ep.base_url.back() == '/') ep.base_url.pop_back();
    if (const char* key = std::getenv("PNR_API_KEY")) ep.api_key = key;
    if (const char* model = std::getenv("PNR_MODEL")) ep.model = model;
    if (const char* model = std::getenv("PNR_EMBED_MODEL")) ep.embedding_model = model;
    return ep;
}

json chat_request_body(const GenerationRequest& request, const std::string& model) {
    json messages = json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.prompt}});
    json body = {
        {"model", model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };
    if (request.seed) body["seed"] = *request.seed;
    return body;
}

std::string parse_chat_response(const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw FormatError("chat response is not JSON");
    const auto* content = doc.is_object() && doc.contains("choices") && doc["choices"].is_array() &&
                                  !doc["choices"].empty() && doc["choices"][0].contains("message") &&
                                  doc["choices"][0]["message"].contains("content")
                              ? &doc["choices"][0]["message"]["content"]
                              : nullptr;
    if (content == nullptr || !content->is_string()) {
        throw FormatError("chat response lacks choices[0].message.content");
    }
    return content->get<std::string>();
}

json embedding_request_body(std::string_view text, const std::string& model) {
    return {{"model", model}, {"input", std::string(text)}};
}

EmbeddingVector parse_embedding_response(const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("data") || !doc["data"].is_array() ||
        doc["data"].empty() || !doc["data"][0].contains("embedding") || !doc["data"][0]["embedding"].is_array()) {
        throw FormatError("embedding response lacks data[0].embedding");
    }
    const auto& values = doc["data"][0]["embedding"];
    EmbeddingVector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i].is_number()) throw FormatError("embedding entry is not a number");
        v[static_cast<Eigen::Index>(i)] = values[i].get<double>();
    }
    if (v.size() == 0 || !v.allFinite()) throw FormatError("embedding is empty or non-finite");
    return v;
}

HttpBackend::HttpBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.base_url.empty()) throw ConfigError("HTTP backend needs a base URL");
    if (endpoint_.max_attempts < 1) throw ConfigError("HTTP backend needs at least one attempt");
}

std::string HttpBackend::post(const std::string& path, const std::string& body) {
    auto backoff = endpoint_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= endpoint_.max_attempts; ++attempt) {
        httplib::Client client(endpoint_.base_url);
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(std::chrono::seconds(endpoint_.timeout_seconds));
        httplib::Headers headers;
        if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
        auto res = client.Post(path, headers, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) return res->body;
        if (res && res->status >= 400 && res->status < 500) {
            throw TransportError("POST " + path + " rejected with HTTP " + std::to_string(res->status) + ": " +
                                 res->body.substr(0, 200));
        }
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        spdlog::warn("POST {} attempt {}/{} failed: {}", path, attempt, endpoint_.max_attempts, last_error);
        if (attempt < endpoint_.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw TransportError("POST " + path + " failed after " + std::to_string(endpoint_.max_attempts) +
                         " attempts: " + last_error);
}

std::string HttpBackend::generate(const GenerationRequest& request) {
    request.validate();
    auto body = chat_request_body(request, endpoint_.model).dump();
    return parse_chat_response(post(endpoint_.chat_path, body));
}

EmbeddingVector HttpBackend::embed(std::string_view text) {
    if (trim(text).empty()) throw PreconditionError("embedding input must be nonempty");
    auto body = embedding_request_body(text, endpoint_.embedding_model).dump();
    EmbeddingVector v = parse_embedding_response(post(endpoint_.embeddings_path, body));
    Eigen::Index expected = 0;
    if (!dimension_.compare_exchange_strong(expected, v.size()) && expected != v.size()) {
        throw FormatError("embedding dimension changed from " + std::to_string(expected) + " to " +
                          std::to_string(v.size()));
    }
    return v;
}

}  // namespace pnr
