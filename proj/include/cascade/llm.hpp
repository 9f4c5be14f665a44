#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>

#include "cascade/embedding.hpp"

namespace cascade {

struct ChatRequest {
    std::string prompt;
    int max_tokens = 512;
    double temperature = 0.0;
};

struct ChatResponse {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    double latency_ms = 0.0;
    std::string request_id;
};

// Append-only JSONL log of LLM calls: request id, prompt hash, latency, status.
class RequestLog {
public:
    RequestLog() = default; // in-memory only
    explicit RequestLog(const std::filesystem::path& file);

    void record(const std::string& request_id, const std::string& model, const std::string& prompt_hash,
                double latency_ms, const std::string& status);
    std::size_t count() const;

private:
    mutable std::mutex mu_;
    std::ofstream out_;
    std::size_t count_ = 0;
};

// Chat-style LLM. Implementations must be safe to call concurrently.
// Errors: LlmTimeout, LlmTransportError, LlmMalformedResponse.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual ChatResponse chat(const ChatRequest& req) const = 0;
    virtual std::string model_id() const = 0;
};

std::string prompt_hash(std::string_view prompt);
std::string next_request_id();

struct HttpLlmConfig {
    HttpEndpoint endpoint{.url = "http://127.0.0.1:8000", .path = "/v1/generate"};
    std::string model = "remote";
    int max_in_flight = 8;
};

// Generic backend:
//   POST {"prompt": str, "max_tokens": int, "temperature": num}  ->  {"text": str}
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpLlmConfig cfg, std::shared_ptr<RequestLog> log = nullptr);

    ChatResponse chat(const ChatRequest& req) const override;
    std::string model_id() const override { return cfg_.model; }

private:
    HttpLlmConfig cfg_;
    std::shared_ptr<RequestLog> log_;
    mutable std::counting_semaphore<1024> in_flight_;
};

// Decoder hidden state of the last prompt token, unit-normalized.
class RepresentationProvider {
public:
    virtual ~RepresentationProvider() = default;
    virtual EmbeddingVector repr(std::string_view text) const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::string id() const = 0;
};

// Backs representations with any embedding provider. With the hashing
// embedder this is the deterministic mock; with a PrecomputedEmbedder it
// pins a synthetic geometry.
class EmbedderRepresentationProvider final : public RepresentationProvider {
public:
    explicit EmbedderRepresentationProvider(std::shared_ptr<const EmbeddingProvider> embedder);

    EmbeddingVector repr(std::string_view text) const override;
    std::size_t dim() const override { return embedder_->dim(); }
    std::string id() const override { return "repr:" + embedder_->id(); }

private:
    std::shared_ptr<const EmbeddingProvider> embedder_;
};

// Self-hosted encoder endpoint:  POST {"text": str}  ->  {"vector": [...]}
class HttpRepresentationProvider final : public RepresentationProvider {
public:
    HttpRepresentationProvider(HttpEndpoint endpoint, std::size_t dim);

    EmbeddingVector repr(std::string_view text) const override;
    std::size_t dim() const override { return dim_; }
    std::string id() const override { return "repr:" + endpoint_.url + endpoint_.path; }

private:
    HttpEndpoint endpoint_;
    std::size_t dim_;
};

} // namespace cascade
