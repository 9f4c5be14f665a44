#include "cascade/llm.hpp"

#include <algorithm>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/random.hpp"
#include "cascade/text.hpp"
#include "http_json.hpp"

namespace cascade {

RequestLog::RequestLog(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    out_.open(file, std::ios::app);
    if (!out_) throw IoError("cannot open request log '" + file.string() + "'");
}

void RequestLog::record(const std::string& request_id, const std::string& model, const std::string& hash,
                        double latency_ms, const std::string& status) {
    std::lock_guard lock(mu_);
    ++count_;
    if (!out_.is_open()) return;
    nlohmann::ordered_json j;
    j["request_id"] = request_id;
    j["model"] = model;
    j["prompt_hash"] = hash;
    j["latency_ms"] = latency_ms;
    j["status"] = status;
    out_ << j.dump() << '\n';
    out_.flush();
}

std::size_t RequestLog::count() const {
    std::lock_guard lock(mu_);
    return count_;
}

std::string prompt_hash(std::string_view prompt) {
    return text::hex64(fnv1a64(prompt));
}

std::string next_request_id() {
    static std::atomic<std::uint64_t> counter{0};
    return "req-" + std::to_string(++counter);
}

namespace {

int approx_tokens(std::string_view s) {
    return static_cast<int>(text::tokenize(s).size());
}

} // namespace

HttpLlmClient::HttpLlmClient(HttpLlmConfig cfg, std::shared_ptr<RequestLog> log)
    : cfg_(std::move(cfg)), log_(std::move(log)), in_flight_(std::clamp(cfg_.max_in_flight, 1, 1024)) {}

ChatResponse HttpLlmClient::chat(const ChatRequest& req) const {
    if (text::trim(req.prompt).empty()) throw InvalidArgument("chat: empty prompt");
    ChatResponse resp;
    resp.request_id = next_request_id();
    const auto hash = prompt_hash(req.prompt);

    nlohmann::json body;
    body["prompt"] = req.prompt;
    body["max_tokens"] = req.max_tokens;
    body["temperature"] = req.temperature;

    in_flight_.acquire();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };
    nlohmann::json reply;
    try {
        reply = detail::post_json(cfg_.endpoint, body);
    } catch (const detail::HttpFailure& f) {
        in_flight_.release();
        const double ms = elapsed_ms();
        switch (f.kind) {
        case detail::HttpFailureKind::timeout:
            if (log_) log_->record(resp.request_id, cfg_.model, hash, ms, "timeout");
            throw LlmTimeout(f.message);
        case detail::HttpFailureKind::malformed:
            if (log_) log_->record(resp.request_id, cfg_.model, hash, ms, "malformed");
            throw LlmMalformedResponse(f.message);
        case detail::HttpFailureKind::transport:
            break;
        }
        if (log_) log_->record(resp.request_id, cfg_.model, hash, ms, "transport_error");
        throw LlmTransportError(f.message);
    }
    in_flight_.release();
    resp.latency_ms = elapsed_ms();

    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
        if (log_) log_->record(resp.request_id, cfg_.model, hash, resp.latency_ms, "malformed");
        throw LlmMalformedResponse(cfg_.endpoint.url + cfg_.endpoint.path + ": reply has no string 'text'");
    }
    resp.text = reply["text"].get<std::string>();
    resp.prompt_tokens = reply.value("prompt_tokens", approx_tokens(req.prompt));
    resp.completion_tokens = reply.value("completion_tokens", approx_tokens(resp.text));
    if (log_) log_->record(resp.request_id, cfg_.model, hash, resp.latency_ms, "ok");
    return resp;
}

EmbedderRepresentationProvider::EmbedderRepresentationProvider(std::shared_ptr<const EmbeddingProvider> embedder)
    : embedder_(std::move(embedder)) {
    if (!embedder_) throw InvalidArgument("representation provider needs an embedder");
}

EmbeddingVector EmbedderRepresentationProvider::repr(std::string_view text) const {
    return embedder_->embed(text);
}

HttpRepresentationProvider::HttpRepresentationProvider(HttpEndpoint endpoint, std::size_t dim)
    : endpoint_(std::move(endpoint)), dim_(dim) {}

EmbeddingVector HttpRepresentationProvider::repr(std::string_view text) const {
    if (text::trim(text).empty()) throw InvalidArgument("repr: empty text");
    nlohmann::json body;
    body["text"] = std::string(text);
    nlohmann::json reply;
    try {
        reply = detail::post_json(endpoint_, body);
    } catch (const detail::HttpFailure& f) {
        throw ProviderError(f.message);
    }
    if (!reply.contains("vector") || !reply["vector"].is_array()) throw ProviderError(id() + ": reply has no 'vector'");
    auto values = reply["vector"].get<std::vector<double>>();
    if (values.size() != dim_) throw ProviderError(id() + ": vector of dim " + std::to_string(values.size()));
    try {
        return EmbeddingVector::normalized(std::move(values));
    } catch (const InvalidArgument& e) {
        throw ProviderError(id() + ": " + e.what());
    }
}

} // namespace cascade
