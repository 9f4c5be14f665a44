#pragma once

// Internal: JSON-over-HTTP POST with retries, shared by the remote embedder,
// the LLM client and the representation client.

#include <string>

#include <json.hpp>

#include "cascade/embedding.hpp"

namespace cascade::detail {

enum class HttpFailureKind { timeout, transport, malformed };

struct HttpFailure {
    HttpFailureKind kind;
    std::string message;
};

// Returns the parsed JSON body of a 2xx response. Throws HttpFailure.
// Timeouts and transport failures are retried `endpoint.retries` times.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

} // namespace cascade::detail
