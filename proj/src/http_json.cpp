#include "http_json.hpp"

#include <algorithm>
#include <chrono>
#include <optional>

#include <httplib.h>

namespace cascade::detail {

namespace {

std::optional<HttpFailure> attempt(const HttpEndpoint& ep, const std::string& payload, nlohmann::json& out) {
    httplib::Client client(ep.url);
    const auto t = ep.timeout;
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(t);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(t - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    if (!ep.bearer_token.empty()) client.set_bearer_token_auth(ep.bearer_token);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(ep.path, payload, "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - start;

    if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= t);
        return HttpFailure{timed_out ? HttpFailureKind::timeout : HttpFailureKind::transport,
                           ep.url + ep.path + ": " + httplib::to_string(err)};
    }
    if (res->status < 200 || res->status >= 300) {
        return HttpFailure{HttpFailureKind::transport, ep.url + ep.path + ": HTTP " + std::to_string(res->status)};
    }
    try {
        out = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        return HttpFailure{HttpFailureKind::malformed, ep.url + ep.path + ": " + e.what()};
    }
    return std::nullopt;
}

} // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
    const std::string payload = body.dump();
    HttpFailure last{HttpFailureKind::transport, "no attempt made"};
    for (int i = 0; i <= std::max(0, endpoint.retries); ++i) {
        nlohmann::json out;
        auto f = attempt(endpoint, payload, out);
        if (!f) return out;
        last = std::move(*f);
        if (last.kind == HttpFailureKind::malformed) break;
    }
    throw last;
}

} // namespace cascade::detail
