#include <atomic>
#include <mutex>

#include <httplib.h>

#include "cascade/app.hpp"
#include "cascade/error.hpp"

namespace cascade::app {

namespace {

struct State {
    Bundle bundle;
    Router router;
};

std::shared_ptr<const State> make_state(const RunConfig& cfg) {
    auto b = load_bundle(cfg);
    auto r = make_router(b, cfg);
    return std::make_shared<const State>(State{std::move(b), std::move(r)});
}

std::string error_body(const std::string& kind, const std::string& message) {
    return nlohmann::json{{"error", kind}, {"message", message}}.dump();
}

} // namespace

struct Server::Impl {
    RunConfig cfg;
    mutable std::mutex mu;
    std::shared_ptr<const State> state;
    std::atomic<std::size_t> served{0};
    httplib::Server http;

    std::shared_ptr<const State> current() const {
        std::lock_guard lock(mu);
        return state;
    }
};

Server::Server(RunConfig cfg) : impl_(std::make_unique<Impl>()) {
    impl_->cfg = std::move(cfg);
    impl_->state = make_state(impl_->cfg);

    impl_->http.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
        auto [status, body] = predict(req.body);
        res.status = status;
        res.set_content(body, "application/json");
    });
    impl_->http.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(health(), "application/json");
    });
    impl_->http.Post("/admin/reload", [this](const httplib::Request&, httplib::Response& res) {
        try {
            reload();
            res.set_content(health(), "application/json");
        } catch (const Error& e) {
            res.status = 500;
            res.set_content(error_body(e.kind(), e.what()), "application/json");
        }
    });
}

Server::~Server() {
    stop();
}

int Server::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void Server::run() {
    impl_->http.listen_after_bind();
}

void Server::stop() {
    impl_->http.stop();
}

std::pair<int, std::string> Server::predict(const std::string& body) const {
    std::string query;
    try {
        const auto j = nlohmann::json::parse(body);
        if (!j.is_object() || !j.contains("query") || !j.at("query").is_string())
            return {400, error_body("invalid_argument", "body must be {\"query\": string}")};
        query = j.at("query").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        return {400, error_body("format_error", e.what())};
    }
    if (query.find_first_not_of(" \t\r\n") == std::string::npos)
        return {400, error_body("invalid_argument", "query is empty")};
    try {
        const auto state = impl_->current();
        const auto p = state->router.route(query);
        ++impl_->served;
        return {200, prediction_json(p).dump()};
    } catch (const LlmError& e) {
        return {502, error_body(e.kind(), e.what())};
    } catch (const Error& e) {
        return {500, error_body(e.kind(), e.what())};
    }
}

std::string Server::health() const {
    const auto state = impl_->current();
    nlohmann::ordered_json j;
    j["status"] = "ok";
    j["intents"] = state->bundle.head->classes();
    j["llm"] = state->bundle.llm->model_id();
    j["served"] = impl_->served.load();
    return j.dump();
}

void Server::reload() {
    auto fresh = make_state(impl_->cfg);
    std::lock_guard lock(impl_->mu);
    impl_->state = std::move(fresh);
}

} // namespace cascade::app
