#include <doctest.h>

#include <atomic>
#include <set>
#include <chrono>
#include <thread>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/llm.hpp"
#include "cascade/mock_llm.hpp"
#include "support/http_stub.hpp"
#include "support/tmpdir.hpp"

using namespace cascade;

namespace {

HttpLlmConfig config_for(const testing::HttpStub& stub, const std::string& path, int timeout_ms = 2000) {
    HttpLlmConfig c;
    c.endpoint.url = stub.url();
    c.endpoint.path = path;
    c.endpoint.timeout = std::chrono::milliseconds(timeout_ms);
    c.endpoint.retries = 0;
    c.model = "stub";
    return c;
}

std::string prompt_for(const std::string& query, const LabelMask& mask, PromptMode mode) {
    RetrievedExamples none;
    return build_prompt(query, none, mask, {}, mode).render(PromptTemplates::defaults());
}

} // namespace

TEST_CASE("HTTP client: success, malformed, timeout, transport") {
    testing::HttpStub stub;
    std::atomic<int> hits{0};
    std::string seen_auth;
    stub.server.Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json out{{"text", "echo " + body["prompt"].get<std::string>()}, {"completion_tokens", 2}};
        res.set_content(out.dump(), "application/json");
    });
    stub.server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("<html>", "text/html");
    });
    stub.server.Post("/notext", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices": []})", "application/json");
    });
    stub.server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(700));
        res.set_content(R"({"text": "late"})", "application/json");
    });
    stub.server.Post("/fail", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    stub.start();

    testing::TempDir tmp;
    auto log = std::make_shared<RequestLog>(tmp / "requests.jsonl");
    auto cfg = config_for(stub, "/ok");
    cfg.endpoint.bearer_token = "secret";
    HttpLlmClient ok(cfg, log);
    const auto r = ok.chat({"hello", 16, 0.0});
    CHECK(r.text == "echo hello");
    CHECK(r.completion_tokens == 2);
    CHECK(r.prompt_tokens >= 1);
    CHECK(seen_auth == "Bearer secret");
    CHECK(ok.model_id() == "stub");
    CHECK_THROWS_AS(ok.chat({"  ", 16, 0.0}), InvalidArgument);

    CHECK_THROWS_AS(HttpLlmClient(config_for(stub, "/garbage"), log).chat({"x"}), LlmMalformedResponse);
    CHECK_THROWS_AS(HttpLlmClient(config_for(stub, "/notext"), log).chat({"x"}), LlmMalformedResponse);
    CHECK_THROWS_AS(HttpLlmClient(config_for(stub, "/slow", 150), log).chat({"x"}), LlmTimeout);

    hits = 0;
    auto retrying = config_for(stub, "/fail");
    retrying.endpoint.retries = 2;
    CHECK_THROWS_AS(HttpLlmClient(retrying, log).chat({"x"}), LlmTransportError);
    CHECK(hits == 3);

    HttpLlmConfig dead;
    dead.endpoint.url = "http://127.0.0.1:1";
    dead.endpoint.timeout = std::chrono::milliseconds(300);
    dead.endpoint.retries = 0;
    CHECK_THROWS_AS(HttpLlmClient(dead).chat({"x"}), LlmTransportError);

    CHECK(log->count() == 5);
    const auto lines = read_file(tmp / "requests.jsonl");
    std::size_t n = 0;
    std::set<std::string> statuses;
    std::size_t pos = 0;
    while (pos < lines.size()) {
        const auto end = lines.find('\n', pos);
        const auto j = nlohmann::json::parse(lines.substr(pos, end - pos));
        statuses.insert(j.at("status").get<std::string>());
        CHECK(j.at("prompt_hash").get<std::string>().size() == 16);
        ++n;
        pos = end + 1;
    }
    CHECK(n == 5);
    CHECK(statuses == std::set<std::string>{"ok", "malformed", "timeout", "transport_error"});
}

TEST_CASE("HTTP client bounds concurrent requests") {
    testing::HttpStub stub;
    std::atomic<int> now{0}, peak{0};
    stub.server.Post("/gen", [&](const httplib::Request&, httplib::Response& res) {
        const int v = ++now;
        int p = peak.load();
        while (v > p && !peak.compare_exchange_weak(p, v)) {}
        std::this_thread::sleep_for(std::chrono::milliseconds(40));
        --now;
        res.set_content(R"({"text": "ANSWER: OOS"})", "application/json");
    });
    stub.start();
    auto cfg = config_for(stub, "/gen");
    cfg.max_in_flight = 2;
    HttpLlmClient client(cfg);
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i) ts.emplace_back([&] { client.chat({"p"}); });
    for (auto& t : ts) t.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("mock LLM answers from its oracle") {
    const LabelMask mask({{"balance", "Label-3"}, {"card", "Label-25"}});
    std::map<std::string, LabelSet> oracle{{"what is my balance", {"balance"}},
                                           {"balance and card", {"balance", "card"}},
                                           {"tell me a joke", {}}};
    MockLlm llm(oracle, mask);

    auto ask = [&](const std::string& q, PromptMode mode) {
        return parse_response(llm.chat({prompt_for(q, mask, mode)}).text, mask);
    };
    auto a = ask("what is my balance", PromptMode::with_oos);
    CHECK(a.labels == std::vector<IntentId>{"balance"});
    a = ask("balance and card", PromptMode::with_oos);
    CHECK(a.labels == std::vector<IntentId>{"balance", "card"});
    CHECK(ask("tell me a joke", PromptMode::with_oos).kind == ParsedAnswer::Kind::oos);
    CHECK(ask("never seen", PromptMode::with_oos).kind == ParsedAnswer::Kind::oos);

    // OOS query with no OOS option: forced to a label, nearest when provided
    CHECK(ask("tell me a joke", PromptMode::in_scope_only).kind == ParsedAnswer::Kind::labels);
    llm.set_nearest([](const std::string&) { return IntentId("card"); });
    CHECK(ask("tell me a joke", PromptMode::in_scope_only).labels == std::vector<IntentId>{"card"});
    CHECK(llm.calls() == 6);
    CHECK_THROWS_AS(llm.chat({""}), InvalidArgument);
}

TEST_CASE("mock LLM error rates are keyed on the query") {
    const LabelMask mask({{"a", "Label-1"}, {"b", "Label-2"}, {"c", "Label-3"}});
    std::map<std::string, LabelSet> oracle;
    for (int i = 0; i < 400; ++i) oracle["q" + std::to_string(i)] = i % 2 ? LabelSet{"a"} : LabelSet{};
    MockLlmConfig cfg;
    cfg.error_rate = 0.25;
    cfg.oos_miss_rate = 0.5;
    cfg.seed = 3;
    MockLlm llm(oracle, mask, cfg);
    int wrong = 0, missed = 0;
    for (int i = 0; i < 400; ++i) {
        const auto q = "q" + std::to_string(i);
        const auto p = parse_response(llm.chat({prompt_for(q, mask, PromptMode::with_oos)}).text, mask);
        CHECK(p.kind != ParsedAnswer::Kind::failure);
        const auto again = parse_response(llm.chat({prompt_for(q, mask, PromptMode::with_oos)}).text, mask);
        CHECK(again.labels == p.labels);
        if (i % 2) wrong += p.labels != std::vector<IntentId>{"a"};
        else missed += p.kind != ParsedAnswer::Kind::oos;
    }
    CHECK(wrong > 25);
    CHECK(wrong < 75);
    CHECK(missed > 70);
    CHECK(missed < 130);
}

TEST_CASE("mock LLM writes descriptions from example lines") {
    MockLlm llm({}, LabelMask(std::vector<LabelMask::Entry>{{"a", "Label-1"}}));
    DescriptionCache cache;
    const auto d = generate_description({"a", "A", std::nullopt}, {"first one", "second one"}, llm, cache, "h");
    CHECK(d.find("first one") != std::string::npos);
    CHECK(d.find("second one") != std::string::npos);
}

TEST_CASE("representation providers") {
    auto e = std::make_shared<HashingEmbedder>(32);
    EmbedderRepresentationProvider p(e);
    CHECK(p.dim() == 32);
    CHECK(p.repr("hello") == e->embed("hello"));
    CHECK(p.id() == "repr:" + e->id());

    testing::HttpStub stub;
    stub.server.Post("/repr", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"vector": [3, 4]})", "application/json");
    });
    stub.start();
    HttpRepresentationProvider h({.url = stub.url(), .path = "/repr"}, 2);
    CHECK(h.repr("x") == EmbeddingVector::normalized({3, 4}));
    CHECK_THROWS_AS(HttpRepresentationProvider({.url = stub.url(), .path = "/repr"}, 3).repr("x"), ProviderError);
}
