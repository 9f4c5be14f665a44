#include <doctest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "cascade/app.hpp"
#include "cascade/error.hpp"
#include "support/tmpdir.hpp"

using namespace cascade;
using nlohmann::json;

namespace {

const std::filesystem::path kToy = CASCADE_SOURCE_DIR "/data/toy";

app::RunConfig toy_config(const std::filesystem::path& work) {
    auto j = json::parse(read_file(kToy / "config.json"));
    j["work_dir"] = work.string();
    return app::parse_config(j, kToy);
}

} // namespace

TEST_CASE("config errors are collected, not thrown one at a time") {
    const auto j = json::parse(R"({
        "seed": "seven",
        "dataset": {"intents": "i.json", "utterances": "u.jsonl", "extra": 1},
        "mc": {"samples": 0},
        "llm": {"kind": "carrier-pigeon"},
        "router": {"unstable_action": "panic"},
        "colour": "blue"
    })");
    try {
        app::parse_config(j, ".");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        for (const char* key : {"seed: wrong type", "dataset.extra: unknown key", "mc", "llm.kind",
                                "router.unstable_action", "colour: unknown key"})
            CHECK_MESSAGE(msg.find(key) != std::string::npos, key);
        CHECK(msg.find("6 problems") != std::string::npos);
    }
}

TEST_CASE("config defaults, relative paths and the seed tree") {
    const auto cfg = app::parse_config(json::parse(R"({"seed": 3, "dataset": {"intents": "a.json", "utterances": "b.jsonl"}})"), "/data/x");
    CHECK(cfg.intents_file == std::filesystem::path("/data/x/a.json"));
    CHECK(cfg.mc.samples == 10);
    CHECK(cfg.mc.seed == derive_seed(3, "mc"));
    CHECK(cfg.train.seed == derive_seed(3, "train"));
    CHECK(cfg.augmentation.seed == derive_seed(3, "augment"));
    CHECK(app::mask_seed(cfg) == derive_seed(3, "mask"));
    CHECK(app::parse_config(app::config_to_json(cfg), "/").mc.seed == cfg.mc.seed);
    CHECK_THROWS_AS(app::load_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("environment overrides endpoints") {
    ::setenv("CASCADE_LLM_URL", "http://10.0.0.9:9000", 1);
    ::setenv("CASCADE_LLM_TOKEN", "tok", 1);
    const auto cfg = app::parse_config(json::object(), ".");
    ::unsetenv("CASCADE_LLM_URL");
    ::unsetenv("CASCADE_LLM_TOKEN");
    CHECK(cfg.llm.http.endpoint.url == "http://10.0.0.9:9000");
    CHECK(cfg.llm.http.endpoint.bearer_token == "tok");
    CHECK(app::parse_config(json::object(), ".").llm.http.endpoint.url == "http://127.0.0.1:8000");
}

TEST_CASE("train, evaluate and route on the toy dataset") {
    testing::TempDir tmp;
    auto cfg = toy_config(tmp.path);
    cfg.report.include_timing = false;
    CHECK(app::run_augment(cfg).size() == 6);
    const auto s = app::run_train(cfg);
    CHECK(s.examples == 38);
    CHECK(s.augmented == 6);
    CHECK(s.epoch_loss.back() < s.epoch_loss.front());
    const app::Artifacts art{tmp.path};
    for (const auto& p : {art.augmented(), art.mask()}) CHECK(std::filesystem::exists(p));

    const auto report = app::run_evaluate(cfg, {app::System::classifier, app::System::llm, app::System::hybrid});
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[1].f1 == 1.0); // the mock LLM answers from the gold labels
    CHECK(report.rows[0].llm_call_fraction == 0.0);
    CHECK(report.rows[2].f1 >= report.rows[0].f1);
    CHECK(report.to_json() == app::run_evaluate(cfg, {app::System::classifier, app::System::llm, app::System::hybrid}).to_json());

    const auto preds = app::run_route(cfg, {"what is my balance", "book me a flight to paris"});
    REQUIRE(preds.size() == 2);
    const auto j = app::prediction_json(preds[0], false);
    CHECK(j.contains("labels"));
    CHECK_FALSE(j.contains("latency_ms"));

    double theta = 0;
    const auto two = app::evaluate_records(cfg, app::System::two_step, true, &theta);
    CHECK(two.size() == 14);
    CHECK(std::filesystem::exists(art.bank().string() + ".bank.json"));
}

TEST_CASE("prediction service") {
    testing::TempDir tmp;
    const auto cfg = toy_config(tmp.path);
    app::run_train(cfg);
    app::Server server(cfg);

    auto [status, body] = server.predict(R"({"query": "what is my balance"})");
    CHECK(status == 200);
    CHECK(json::parse(body).contains("labels"));
    CHECK(server.predict("not json").first == 400);
    CHECK(server.predict(R"({"query": "   "})").first == 400);
    CHECK(server.predict(R"({"text": "x"})").first == 400);
    CHECK(json::parse(server.health())["served"] == 1);

    const int port = server.bind("127.0.0.1", 0);
    std::thread t([&] { server.run(); });
    httplib::Client client("127.0.0.1", port);
    for (int i = 0; i < 50 && !client.Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    auto res = client.Post("/v1/predict", R"({"query": "I lost my card"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto reply = json::parse(res->body);
    CHECK(reply["latency_ms"].contains("total"));
    res = client.Post("/admin/reload", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["status"] == "ok");
    server.stop();
    t.join();
}
