#include <doctest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "cascade/embedding.hpp"
#include "cascade/error.hpp"
#include "support/http_stub.hpp"
#include "support/tmpdir.hpp"

using namespace cascade;

TEST_CASE("cosine of known vectors") {
    const auto a = EmbeddingVector::normalized({1, 0});
    const auto b = EmbeddingVector::normalized({0.6, 0.8});
    CHECK(cosine(a, b) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(cosine(a, a) == doctest::Approx(1.0));
    CHECK(cosine(a, -a) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine(a, EmbeddingVector::normalized({1, 0, 0})), DimensionMismatch);
}

TEST_CASE("normalization rejects degenerate input") {
    CHECK(EmbeddingVector::normalized({3, 4}).norm() == doctest::Approx(1.0));
    CHECK_THROWS_AS(EmbeddingVector::normalized({}), InvalidArgument);
    CHECK_THROWS_AS(EmbeddingVector::normalized({1.0, NAN}), InvalidArgument);
    CHECK_THROWS_AS(EmbeddingVector::from_unit({1.0, 1.0}), InvalidArgument);
}

TEST_CASE("hashing embedder is deterministic and unit-norm") {
    HashingEmbedder e(128);
    const auto a = e.embed("Check my Balance");
    CHECK(a.dim() == 128);
    CHECK(a.norm() == doctest::Approx(1.0));
    CHECK(a == e.embed("check   my balance"));
    CHECK(cosine(a, e.embed("check my balance please")) > cosine(a, e.embed("book a flight to rome")));
    CHECK_THROWS_AS(e.embed("   "), InvalidArgument);

    const std::vector<std::string> texts{"one", "two words", "three little words"};
    const auto batch = e.embed_batch(texts);
    for (std::size_t i = 0; i < texts.size(); ++i) CHECK(batch[i] == e.embed(texts[i]));
    CHECK(HashingEmbedder(128, 1).embed("one") != e.embed("one"));
}

TEST_CASE("precomputed embedder falls back or fails") {
    PrecomputedEmbedder p(2, "fixed");
    p.add("x", EmbeddingVector::normalized({1, 0}));
    CHECK(p.embed("x")[0] == 1.0);
    CHECK_THROWS_AS(p.embed("y"), ProviderError);
    CHECK_THROWS_AS(p.add("z", EmbeddingVector::normalized({1, 0, 0})), DimensionMismatch);
    auto fb = std::make_shared<HashingEmbedder>(2);
    PrecomputedEmbedder q(2, "fixed", fb);
    CHECK(q.embed("y") == fb->embed("y"));
}

TEST_CASE("store keeps multi-label utterances under every intent") {
    Dataset d;
    d.intents = {{"a", "A", std::nullopt}, {"b", "B", std::nullopt}, {"c", "C", std::nullopt}};
    d.train = {{"only a", {"a"}}, {"a and b", {"a", "b"}}, {"neg", {}, Origin::augmented}, {"only b", {"b"}}};
    HashingEmbedder e(32);
    const auto s = build_store(e, d);
    CHECK(s.rows() == 4);
    CHECK(s.intents() == std::vector<IntentId>{"a", "b", "c"});
    CHECK(s.range("a").size() == 2);
    CHECK(s.range("b").size() == 2);
    CHECK(s.range("c").size() == 0);
    CHECK(s.utterance_id(s.range("b").begin) == 1);
    CHECK(s.text(s.range("b").begin) == "a and b");
    const auto v = e.embed("a and b");
    for (std::size_t i = 0; i < 32; ++i) CHECK(s.row(s.range("b").begin)[i] == v[i]);
}

TEST_CASE("store round-trips through disk") {
    testing::TempDir tmp;
    Dataset d;
    d.intents = {{"a", "A", std::nullopt}, {"b", "B", std::nullopt}};
    d.train = {{"alpha one", {"a"}}, {"beta one", {"b"}}, {"beta two", {"b"}}};
    const auto s = build_store(HashingEmbedder(16), d);
    s.save(tmp / "store");
    CHECK(VectorStore::load(tmp / "store") == s);
    write_file(tmp / "broken.idx.json", "{");
    CHECK_THROWS_AS(VectorStore::load(tmp / "broken"), FormatError);
    CHECK_THROWS(VectorStore::load(tmp / "missing"));
}

TEST_CASE("remote embedder speaks the JSON protocol") {
    testing::HttpStub stub;
    stub.server.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["vectors"] = nlohmann::json::array();
        for (const auto& t : body["texts"]) out["vectors"].push_back({double(t.get<std::string>().size()), 1.0});
        res.set_content(out.dump(), "application/json");
    });
    stub.server.Post("/short", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"vectors": [[1, 2, 3]]})", "application/json");
    });
    stub.server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content(R"({"vectors": [[1, 0]]})", "application/json");
    });
    stub.start();

    HttpEndpoint ep{.url = stub.url(), .path = "/embed"};
    RemoteEmbedder r(ep, 2);
    const std::vector<std::string> texts{"abc", "x"};
    const auto vs = r.embed_batch(texts);
    REQUIRE(vs.size() == 2);
    CHECK(vs[0] == EmbeddingVector::normalized({3, 1}));
    CHECK(vs[1] == EmbeddingVector::normalized({1, 1}));
    CHECK_THROWS_AS(r.embed(""), InvalidArgument);

    ep.path = "/short";
    CHECK_THROWS_AS(RemoteEmbedder(ep, 2).embed("abc"), ProviderError);

    ep.path = "/slow";
    ep.timeout = std::chrono::milliseconds(100);
    ep.retries = 0;
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(RemoteEmbedder(ep, 2).embed("abc"), ProviderError);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(550));

    HttpEndpoint dead{.url = "http://127.0.0.1:1", .path = "/embed", .timeout = std::chrono::milliseconds(200),
                      .retries = 0};
    CHECK_THROWS_AS(RemoteEmbedder(dead, 2).embed("abc"), ProviderError);
}
