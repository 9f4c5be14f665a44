#include <doctest.h>

#include <algorithm>
#include <regex>
#include <set>

#include "cascade/error.hpp"
#include "cascade/mock_llm.hpp"
#include "cascade/prompting.hpp"
#include "cascade/random.hpp"
#include "support/retrieval_oracle.hpp"
#include "support/tmpdir.hpp"

using namespace cascade;
using testing::brute_force;
using testing::random_store;
using testing::random_unit;

namespace {

LabelMask three_mask() {
    return LabelMask({{"balance", "Label-3"}, {"transfer", "Label-17"}, {"card", "Label-25"}});
}

} // namespace

TEST_CASE("retrieval equals brute force on random stores") {
    Rng rng(31);
    int cells = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t dim = 2 + uniform_index(rng, 10);
        const auto store = random_store(rng, dim, 1 + uniform_index(rng, 5));
        const auto q = random_unit(rng, dim);
        for (int k : kIclCountGrid)
            for (double t : kRetrieverThresholdGrid) {
                const auto got = retrieve_icl(q, store, {k, t});
                const auto want = brute_force(q, store, k, t);
                REQUIRE(got.size() == want.size());
                for (const auto& [intent, list] : want) {
                    const auto& g = got.at(intent);
                    REQUIRE(g.size() == list.size());
                    for (std::size_t i = 0; i < list.size(); ++i) {
                        CHECK(g[i].utterance_id == list[i].utterance_id);
                        CHECK(g[i].text == list[i].text);
                        CHECK(g[i].similarity == doctest::Approx(list[i].similarity).epsilon(1e-12));
                    }
                }
                ++cells;
            }
    }
    CHECK(cells == 200 * 20);
}

TEST_CASE("retrieval breaks similarity ties by utterance id") {
    VectorStore s(2);
    const auto v = EmbeddingVector::normalized({1, 1});
    const std::vector<std::uint32_t> ids{7, 3, 5};
    const std::vector<std::string> texts{"seven", "three", "five"};
    const std::vector<EmbeddingVector> vs{v, v, v};
    s.append_intent("x", ids, texts, vs);
    const auto got = retrieve_icl(v, s, {2, 0.0});
    REQUIRE(got.at("x").size() == 2);
    CHECK(got.at("x")[0].utterance_id == 3);
    CHECK(got.at("x")[1].utterance_id == 5);
    CHECK_THROWS_AS(retrieve_icl(EmbeddingVector::normalized({1, 0, 0}), s, {}), DimensionMismatch);
    CHECK_THROWS_AS((RetrievalConfig{-1, 0.5}.validate()), InvalidArgument);
}

TEST_CASE("label mask is a seeded bijection") {
    std::vector<IntentId> ids;
    for (int i = 0; i < 40; ++i) ids.push_back("intent" + std::to_string(i));
    const auto m = mask_labels(ids, 12);
    CHECK(m == mask_labels(ids, 12));
    CHECK_FALSE(m == mask_labels(ids, 13));
    const std::regex name("Label-([0-9]+)");
    std::set<std::string> names;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& e = m.entries()[i];
        CHECK(e.intent == ids[i]);
        std::smatch sm;
        REQUIRE(std::regex_match(e.masked, sm, name));
        CHECK(std::stoi(sm[1]) < 400);
        names.insert(e.masked);
        CHECK(m.unmasked(e.masked) == e.intent);
        CHECK(m.masked(e.intent) == e.masked);
    }
    CHECK(names.size() == ids.size());
    CHECK_FALSE(m.unmasked("Label-9999").has_value());
    CHECK_THROWS_AS(mask_labels({}, 1), InvalidArgument);
}

TEST_CASE("templates substitute placeholders") {
    CHECK(render_template("{{a}}-{{ b }}", {{"a", "x"}, {"b", "y"}}) == "x-y");
    CHECK_THROWS_AS(render_template("{{a}", {}), FormatError);
    CHECK_THROWS_AS(render_template("{{zzz}}", {}), FormatError);

    testing::TempDir tmp;
    write_file(tmp / "query_block.txt", "Query: {{query}}\nANSWER:");
    write_file(tmp / "VERSION", "custom-2\n");
    const auto t = PromptTemplates::load(tmp.path);
    CHECK(t.version == "custom-2");
    CHECK(t.query_block == "Query: {{query}}\nANSWER:");
    CHECK(t.label_block == PromptTemplates::defaults().label_block);
}

TEST_CASE("rendered prompt carries masked labels, examples and query") {
    const auto mask = three_mask();
    RetrievedExamples r;
    r["balance"] = {{0, "how much money do I have", 0.9}};
    r["card"] = {{4, "lost my card", 0.8}, {5, "card\nstolen", 0.7}};
    const std::map<IntentId, std::string> desc{{"transfer", "Moving money between accounts."}};

    for (auto mode : {PromptMode::with_oos, PromptMode::in_scope_only}) {
        const auto b = build_prompt("what is   my balance", r, mask, desc, mode);
        const auto text = b.render(PromptTemplates::defaults());
        CHECK(text.find("transfer") == std::string::npos);
        const auto view = inspect_prompt(text);
        CHECK(view.query == "what is my balance");
        CHECK(view.labels == std::vector<std::string>{"Label-3", "Label-17", "Label-25"});
        CHECK(view.oos_allowed == (mode == PromptMode::with_oos));
        CHECK_FALSE(view.describe_request);
        CHECK(std::count(view.example_lines.begin(), view.example_lines.end(), "card stolen") == 1);
        CHECK(text.find("Moving money between accounts.") != std::string::npos);
    }
    RetrievedExamples bad;
    bad["unknown"] = {};
    CHECK_THROWS_AS(build_prompt("q", bad, mask, {}, PromptMode::with_oos), InvalidArgument);
}

TEST_CASE("answer parsing variants") {
    const auto mask = three_mask();
    auto labels = [&](const char* s) { return parse_response(s, mask); };

    auto a = labels("Thinking...\nANSWER: Label-17");
    CHECK(a.kind == ParsedAnswer::Kind::labels);
    CHECK(a.labels == std::vector<IntentId>{"transfer"});

    a = labels("**ANSWER:** Label-25, Label-3.");
    CHECK(a.kind == ParsedAnswer::Kind::labels);
    CHECK(a.labels == std::vector<IntentId>{"card", "balance"});

    a = labels("answer: Label-3, Label-3");
    CHECK(a.labels == std::vector<IntentId>{"balance"});

    CHECK(labels("ANSWER: OOS").kind == ParsedAnswer::Kind::oos);
    CHECK(labels("`ANSWER: oos`").kind == ParsedAnswer::Kind::oos);
    CHECK(labels("ANSWER: Label-3\nwait\nANSWER: OOS").kind == ParsedAnswer::Kind::oos);
    CHECK(labels("I think Label-3").kind == ParsedAnswer::Kind::failure);
    CHECK(labels("ANSWER:   ").kind == ParsedAnswer::Kind::failure);
    CHECK(labels("ANSWER: Label-4").kind == ParsedAnswer::Kind::failure);
    CHECK(labels("ANSWER: balance").kind == ParsedAnswer::Kind::failure);

    CHECK(resolve_answer(labels("ANSWER: Label-4"), ParseFailurePolicy::treat_as_oos).empty());
    CHECK_THROWS_AS(resolve_answer(labels("ANSWER: Label-4"), ParseFailurePolicy::error), ParseFailureError);
    CHECK(resolve_answer(labels("ANSWER: Label-3, Label-17"), ParseFailurePolicy::error) ==
          LabelSet{"balance", "transfer"});
}

TEST_CASE("descriptions are generated once per dataset version") {
    Dataset d;
    d.intents = {{"balance", "Balance", std::nullopt}, {"card", "Card", std::nullopt}, {"empty", "E", std::nullopt}};
    d.train = {{"how much money do I have", {"balance"}}, {"lost my card", {"card"}}};
    auto llm = std::make_shared<MockLlm>(dataset_oracle(d), mask_labels(d.intent_ids(), 1));
    DescriptionCache cache;
    generate_all_descriptions(d, *llm, cache);
    CHECK(llm->calls() == 2);
    CHECK(cache.size() == 2);
    generate_all_descriptions(d, *llm, cache);
    CHECK(llm->calls() == 2);
    const auto text = cache.get("card", dataset_hash(d));
    REQUIRE(text);
    CHECK(text->find("lost my card") != std::string::npos);

    testing::TempDir tmp;
    cache.save(tmp / "descriptions.json");
    const auto back = DescriptionCache::load(tmp / "descriptions.json");
    CHECK(back.texts() == cache.texts());

    auto changed = d;
    changed.train.push_back({"card got stolen", {"card"}});
    generate_all_descriptions(changed, *llm, cache);
    CHECK(llm->calls() == 4);
    CHECK_FALSE(cache.get("card", dataset_hash(d)));
    CHECK_THROWS_AS(generate_description(d.intents[2], {}, *llm, cache, "h"), InvalidArgument);
}
