#include <doctest.h>

#include <atomic>
#include <cmath>

#include "cascade/error.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/router.hpp"
#include "support/synthetic.hpp"

using namespace cascade;
using testing::BlockWorld;

namespace {

RouterPolicy policy(double dropout_p, std::uint64_t seed = 1) {
    RouterPolicy p;
    p.mc.samples = 10;
    p.mc.dropout_p = dropout_p;
    p.mc.seed = seed;
    return p;
}

// Pass i votes for label i % spread, so a query sees `spread` distinct labels.
class ScriptedPredictor final : public StochasticPredictor {
public:
    ScriptedPredictor(const HeadModel& head, std::size_t spread) : head_(head), spread_(spread) {}
    std::vector<double> sample_logits(const EmbeddingVector&, Rng&) const override {
        std::vector<double> logits(head_.classes(), -4.0);
        logits[calls_++ % spread_] = 4.0;
        return logits;
    }
    const HeadModel& head() const override { return head_; }

private:
    const HeadModel& head_;
    std::size_t spread_;
    mutable std::atomic<std::size_t> calls_{0};
};

class ThrowingLlm final : public LlmClient {
public:
    ChatResponse chat(const ChatRequest&) const override { throw LlmTimeout("stub timeout"); }
    std::string model_id() const override { return "throwing"; }
};

class FixedLlm final : public LlmClient {
public:
    explicit FixedLlm(std::string text) : text_(std::move(text)) {}
    ChatResponse chat(const ChatRequest&) const override { return {text_}; }
    std::string model_id() const override { return "fixed"; }

private:
    std::string text_;
};

std::vector<EvalRecord> records(const BlockWorld& w, const std::vector<RoutedPrediction>& ps) {
    std::vector<EvalRecord> out;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        EvalRecord r;
        r.gold = w.gold[i];
        r.predicted = ps[i].labels;
        out.push_back(r);
    }
    return out;
}

} // namespace

TEST_CASE("engineered ties are routed and answered correctly") {
    const auto w = BlockWorld::make(5, 40, 100, 30, 10, 42);
    auto llm = w.oracle_llm();
    const Router router(w.deps(llm), policy(0.1));
    const auto batch = router.batch_route(w.queries);
    CHECK(batch.summary.llm_call_fraction == doctest::Approx(0.30).epsilon(1e-12));
    CHECK(llm->calls() == 30);
    for (std::size_t i = 0; i < w.queries.size(); ++i) {
        const auto& p = batch.predictions[i];
        CAPTURE(i);
        if (w.tie[i]) {
            CHECK(p.uncertainty == Uncertainty::uncertain);
            CHECK(p.source == PredictionSource::llm);
            CHECK(p.distinct_count >= 2);
        } else {
            CHECK(p.uncertainty == Uncertainty::certain);
            CHECK(p.source == PredictionSource::classifier);
            CHECK(p.latency.llm_ms == 0.0);
        }
        CHECK(p.labels == w.gold[i]);
    }
    CHECK(micro_f1(records(w, batch.predictions)) == 1.0);

    std::vector<RoutedPrediction> clf;
    for (const auto& q : w.queries) clf.push_back(router.classify_only(q));
    CHECK(micro_f1(records(w, clf)) < 1.0);
}

TEST_CASE("zero dropout never calls the LLM") {
    const auto w = BlockWorld::make(5, 40, 100, 30, 10, 43);
    auto llm = w.oracle_llm();
    const Router router(w.deps(llm), policy(0.0));
    const auto batch = router.batch_route(w.queries);
    CHECK(batch.summary.llm_call_fraction == 0.0);
    CHECK(llm->calls() == 0);
    for (const auto& p : batch.predictions) CHECK(p.uncertainty == Uncertainty::certain);
}

TEST_CASE("routing is deterministic and batching does not change answers") {
    const auto w = BlockWorld::make(4, 40, 60, 20, 5, 44);
    auto llm = w.oracle_llm();
    auto pol = policy(0.2, 9);
    const Router seq(w.deps(llm), pol);
    pol.batched_mc = true;
    const Router batched(w.deps(llm), pol);
    const auto parallel = seq.batch_route(w.queries);
    for (std::size_t i = 0; i < w.queries.size(); ++i) {
        const auto a = seq.route(w.queries[i]);
        const auto b = batched.route(w.queries[i]);
        CHECK(a.labels == b.labels);
        CHECK(a.distinct_count == b.distinct_count);
        CHECK(a.score_variance == b.score_variance);
        CHECK(a.labels == parallel.predictions[i].labels);
        CHECK(a.distinct_count == parallel.predictions[i].distinct_count);
    }
}

TEST_CASE("latency breakdown adds up") {
    const auto w = BlockWorld::make(5, 40, 50, 15, 5, 45);
    MockLlmConfig slow;
    slow.simulated_latency_ms = 2.0;
    const Router router(w.deps(w.oracle_llm(slow)), policy(0.1));
    const auto batch = router.batch_route(w.queries);
    for (const auto& p : batch.predictions) {
        CHECK(std::abs(p.latency.total_ms - p.latency.classifier_ms - p.latency.llm_ms) < 1.0);
        if (p.source == PredictionSource::llm) CHECK(p.latency.llm_ms >= 2.0);
    }
    CHECK(batch.summary.p50_llm_ms >= 2.0);
    CHECK(batch.summary.p50_total_ms >= batch.summary.p50_classifier_ms);
}

TEST_CASE("unstable queries follow the configured action") {
    const auto w = BlockWorld::make(10, 8, 5, 0, 0, 46);
    auto llm = w.oracle_llm();

    auto deps = w.deps(llm);
    deps.predictor = std::make_shared<ScriptedPredictor>(*w.head, 8);
    auto pol = policy(0.1);
    pol.unstable_action = UnstableAction::reject_oos;
    const Router reject(deps, pol);
    const auto p = reject.route(w.queries[0]);
    CHECK(p.uncertainty == Uncertainty::unstable);
    CHECK(p.distinct_count == 8);
    CHECK(p.labels.empty());
    CHECK(llm->calls() == 0);

    deps.predictor = std::make_shared<ScriptedPredictor>(*w.head, 8);
    pol.unstable_action = UnstableAction::classifier_mean;
    const Router mean(deps, pol);
    // each of labels 0 and 1 wins 2 of 10 passes: mean score 0.2 * s(4) + 0.8 * s(-4) < 0.5
    CHECK(mean.route(w.queries[0]).labels.empty());
    CHECK(llm->calls() == 0);

    deps.predictor = std::make_shared<ScriptedPredictor>(*w.head, 8);
    pol.unstable_action = UnstableAction::route_to_llm;
    const Router ask(deps, pol);
    const auto q = ask.route(w.queries[0]);
    CHECK(q.source == PredictionSource::llm);
    CHECK(q.labels == w.gold[0]);
    CHECK(llm->calls() == 1);

    deps.predictor = std::make_shared<ScriptedPredictor>(*w.head, 5);
    const Router five(deps, pol);
    CHECK(five.route(w.queries[0]).uncertainty == Uncertainty::uncertain);
}

TEST_CASE("LLM failures fall back to the classifier or propagate") {
    const auto w = BlockWorld::make(5, 40, 20, 10, 0, 47);
    auto pol = policy(0.1);
    const Router fallback(w.deps(std::make_shared<ThrowingLlm>()), pol);
    const Router reference(w.deps(w.oracle_llm()), pol);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto p = fallback.route(w.queries[i]);
        CHECK(p.llm_failed);
        CHECK(p.source == PredictionSource::classifier);
        CHECK(p.labels == reference.classify_only(w.queries[i]).labels);
    }
    CHECK(summarize_batch({fallback.route(w.queries[0])}).llm_call_fraction == 1.0);

    pol.fallback_to_classifier = false;
    const Router strict(w.deps(std::make_shared<ThrowingLlm>()), pol);
    CHECK_THROWS_AS(strict.route(w.queries[0]), LlmTimeout);
    CHECK_THROWS_AS(strict.batch_route(w.queries), LlmTimeout);
    CHECK_NOTHROW(strict.route(w.queries[15]));
    CHECK_THROWS_AS(fallback.llm_only(w.queries[15]), LlmTimeout);
}

TEST_CASE("unparseable answers") {
    const auto w = BlockWorld::make(5, 40, 10, 10, 0, 48);
    auto pol = policy(0.1);
    const Router lenient(w.deps(std::make_shared<FixedLlm>("I am not sure.")), pol);
    const auto p = lenient.route(w.queries[0]);
    CHECK(p.parse_failed);
    CHECK(p.labels.empty());
    CHECK(p.source == PredictionSource::llm);

    pol.parse_policy = ParseFailurePolicy::error;
    const Router strict(w.deps(std::make_shared<FixedLlm>("ANSWER: Label-99999")), pol);
    CHECK_THROWS_AS(strict.route(w.queries[0]), ParseFailureError);
}

TEST_CASE("baselines and construction checks") {
    const auto w = BlockWorld::make(5, 40, 40, 10, 10, 49);
    const Router router(w.deps(w.oracle_llm()), policy(0.1));
    for (std::size_t i = 0; i < w.queries.size(); ++i) {
        CHECK(router.llm_only(w.queries[i]).labels == w.gold[i]);
        if (!w.tie[i]) CHECK(router.classify_only(w.queries[i]).labels == w.gold[i]);
    }
    auto deps = w.deps(nullptr);
    deps.embedder = std::make_shared<HashingEmbedder>(16);
    CHECK_THROWS_AS(Router(deps, policy(0.1)), DimensionMismatch);
    CHECK_THROWS_AS(Router(w.deps(nullptr), policy(1.5)), InvalidArgument);
    CHECK_THROWS_AS(Router(w.deps(nullptr), policy(0.1)).route(w.queries[0]), InvalidArgument);
    CHECK_THROWS_AS(unstable_action_from_string("panic"), InvalidArgument);
}
