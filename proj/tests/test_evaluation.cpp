#include <doctest.h>

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/evaluation.hpp"
#include "support/oracles.hpp"

using namespace cascade;
using testing::auc_oracle;

namespace {

EvalRecord rec(LabelSet gold, LabelSet pred, std::optional<double> score = std::nullopt) {
    EvalRecord r;
    r.gold = std::move(gold);
    r.predicted = std::move(pred);
    r.oos_score = score;
    return r;
}

} // namespace

TEST_CASE("micro F1 by hand") {
    // pairs: (a|a) tp; (b|a) fp a, fn b; (OOS|OOS) tp; (OOS|c) fp c, fn OOS
    const std::vector<EvalRecord> rs{rec({"a"}, {"a"}), rec({"b"}, {"a"}), rec({}, {}), rec({}, {"c"})};
    CHECK(micro_f1(rs) == doctest::Approx(4.0 / 8.0));
    CHECK(f1_score(rs, F1Mode::micro) == micro_f1(rs));
    // per class: a 2/3, b 0, c 0, OOS 2/3
    CHECK(f1_score(rs, F1Mode::macro) == doctest::Approx((2.0 / 3 + 2.0 / 3) / 4));
    CHECK_THROWS_AS(micro_f1({}), InvalidArgument);
}

TEST_CASE("F1 matches the oracle on random records") {
    Rng rng(77);
    for (int i = 0; i < 300; ++i) {
        const auto rs = testing::random_records(rng, 1 + uniform_index(rng, 60), 1 + uniform_index(rng, 6), false);
        CHECK(micro_f1(rs) == doctest::Approx(testing::micro_f1_oracle(rs)).epsilon(1e-12));
        CHECK(f1_score(rs, F1Mode::macro) == doctest::Approx(testing::macro_f1_oracle(rs)).epsilon(1e-12));
    }
}

TEST_CASE("OOS recall and in-scope accuracy") {
    const std::vector<EvalRecord> rs{rec({"a"}, {"a", "b"}), rec({"a", "c"}, {"c"}), rec({"b"}, {}),
                                     rec({}, {}), rec({}, {"a"})};
    CHECK(oos_recall(rs) == 0.5);
    CHECK(inscope_accuracy(rs, InScopeMatch::any) == doctest::Approx(2.0 / 3));
    CHECK(inscope_accuracy(rs, InScopeMatch::exact) == 0.0);
    CHECK_THROWS_AS(oos_recall({rec({"a"}, {"a"})}), InvalidArgument);
}

TEST_CASE("AUC equals pair counting") {
    CHECK(auc_roc({1.0, 0.2}, {0.2, 0.1}) == doctest::Approx(auc_oracle({1.0, 0.2}, {0.2, 0.1})));
    CHECK(auc_roc({0.5}, {0.5}) == 0.5);
    CHECK(auc_roc({1, 1}, {0, 0}) == 1.0);
    CHECK_THROWS_AS(auc_roc({}, {0.1}), InvalidArgument);

    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> pos(1 + uniform_index(rng, 50)), neg(1 + uniform_index(rng, 50));
        for (auto& x : pos) x = double(uniform_index(rng, 10));
        for (auto& x : neg) x = double(uniform_index(rng, 10)) - 2;
        CHECK(auc_roc(pos, neg) == doctest::Approx(auc_oracle(pos, neg)).epsilon(1e-15));
    }

    std::vector<EvalRecord> rs{rec({"a"}, {"a"}, 0.9), rec({}, {}, 0.3), rec({"b"}, {}, 0.2)};
    CHECK(auc_roc(rs) == 0.5);
    rs.push_back(rec({}, {}));
    CHECK_THROWS_AS(auc_roc(rs), InvalidArgument);
}

TEST_CASE("threshold sweep matches exhaustive search") {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
        const std::size_t classes = 1 + uniform_index(rng, 5);
        auto rs = testing::random_records(rng, 1 + uniform_index(rng, 40), classes, true);
        std::vector<IntentId> labels;
        for (std::size_t c = 0; c < classes; ++c) labels.push_back("c" + std::to_string(c));
        const auto got = best_f1_sweep(rs, labels);
        const auto want = testing::sweep_oracle(rs, labels, {0.0, 1.0});
        CHECK(got.f1 == want.f1);
        CHECK(got.threshold == want.threshold);
        const auto re = rethreshold(rs, got.threshold);
        CHECK(micro_f1(re) == got.f1);
    }
}

TEST_CASE("latency helpers") {
    const auto s = latency_stats({4, 1, 3, 2});
    CHECK(s.p50 == 2);
    CHECK(s.mean == 2.5);
    CHECK(s.count == 4);
    CHECK(latency_stats({}).count == 0);
    CHECK(latency_fraction(1.005, 2.345) == doctest::Approx(0.428571).epsilon(1e-5));
    CHECK_THROWS_AS(latency_fraction(1, 0), InvalidArgument);
    CHECK(delta(0.696, 0.736) == doctest::Approx(-0.040));
}

TEST_CASE("summaries and reports") {
    std::vector<EvalRecord> rs{rec({"a"}, {"a"}, 0.9), rec({}, {}, 0.1)};
    rs[0].label_scores = {{"a", 0.9}};
    rs[1].label_scores = {{"a", 0.1}};
    rs[0].latency = {1, 2, 3};
    rs[0].routed_to_llm = true;
    auto row = summarize("toy", "hybrid", rs);
    CHECK(row.f1 == 1.0);
    CHECK(row.oos_recall == 1.0);
    CHECK(row.auc_roc == 1.0);
    CHECK(row.llm_call_fraction == 0.5);
    CHECK(row.best_threshold.has_value());
    CHECK(row.total_latency.has_value());

    Report rep;
    rep.rows.push_back(row);
    auto other = row;
    other.dataset = "other";
    other.f1 = 0.5;
    rep.rows.push_back(other);
    CHECK(rep.avg_score("hybrid") == 0.75);
    CHECK(rep.avg_score("hybrid", "other") == 1.0);
    const auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j["rows"].size() == 2);
    CHECK(j["averages"]["hybrid"]["avg_score"] == 0.75);
    CHECK(rep.to_csv().find("1.000000") != std::string::npos);

    ReportOptions quiet;
    quiet.include_timing = false;
    rep.options = quiet;
    rep.rows = {summarize("toy", "hybrid", rs, quiet)};
    CHECK(rep.to_json().find("latency") == std::string::npos);
}
