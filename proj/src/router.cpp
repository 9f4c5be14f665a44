#include "cascade/router.hpp"

#include <chrono>
#include <exception>

#include "cascade/error.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/random.hpp"

namespace cascade {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

} // namespace

std::string_view to_string(UnstableAction a) {
    switch (a) {
    case UnstableAction::route_to_llm: return "route_to_llm";
    case UnstableAction::classifier_mean: return "classifier_mean";
    case UnstableAction::reject_oos: return "reject_oos";
    }
    return "?";
}

UnstableAction unstable_action_from_string(std::string_view s) {
    if (s == "route_to_llm") return UnstableAction::route_to_llm;
    if (s == "classifier_mean") return UnstableAction::classifier_mean;
    if (s == "reject_oos") return UnstableAction::reject_oos;
    throw InvalidArgument("unknown unstable_action '" + std::string(s) + "'");
}

void RouterPolicy::validate() const {
    mc.validate();
    retrieval.validate();
    if (max_tokens < 1) throw InvalidArgument("router.max_tokens must be >= 1");
}

Router::Router(RouterDeps deps, RouterPolicy policy) : deps_(std::move(deps)), policy_(std::move(policy)) {
    policy_.validate();
    if (!deps_.embedder) throw InvalidArgument("router: embedder missing");
    if (!deps_.head) throw InvalidArgument("router: head model missing");
    if (deps_.embedder->dim() != deps_.head->dim)
        throw DimensionMismatch("router: embedder dim " + std::to_string(deps_.embedder->dim()) + " != head dim " +
                                std::to_string(deps_.head->dim));
    if (deps_.store && deps_.store->dim() != deps_.head->dim)
        throw DimensionMismatch("router: vector store dim differs from head dim");
    predictor_ = deps_.predictor ? deps_.predictor
                                 : std::make_shared<FeatureDropoutPredictor>(*deps_.head, policy_.mc.dropout_p);
}

std::map<IntentId, double> Router::score_map(const std::vector<double>& scores) const {
    std::map<IntentId, double> out;
    for (std::size_t c = 0; c < scores.size(); ++c) out[deps_.head->label_order[c]] = scores[c];
    return out;
}

Router::LlmOutcome Router::ask_llm(const std::string& query, const EmbeddingVector& v, bool allow_fallback) const {
    if (!deps_.llm) throw InvalidArgument("router: no LLM client configured");
    if (!deps_.store) throw InvalidArgument("router: no vector store configured");
    LlmOutcome out;
    try {
        const auto retrieved = retrieve_icl(v, *deps_.store, policy_.retrieval);
        const auto bundle =
            build_prompt(query, retrieved, deps_.mask, deps_.descriptions, policy_.prompt_mode, deps_.templates);
        ChatRequest req;
        req.prompt = bundle.render(deps_.templates);
        req.max_tokens = policy_.max_tokens;
        const auto resp = deps_.llm->chat(req);
        const auto parsed = parse_response(resp.text, deps_.mask);
        out.parse_failed = parsed.kind == ParsedAnswer::Kind::failure;
        out.labels = resolve_answer(parsed, policy_.parse_policy);
    } catch (const LlmError&) {
        if (!allow_fallback) throw;
        out.failed = true;
    }
    return out;
}

RoutedPrediction Router::route(const std::string& query) const {
    const auto start = Clock::now();
    RoutedPrediction out;

    const auto v = deps_.embedder->embed(query);
    const auto det = predict(*deps_.head, v);
    Rng rng(derive_seed(policy_.mc.seed, std::string_view(query)));
    const auto* dropout = dynamic_cast<const FeatureDropoutPredictor*>(predictor_.get());
    const McResult mc = policy_.batched_mc && dropout ? mc_run_batched(*dropout, v, policy_.mc.samples, rng)
                                                      : mc_run(*predictor_, v, policy_.mc.samples, rng);
    const auto verdict = uncertainty(mc.argmax, policy_.mc.samples);
    std::vector<double> mean, variance;
    score_moments(mc, mean, variance);
    out.latency.classifier_ms = ms_since(start);

    out.scores = score_map(det.scores);
    out.score_variance = score_map(variance);
    out.uncertainty = verdict.verdict;
    out.distinct_count = verdict.distinct_count;
    out.labels = det.labels;
    out.source = PredictionSource::classifier;

    bool to_llm = verdict.verdict == Uncertainty::uncertain;
    if (verdict.verdict == Uncertainty::unstable) {
        switch (policy_.unstable_action) {
        case UnstableAction::route_to_llm: to_llm = true; break;
        case UnstableAction::classifier_mean:
            out.labels.clear();
            for (std::size_t c = 0; c < mean.size(); ++c)
                if (mean[c] >= deps_.head->threshold) out.labels.insert(deps_.head->label_order[c]);
            break;
        case UnstableAction::reject_oos: out.labels.clear(); break;
        }
    }

    if (to_llm) {
        const auto llm_start = Clock::now();
        const auto answer = ask_llm(query, v, policy_.fallback_to_classifier);
        out.latency.llm_ms = ms_since(llm_start);
        out.parse_failed = answer.parse_failed;
        if (answer.failed) {
            out.llm_failed = true;
        } else {
            out.labels = answer.labels;
            out.source = PredictionSource::llm;
        }
    }
    out.latency.total_ms = ms_since(start);
    return out;
}

RoutedPrediction Router::classify_only(const std::string& query) const {
    const auto start = Clock::now();
    RoutedPrediction out;
    const auto det = predict(*deps_.head, deps_.embedder->embed(query));
    out.latency.classifier_ms = ms_since(start);
    out.labels = det.labels;
    out.scores = score_map(det.scores);
    out.latency.total_ms = ms_since(start);
    return out;
}

RoutedPrediction Router::llm_only(const std::string& query) const {
    const auto start = Clock::now();
    RoutedPrediction out;
    out.source = PredictionSource::llm;
    const auto answer = ask_llm(query, deps_.embedder->embed(query), false);
    out.labels = answer.labels;
    out.parse_failed = answer.parse_failed;
    out.latency.llm_ms = ms_since(start);
    out.latency.total_ms = out.latency.llm_ms;
    return out;
}

BatchSummary summarize_batch(const std::vector<RoutedPrediction>& predictions) {
    BatchSummary s;
    if (predictions.empty()) return s;
    std::vector<double> total, clf, llm;
    std::size_t routed = 0;
    for (const auto& p : predictions) {
        total.push_back(p.latency.total_ms);
        clf.push_back(p.latency.classifier_ms);
        if (p.source == PredictionSource::llm || p.llm_failed) {
            ++routed;
            llm.push_back(p.latency.llm_ms);
        }
    }
    s.llm_call_fraction = static_cast<double>(routed) / static_cast<double>(predictions.size());
    s.p50_total_ms = latency_stats(total).p50;
    s.p50_classifier_ms = latency_stats(clf).p50;
    s.p50_llm_ms = latency_stats(llm).p50;
    return s;
}

BatchResult Router::batch_route(const std::vector<std::string>& queries) const {
    BatchResult r;
    r.predictions.resize(queries.size());
    std::exception_ptr error;
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            r.predictions[static_cast<std::size_t>(i)] = route(queries[static_cast<std::size_t>(i)]);
        } catch (...) {
#pragma omp critical(cascade_router_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    r.summary = summarize_batch(r.predictions);
    return r;
}

} // namespace cascade
