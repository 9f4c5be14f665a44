#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cascade/classifier.hpp"
#include "cascade/domain.hpp"
#include "cascade/embedding.hpp"
#include "cascade/llm.hpp"
#include "cascade/prompting.hpp"

namespace cascade {

// What to do when the MC samples disagree on more than ceil(M/2) labels.
enum class UnstableAction { route_to_llm, classifier_mean, reject_oos };
std::string_view to_string(UnstableAction a);
UnstableAction unstable_action_from_string(std::string_view s);

struct RouterPolicy {
    McConfig mc;
    UnstableAction unstable_action = UnstableAction::route_to_llm;
    RetrievalConfig retrieval;
    PromptMode prompt_mode = PromptMode::with_oos;
    ParseFailurePolicy parse_policy = ParseFailurePolicy::treat_as_oos;
    bool fallback_to_classifier = true; // on LLM errors; otherwise rethrow
    bool batched_mc = false;            // one batched pass instead of M sequential ones
    int max_tokens = 512;

    void validate() const;
};

// Everything route() reads. Shared and immutable once built.
struct RouterDeps {
    std::shared_ptr<const EmbeddingProvider> embedder;
    std::shared_ptr<const HeadModel> head;
    std::shared_ptr<const VectorStore> store;
    LabelMask mask;
    std::map<IntentId, std::string> descriptions;
    std::shared_ptr<const LlmClient> llm;
    PromptTemplates templates = PromptTemplates::defaults();
    // Optional replacement for feature dropout on the head.
    std::shared_ptr<const StochasticPredictor> predictor;
};

struct BatchSummary {
    double llm_call_fraction = 0.0;
    double p50_total_ms = 0.0;
    double p50_classifier_ms = 0.0;
    double p50_llm_ms = 0.0; // over routed queries only
};

struct BatchResult {
    std::vector<RoutedPrediction> predictions;
    BatchSummary summary;
};

class Router {
public:
    Router(RouterDeps deps, RouterPolicy policy);

    // Hybrid path: classifier with MC sampling, LLM only when uncertain.
    RoutedPrediction route(const std::string& query) const;
    // Queries are routed concurrently; output order follows input order.
    BatchResult batch_route(const std::vector<std::string>& queries) const;

    // Baselines sharing the same dependencies.
    RoutedPrediction classify_only(const std::string& query) const;
    RoutedPrediction llm_only(const std::string& query) const;

    const RouterPolicy& policy() const { return policy_; }
    const RouterDeps& deps() const { return deps_; }

private:
    struct LlmOutcome {
        LabelSet labels;
        bool failed = false;
        bool parse_failed = false;
    };
    LlmOutcome ask_llm(const std::string& query, const EmbeddingVector& v, bool allow_fallback) const;
    std::map<IntentId, double> score_map(const std::vector<double>& scores) const;

    RouterDeps deps_;
    RouterPolicy policy_;
    std::shared_ptr<const StochasticPredictor> predictor_;
};

BatchSummary summarize_batch(const std::vector<RoutedPrediction>& predictions);

} // namespace cascade
