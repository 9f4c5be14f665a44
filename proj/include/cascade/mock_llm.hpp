#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "cascade/llm.hpp"
#include "cascade/prompting.hpp"

namespace cascade {

struct MockLlmConfig {
    double error_rate = 0.0;     // chance of a uniformly wrong in-scope answer
    double oos_miss_rate = 0.0;  // chance an OOS query gets an in-scope answer
    std::uint64_t seed = 0;
    double simulated_latency_ms = 0.0;
    std::string model = "mock-llm";
};

// Deterministic LLM stand-in. It reads the query and the offered labels out
// of the rendered prompt and answers from an oracle of gold labels.
// With error_rate = 0 it behaves as a perfect classifier that always ends
// with a valid ANSWER line. Randomness is keyed on (seed, query) so answers
// do not depend on call order.
class MockLlm final : public LlmClient {
public:
    using NearestFn = std::function<IntentId(const std::string& query)>;

    MockLlm(std::map<std::string, LabelSet> oracle, LabelMask mask, MockLlmConfig cfg = {},
            std::shared_ptr<RequestLog> log = nullptr);

    // In in-scope-only prompts an OOS query still needs a label; `nearest`
    // picks it. Without one, a label is chosen by hashing the query.
    void set_nearest(NearestFn fn) { nearest_ = std::move(fn); }

    ChatResponse chat(const ChatRequest& req) const override;
    std::string model_id() const override { return cfg_.model; }

    std::size_t calls() const { return calls_.load(); }

private:
    std::string answer_for(const PromptView& view) const;

    std::map<std::string, LabelSet> oracle_;
    LabelMask mask_;
    MockLlmConfig cfg_;
    std::shared_ptr<RequestLog> log_;
    NearestFn nearest_;
    mutable std::atomic<std::size_t> calls_{0};
};

// Oracle over every utterance of a dataset (train and validation).
std::map<std::string, LabelSet> dataset_oracle(const Dataset& d);

} // namespace cascade
