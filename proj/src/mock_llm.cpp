#include "cascade/mock_llm.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "cascade/error.hpp"
#include "cascade/random.hpp"
#include "cascade/text.hpp"

namespace cascade {

MockLlm::MockLlm(std::map<std::string, LabelSet> oracle, LabelMask mask, MockLlmConfig cfg,
                 std::shared_ptr<RequestLog> log)
    : oracle_(std::move(oracle)), mask_(std::move(mask)), cfg_(std::move(cfg)), log_(std::move(log)) {}

std::string MockLlm::answer_for(const PromptView& view) const {
    if (view.labels.empty()) return std::string(kOosToken);
    Rng rng(derive_seed(cfg_.seed, fnv1a64(view.query)));

    LabelSet gold;
    if (auto it = oracle_.find(view.query); it != oracle_.end()) gold = it->second;

    std::vector<std::string> gold_masked;
    for (const auto& g : gold)
        if (auto m = mask_.masked(g)) gold_masked.push_back(*m);

    auto any_label = [&] { return view.labels[uniform_index(rng, view.labels.size())]; };

    if (gold_masked.empty()) {
        if (view.oos_allowed) return bernoulli(rng, cfg_.oos_miss_rate) ? any_label() : std::string(kOosToken);
        if (nearest_) {
            if (auto m = mask_.masked(nearest_(view.query))) return *m;
        }
        return view.labels[fnv1a64(view.query) % view.labels.size()];
    }

    if (bernoulli(rng, cfg_.error_rate)) {
        std::vector<std::string> wrong;
        for (const auto& l : view.labels)
            if (std::find(gold_masked.begin(), gold_masked.end(), l) == gold_masked.end()) wrong.push_back(l);
        if (wrong.empty()) return view.oos_allowed ? std::string(kOosToken) : view.labels.front();
        return wrong[uniform_index(rng, wrong.size())];
    }

    std::string out;
    for (const auto& g : gold_masked) out += (out.empty() ? "" : ", ") + g;
    return out;
}

ChatResponse MockLlm::chat(const ChatRequest& req) const {
    if (text::trim(req.prompt).empty()) throw InvalidArgument("chat: empty prompt");
    const auto start = std::chrono::steady_clock::now();
    ++calls_;
    if (cfg_.simulated_latency_ms > 0.0)
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cfg_.simulated_latency_ms));

    const auto view = inspect_prompt(req.prompt);
    ChatResponse resp;
    resp.request_id = next_request_id();
    if (view.describe_request) {
        std::string joined;
        for (const auto& e : view.example_lines) joined += (joined.empty() ? "" : "; ") + e;
        resp.text = "The user is asking about requests such as: " + joined + ".";
    } else {
        resp.text = "The query is compared with each of the " + std::to_string(view.labels.size()) +
                    " labels and their examples.\n" + std::string(kAnswerPrefix) + " " + answer_for(view);
    }
    resp.prompt_tokens = static_cast<int>(text::tokenize(req.prompt).size());
    resp.completion_tokens = static_cast<int>(text::tokenize(resp.text).size());
    resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (log_) log_->record(resp.request_id, cfg_.model, prompt_hash(req.prompt), resp.latency_ms, "ok");
    return resp;
}

std::map<std::string, LabelSet> dataset_oracle(const Dataset& d) {
    std::map<std::string, LabelSet> oracle;
    for (const auto* list : {&d.train, &d.valid_in_scope, &d.valid_oos})
        for (const auto& u : *list) oracle[text::collapse_whitespace(u.text)] = u.gold_labels;
    return oracle;
}

} // namespace cascade
