#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cascade/domain.hpp"
#include "cascade/embedding.hpp"
#include "cascade/llm.hpp"
#include "cascade/prompting.hpp"

namespace cascade {

// Wrapper applied to every text before repr(), both offline and at query time.
struct ReprTemplate {
    std::string id = "utterance-v1";
    std::string text = "Utterance: {{text}}";

    std::string render(std::string_view utterance) const;
};

// Per-intent matrices of unit representations of the training sentences.
// Rows are stored exactly like a VectorStore; the bank additionally pins the
// provider and template that produced them.
struct RepresentationBank {
    VectorStore rows;
    std::string provider_id;
    std::string template_id;

    std::size_t dim() const { return rows.dim(); }
    std::span<const double> matrix(const IntentId& intent) const;

    // <prefix>.vecs, <prefix>.idx.json, <prefix>.bank.json
    void save(const std::filesystem::path& prefix) const;
    static RepresentationBank load(const std::filesystem::path& prefix);

    bool operator==(const RepresentationBank&) const = default;
};

// Renders and represents every train sentence. A sentence with several
// labels lands in each of its intents' banks. If the provider fails, the
// intents finished so far are written to `checkpoint` (when given) and a
// ProviderError reports the progress. A compatible checkpoint passed as
// `resume` is reused intent by intent.
RepresentationBank build_bank(const Dataset& dataset, const RepresentationProvider& provider,
                              const ReprTemplate& tmpl = {},
                              const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                              const RepresentationBank* resume = nullptr);

// Throws FormatError when the bank was built with another provider or template.
void check_bank_compatible(const RepresentationBank& bank, const RepresentationProvider& provider,
                           const ReprTemplate& tmpl);

// ---------------------------------------------------------------------------
// Step 1: in-scope-only LLM prediction
// ---------------------------------------------------------------------------

struct Step1Deps {
    std::shared_ptr<const EmbeddingProvider> embedder; // for ICL retrieval
    std::shared_ptr<const VectorStore> store;
    LabelMask mask;
    std::map<IntentId, std::string> descriptions;
    std::shared_ptr<const LlmClient> llm;
    PromptTemplates templates = PromptTemplates::defaults();
    RetrievalConfig retrieval;
    int max_tokens = 512;
};

struct Step1Result {
    IntentId intent;
    std::vector<IntentId> extra_labels; // further labels in the answer, ignored
    int attempts = 1;
};

// Always an in-scope label. A parse failure (or an OOS answer) is retried
// once; a second failure throws ParseFailureError.
Step1Result step1_predict(const std::string& query, const Step1Deps& deps);

// ---------------------------------------------------------------------------
// Step 2: representation similarity
// ---------------------------------------------------------------------------

enum class Aggregation { mean, max, top_k_mean };
std::string_view to_string(Aggregation a);
Aggregation aggregation_from_string(std::string_view s);

struct TwoStepConfig {
    double theta = 0.0;
    Aggregation aggregation = Aggregation::mean; // max and top_k_mean are experimental
    int top_k = 3;
    ReprTemplate tmpl;

    void validate() const;
};

// Aggregated cosine between the query representation and the intent's bank
// rows, in [-1, 1]. Throws InvalidArgument when the intent has no rows.
double step2_score(const EmbeddingVector& query_repr, const RepresentationBank& bank, const IntentId& intent,
                   Aggregation aggregation = Aggregation::mean, int top_k = 3);

enum class Decision { in_scope, oos };
// score >= theta keeps the step-1 intent.
Decision decide(double score, double theta);

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

struct CalibrationPoint {
    LabelSet gold;       // empty => OOS
    IntentId predicted;  // step-1 intent
    double score = 0.0;  // step-2 score
};

struct CalibrationResult {
    double theta = 0.0;
    double f1 = 0.0;
    double oos_recall = 0.0;
    double inscope_rejected = 0.0; // fraction of in-scope points pushed to OOS
};

// Candidates are the observed scores. Without a constraint: maximize
// micro-F1. With max_inscope_drop: maximize OOS recall among thresholds that
// reject at most that fraction of in-scope points. Ties go to the smaller
// threshold. Throws CalibrationError unless both in-scope and OOS points exist.
CalibrationResult calibrate_threshold(const std::vector<CalibrationPoint>& points,
                                      std::optional<double> max_inscope_drop = std::nullopt);

// ---------------------------------------------------------------------------
// Full detector
// ---------------------------------------------------------------------------

class TwoStepDetector {
public:
    TwoStepDetector(Step1Deps step1, std::shared_ptr<const RepresentationProvider> provider,
                    std::shared_ptr<const RepresentationBank> bank, TwoStepConfig cfg);

    struct Scored {
        Step1Result step1;
        double score = 0.0;
        double llm_ms = 0.0;
        double repr_ms = 0.0;
    };
    // Steps 1 and 2 without the threshold decision.
    Scored score(const std::string& query) const;
    RoutedPrediction predict(const std::string& query) const;

    const TwoStepConfig& config() const { return cfg_; }
    void set_theta(double theta) { cfg_.theta = theta; }

private:
    Step1Deps step1_;
    std::shared_ptr<const RepresentationProvider> provider_;
    std::shared_ptr<const RepresentationBank> bank_;
    TwoStepConfig cfg_;
};

} // namespace cascade
