#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade/domain.hpp"

namespace cascade {

// Pseudo-label used when scoring OOS as its own class. Exists only here.
inline constexpr const char* kOosPseudoLabel = "__OOS__";

struct EvalRecord {
    LabelSet gold;       // empty => OOS
    LabelSet predicted;  // empty => OOS
    // Continuous in-scope score: the max label score for classifiers, or
    // 1/0 for black-box systems (1 when an in-scope label was predicted).
    std::optional<double> oos_score;
    // Per-label scores for threshold sweeps (classifier paths only).
    std::map<IntentId, double> label_scores;
    LatencyBreakdown latency;
    bool routed_to_llm = false;
};

enum class F1Mode { micro, macro };
std::string_view to_string(F1Mode m);
F1Mode f1_mode_from_string(std::string_view s);

// OOS counts as one extra class. micro: 2TP / (2TP + FP + FN) over
// (record, label) pairs. macro: unweighted mean of per-class F1 over classes
// seen in gold or predictions.
double micro_f1(const std::vector<EvalRecord>& records);
double f1_score(const std::vector<EvalRecord>& records, F1Mode mode);

// Fraction of gold-OOS records predicted OOS. Throws InvalidArgument when
// there is no gold-OOS record.
double oos_recall(const std::vector<EvalRecord>& records);

enum class InScopeMatch { any, exact };

// Over gold in-scope records: any-match credits predicted ∩ gold ≠ ∅,
// exact-match requires predicted == gold.
double inscope_accuracy(const std::vector<EvalRecord>& records, InScopeMatch match = InScopeMatch::any);

// P(score of a random in-scope record > score of a random OOS record), ties
// counted as 1/2. Throws InvalidArgument unless both classes are present
// and every record carries oos_score.
double auc_roc(const std::vector<EvalRecord>& records);
double auc_roc(const std::vector<double>& inscope_scores, const std::vector<double>& oos_scores);

struct SweepResult {
    double threshold = 0.5;
    double f1 = 0.0;
    double oos_recall = 0.0; // NaN when the records hold no OOS gold
};

// Evaluates micro-F1 with predictions re-thresholded at every distinct
// observed label score plus the grid endpoints; returns the best, ties going
// to the larger threshold.
SweepResult best_f1_sweep(const std::vector<EvalRecord>& records, const std::vector<IntentId>& labels,
                          const std::vector<double>& grid = {0.0, 1.0});

// Same records re-thresholded at tau.
std::vector<EvalRecord> rethreshold(const std::vector<EvalRecord>& records, double tau);

struct LatencyStats {
    double p50 = 0.0; // lower median
    double mean = 0.0;
    std::size_t count = 0;
};
LatencyStats latency_stats(std::vector<double> values);

// hybrid mean / LLM-only mean. Throws InvalidArgument on a zero denominator.
double latency_fraction(double hybrid_mean, double llm_only_mean);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string dataset;
    std::string system;
    std::size_t records = 0;
    double f1 = 0.0;
    std::optional<double> oos_recall;
    std::optional<double> inscope_accuracy;
    std::optional<double> auc_roc;
    std::optional<double> best_threshold;
    std::optional<double> llm_call_fraction;
    std::optional<LatencyStats> total_latency;
    std::optional<LatencyStats> classifier_latency;
    std::optional<LatencyStats> llm_latency;
};

struct ReportOptions {
    F1Mode f1_mode = F1Mode::micro;
    InScopeMatch inscope_match = InScopeMatch::any;
    bool include_timing = true;
};

ReportRow summarize(const std::string& dataset, const std::string& system, const std::vector<EvalRecord>& records,
                    const ReportOptions& opts = {});

struct Report {
    std::vector<ReportRow> rows;
    ReportOptions options;

    // Unweighted mean F1 over rows of `system`, optionally skipping one dataset.
    double avg_score(const std::string& system, const std::optional<std::string>& exclude = std::nullopt) const;

    std::string to_json() const;
    std::string to_csv() const;
};

// Difference column of a comparison table: a - b.
double delta(double a, double b);

} // namespace cascade
