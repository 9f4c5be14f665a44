#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

using IntentId = std::string;
using LabelSet = std::set<IntentId>;

struct IntentLabel {
    IntentId id;
    std::string display_name;
    std::optional<std::string> description;

    bool operator==(const IntentLabel&) const = default;
};

enum class Origin { human, augmented, paraphrase };

std::string_view to_string(Origin o);
Origin origin_from_string(std::string_view s);

// An utterance with its gold intents. An empty `gold_labels` set means the
// utterance is out of scope.
struct LabeledUtterance {
    std::string text;
    LabelSet gold_labels;
    Origin origin = Origin::human;

    bool is_oos() const { return gold_labels.empty(); }
    bool operator==(const LabeledUtterance&) const = default;
};

struct Dataset {
    std::vector<IntentLabel> intents;
    std::vector<LabeledUtterance> train;
    std::vector<LabeledUtterance> valid_in_scope;
    std::vector<LabeledUtterance> valid_oos;

    std::vector<IntentId> intent_ids() const;
    const IntentLabel* find_intent(std::string_view id) const;

    bool operator==(const Dataset&) const = default;
};

enum class PredictionSource { classifier, llm, two_step };
enum class Uncertainty { certain, uncertain, unstable };

std::string_view to_string(PredictionSource s);
std::string_view to_string(Uncertainty u);

struct LatencyBreakdown {
    double classifier_ms = 0.0;
    double llm_ms = 0.0;
    double total_ms = 0.0;
};

struct RoutedPrediction {
    LabelSet labels; // empty => OOS
    PredictionSource source = PredictionSource::classifier;
    std::map<IntentId, double> scores;
    Uncertainty uncertainty = Uncertainty::certain;
    std::size_t distinct_count = 1;
    LatencyBreakdown latency;
    // Per-label variance of the MC-dropout scores; diagnostic only.
    std::map<IntentId, double> score_variance;
    bool llm_failed = false;     // LLM errored and the classifier answer was used
    bool parse_failed = false;   // LLM answer line could not be parsed
};

// A single broken invariant. `record` names the offending item, e.g.
// "train[3]" or "intents[0]".
struct Violation {
    std::string record;
    std::string message;
};

std::vector<Violation> validate_dataset(const Dataset& d);

// --- JSONL persistence -------------------------------------------------------
//
// Utterances: one object per line,
//   {"text": str, "labels": [str], "split": "train"|"valid", "origin": str}
// Intents: a JSON array of {"id": str, "display_name": str, "description": str|null}.
//
// Serialization writes train, then in-scope validation, then OOS validation,
// so serialize_utterances(parse_utterances(s)) == s for any serialized s.

std::string serialize_utterances(const Dataset& d);
std::string serialize_intents(const std::vector<IntentLabel>& intents);

// Appends the records of `jsonl` to `d`. Valid records with no labels go to
// valid_oos, the rest to valid_in_scope.
void parse_utterances(std::string_view jsonl, Dataset& d);
std::vector<IntentLabel> parse_intents(std::string_view json);

Dataset load_dataset(const std::filesystem::path& intents_file,
                     const std::filesystem::path& utterances_file);
void save_dataset(const Dataset& d, const std::filesystem::path& intents_file,
                  const std::filesystem::path& utterances_file);

// Stable content hash of the dataset (intents + utterances), hex encoded.
std::string dataset_hash(const Dataset& d);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

} // namespace cascade
