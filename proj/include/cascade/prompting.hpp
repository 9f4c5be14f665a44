#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/domain.hpp"
#include "cascade/embedding.hpp"
#include "cascade/llm.hpp"

namespace cascade {

// ---------------------------------------------------------------------------
// ICL example retrieval
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 5> kIclCountGrid = {0, 1, 5, 10, 20};
inline constexpr std::array<double, 4> kRetrieverThresholdGrid = {0.00001, 0.3, 0.5, 0.7};

struct RetrievalConfig {
    int k = 5;        // examples per intent
    double t = 1e-5;  // keep only similarity > t

    void validate() const;
};

struct RetrievedExample {
    std::uint32_t utterance_id = 0;
    std::string text;
    double similarity = 0.0;

    bool operator==(const RetrievedExample&) const = default;
};

using RetrievedExamples = std::map<IntentId, std::vector<RetrievedExample>>;

// Per intent: the k most similar stored utterances with similarity > t,
// best first, ties broken by utterance id ascending. Every store intent
// has an entry, possibly empty.
RetrievedExamples retrieve_icl(const EmbeddingVector& query, const VectorStore& store, const RetrievalConfig& cfg);

// ---------------------------------------------------------------------------
// Label masking
// ---------------------------------------------------------------------------

// Bijection between intent ids and opaque names "Label-<n>", n drawn
// without collision from [0, 10 * |intents|). Entry order is the label order
// used in every prompt.
class LabelMask {
public:
    struct Entry {
        IntentId intent;
        std::string masked;
        bool operator==(const Entry&) const = default;
    };

    LabelMask() = default;
    explicit LabelMask(std::vector<Entry> entries);

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::optional<std::string> masked(const IntentId& intent) const;
    std::optional<IntentId> unmasked(std::string_view masked_name) const;

    bool operator==(const LabelMask& o) const { return entries_ == o.entries_; }

private:
    std::vector<Entry> entries_;
    std::map<IntentId, std::string> forward_;
    std::map<std::string, IntentId, std::less<>> backward_;
};

LabelMask mask_labels(const std::vector<IntentId>& intents, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

// Templates use {{name}} placeholders. Each can be overridden by a file
// <dir>/<name>.txt.
struct PromptTemplates {
    std::string version = "v1";
    std::string instructions_with_oos;  // no placeholders
    std::string instructions_in_scope;  // no placeholders
    std::string label_block;            // {{label}} {{description}} {{examples}}
    std::string examples_header;        // printed before example lines when any exist
    std::string example_line;           // {{text}}
    std::string query_block;            // {{query}}
    std::string describe;               // {{examples}}

    static PromptTemplates defaults();
    static PromptTemplates load(const std::filesystem::path& dir);
};

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

// Fixed markers shared by the renderer, the answer parser and the mock LLM.
inline constexpr std::string_view kLabelHeaderPrefix = "### ";
inline constexpr std::string_view kQueryPrefix = "Query: ";
inline constexpr std::string_view kAnswerPrefix = "ANSWER:";
inline constexpr std::string_view kOosToken = "OOS";
inline constexpr std::string_view kDescribeMarker = "Write a one-paragraph description";

enum class PromptMode { with_oos, in_scope_only };

struct PromptBundle {
    struct Block {
        std::string masked_label;
        std::string description;
        std::vector<std::string> examples; // most similar first
    };
    std::string instructions;
    std::vector<Block> blocks; // label order
    std::string query;
    PromptMode mode = PromptMode::with_oos;

    std::string render(const PromptTemplates& templates) const;
};

// One block per mask entry, in mask order. Throws InvalidArgument if
// `retrieved` names an intent the mask does not cover.
PromptBundle build_prompt(std::string_view query, const RetrievedExamples& retrieved, const LabelMask& mask,
                          const std::map<IntentId, std::string>& descriptions, PromptMode mode,
                          const PromptTemplates& templates = PromptTemplates::defaults());

// What a rendered prompt asks for. Used by test doubles that stand in for an LLM.
struct PromptView {
    bool describe_request = false;
    bool oos_allowed = false;
    std::string query;
    std::vector<std::string> labels;        // block headers in order
    std::vector<std::string> example_lines; // "- " lines, prefix stripped
};
PromptView inspect_prompt(std::string_view prompt);

// ---------------------------------------------------------------------------
// Answer parsing
// ---------------------------------------------------------------------------

struct ParsedAnswer {
    enum class Kind { labels, oos, failure };
    Kind kind = Kind::failure;
    std::vector<IntentId> labels; // in answer order
    std::string error;
};

// Reads the last "ANSWER:" line. Unknown masked names or an empty answer
// yield Kind::failure.
ParsedAnswer parse_response(std::string_view text, const LabelMask& mask);

enum class ParseFailurePolicy { treat_as_oos, error };

// The predicted label set; throws ParseFailureError under Policy::error.
LabelSet resolve_answer(const ParsedAnswer& a, ParseFailurePolicy policy);

// ---------------------------------------------------------------------------
// Intent descriptions
// ---------------------------------------------------------------------------

struct DescriptionEntry {
    std::string text;
    std::string generator_model;
    std::string dataset_hash;
    bool operator==(const DescriptionEntry&) const = default;
};

// descriptions.json: {intent id: {"text", "generator_model", "dataset_hash"}}.
// Concurrent readers, exclusive writers.
class DescriptionCache {
public:
    DescriptionCache() = default;
    DescriptionCache(const DescriptionCache& other);
    DescriptionCache& operator=(const DescriptionCache& other);

    std::optional<std::string> get(const IntentId& intent, const std::string& dataset_hash) const;
    void put(const IntentId& intent, DescriptionEntry entry);
    std::map<IntentId, std::string> texts() const;
    std::size_t size() const;

    void save(const std::filesystem::path& file) const;
    static DescriptionCache load(const std::filesystem::path& file);

private:
    mutable std::shared_mutex mu_;
    std::map<IntentId, DescriptionEntry> entries_;
};

// Returns the cached description for (intent, dataset_hash) or asks the LLM
// for one and caches it. Throws InvalidArgument without examples and
// propagates LLM errors.
std::string generate_description(const IntentLabel& intent, const std::vector<std::string>& train_examples,
                                 const LlmClient& llm, DescriptionCache& cache, const std::string& dataset_hash,
                                 const PromptTemplates& templates = PromptTemplates::defaults());

// Generates (or reuses) a description for every intent with train data.
void generate_all_descriptions(const Dataset& d, const LlmClient& llm, DescriptionCache& cache,
                               const PromptTemplates& templates = PromptTemplates::defaults());

} // namespace cascade
