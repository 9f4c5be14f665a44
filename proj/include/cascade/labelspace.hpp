#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cascade/classifier.hpp"
#include "cascade/domain.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/llm.hpp"
#include "cascade/prompting.hpp"
#include "cascade/random.hpp"

namespace cascade::lab {

inline constexpr std::size_t kParents = 2;
inline constexpr std::size_t kLeavesPerParent = 10;
inline constexpr std::size_t kUtterancesPerLeaf = 10;
inline constexpr std::size_t kTrainPerLeaf = 5;
inline constexpr std::size_t kParaphrasesPerUtterance = 3;

struct LeafUtterance {
    std::string text;
    std::vector<std::string> paraphrases;
    std::string source; // "published" or "fixture"
};

struct LeafIntent {
    std::string parent;
    std::string name;
    std::vector<LeafUtterance> utterances;
};

// leaves.jsonl: one leaf per line, {"parent", "name", "utterances": [{"text", "source", "paraphrases"}]}.
// Throws FormatError listing every shape violation (20 leaves, 2 parents x 10,
// 10 utterances per leaf, 3 paraphrases each, no duplicate text).
std::vector<LeafIntent> load_leaves(const std::filesystem::path& file);
std::vector<std::string> leaf_violations(const std::vector<LeafIntent>& leaves);

// S leaves of one parent merged into one intent.
struct ScopedIntent {
    std::string parent;
    std::vector<std::size_t> leaves; // indices into the leaf list, ascending

    std::string id(const std::vector<LeafIntent>& all) const; // leaf names joined by '+'
};

// Maximal set of pairwise-disjoint scoped intents: floor(10 / S) per parent.
std::vector<ScopedIntent> compose_intents(const std::vector<LeafIntent>& leaves, int scope, Rng& rng);

std::size_t max_labels(int scope); // 2 * floor(10 / S)
bool feasible(int scope, int labels);

struct Experiment {
    int scope = 1;
    int labels = 1;
    std::vector<ScopedIntent> chosen;
    Dataset dataset; // train / valid_in_scope / valid_oos
};

// Train: 5 utterances per constituent leaf. In-scope test: the other 5 plus
// their paraphrases. OOS test: the test halves (plus paraphrases) of every
// leaf no chosen intent covers. Throws InfeasibleExperiment when L exceeds
// the intents available at scope S.
Experiment make_experiment(const std::vector<LeafIntent>& leaves, int scope, int labels, std::uint64_t seed);

// A system under test: scores every test record of one experiment.
class LabSystem {
public:
    virtual ~LabSystem() = default;
    virtual std::string name() const = 0;
    virtual std::vector<EvalRecord> run(const Experiment& e, std::uint64_t seed) const = 0;
};

// Answers with the gold labels; continuous score 1/0.
class OracleSystem final : public LabSystem {
public:
    std::string name() const override { return "oracle"; }
    std::vector<EvalRecord> run(const Experiment& e, std::uint64_t seed) const override;
};

// Embedding classifier with augmentation (batch 16, 5 epochs). The score is
// the maximum label probability.
class ClassifierSystem final : public LabSystem {
public:
    explicit ClassifierSystem(std::shared_ptr<const EmbeddingProvider> embedder);
    std::string name() const override { return "classifier"; }
    std::vector<EvalRecord> run(const Experiment& e, std::uint64_t seed) const override;

private:
    std::shared_ptr<const EmbeddingProvider> embedder_;
};

// ICL prompting with OOS option (k = 5, t = 1e-5); score 1 when an in-scope
// label is answered. `make_llm` builds the client for one experiment so a
// mock can be given the experiment's oracle and mask.
class LlmSystem final : public LabSystem {
public:
    using Factory = std::function<std::shared_ptr<const LlmClient>(const Experiment&, const LabelMask&)>;
    LlmSystem(std::string name, std::shared_ptr<const EmbeddingProvider> embedder, Factory make_llm);
    std::string name() const override { return name_; }
    std::vector<EvalRecord> run(const Experiment& e, std::uint64_t seed) const override;

private:
    std::string name_;
    std::shared_ptr<const EmbeddingProvider> embedder_;
    Factory make_llm_;
};

struct GridConfig {
    std::vector<int> scopes = {1, 2, 3, 4, 5};
    std::vector<int> labels = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
    int repeats = 10;
    std::uint64_t seed = 0;
};

struct CellResult {
    int scope = 0;
    int labels = 0;
    bool truncated = false;
    int repeats = 0;
    double auc_roc = 0.0;   // NaN when the chosen intents cover every leaf (no OOS pool)
    double inscope_accuracy = 0.0;
    double oos_recall = 0.0; // NaN as for auc_roc
};

// Cells (and repeats) run in parallel; each (S, L, repeat) owns a seed derived
// from the grid seed, so the table does not depend on scheduling.
std::vector<CellResult> run_grid(const std::vector<LeafIntent>& leaves, const LabSystem& system,
                                 const GridConfig& cfg);

// Plot-ready CSV, one row per cell with fixed 6-decimal formatting;
// truncated cells carry status "truncated" and empty metrics, undefined
// metrics are left empty as well.
std::string grid_csv(const std::string& system, const std::vector<CellResult>& cells);

} // namespace cascade::lab
