#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "cascade/domain.hpp"
#include "cascade/embedding.hpp"
#include "cascade/error.hpp"
#include "cascade/random.hpp"

namespace cascade {

// Linear + sigmoid head over sentence embeddings, one independent sigmoid
// per label. A query whose scores all fall below `threshold` is OOS.
struct HeadModel {
    std::size_t dim = 0;
    std::vector<IntentId> label_order;
    std::vector<double> weights; // C x dim, row-major
    std::vector<double> bias;    // C
    double threshold = 0.5;

    std::size_t classes() const { return label_order.size(); }
    std::span<const double> row(std::size_t c) const { return std::span(weights).subspan(c * dim, dim); }

    static HeadModel zeros(std::size_t dim, std::vector<IntentId> labels, double threshold = 0.5);

    void save(const std::filesystem::path& prefix) const; // <prefix>.head.json + <prefix>.head.bin
    static HeadModel load(const std::filesystem::path& prefix);

    bool operator==(const HeadModel&) const = default;
};

struct TrainConfig {
    double learning_rate = 5e-3;
    int epochs = 10;
    int batch_size = 32;
    double l2 = 1e-4;
    double threshold = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

// Row-major training matrix. A row whose targets are all zero is an OOS
// example (augmented negatives).
struct TrainingSet {
    std::size_t dim = 0;
    std::vector<IntentId> labels;
    std::vector<double> inputs;         // N x dim
    std::vector<unsigned char> targets; // N x C

    std::size_t size() const { return dim == 0 ? 0 : inputs.size() / dim; }
};

// Embeds the train split (plus any extra OOS utterances) with `provider`.
TrainingSet make_training_set(const EmbeddingProvider& provider, const Dataset& dataset,
                              const std::vector<LabeledUtterance>& extra_oos = {});

struct TrainReport {
    std::vector<double> epoch_loss; // full-set loss after each epoch
};

// Objective: mean binary cross-entropy over (example, label) pairs plus
// (l2 / 2) * ||W||^2 (bias unpenalized).
struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> grad_weights; // C x dim
    std::vector<double> grad_bias;    // C
};
LossAndGradient loss_and_gradient(const HeadModel& head, std::span<const double> inputs,
                                  std::span<const unsigned char> targets, double l2);

// Plain mini-batch SGD from zero weights, reshuffling every epoch.
// Throws TrainingError if the loss becomes non-finite.
HeadModel train_head(const TrainingSet& data, const TrainConfig& cfg, TrainReport* report = nullptr);

struct Prediction {
    std::vector<double> scores; // aligned with label_order
    LabelSet labels;            // {l : score(l) >= threshold}
};

Prediction predict(const HeadModel& head, const EmbeddingVector& v);
std::vector<Prediction> predict_batch(const HeadModel& head, std::span<const EmbeddingVector> vs);

double sigmoid(double x);

struct McConfig {
    int samples = 10;      // M
    double dropout_p = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Source of stochastic forward passes. The default applies inverted dropout
// to the head's input features; backends that expose stochastic embeddings
// can substitute their own.
class StochasticPredictor {
public:
    virtual ~StochasticPredictor() = default;
    // One stochastic pass; returns per-label logits aligned with label_order.
    virtual std::vector<double> sample_logits(const EmbeddingVector& v, Rng& rng) const = 0;
    virtual const HeadModel& head() const = 0;
};

class FeatureDropoutPredictor final : public StochasticPredictor {
public:
    FeatureDropoutPredictor(const HeadModel& head, double dropout_p);
    std::vector<double> sample_logits(const EmbeddingVector& v, Rng& rng) const override;
    const HeadModel& head() const override { return head_; }
    double dropout_p() const { return dropout_p_; }

private:
    const HeadModel& head_;
    double dropout_p_;
};

struct McResult {
    std::vector<std::size_t> argmax;               // p_1..p_M as label indices
    std::vector<std::vector<double>> sample_scores; // M x C
};

// M sequential stochastic passes. Deterministic for a given rng state.
McResult mc_run(const StochasticPredictor& predictor, const EmbeddingVector& v, int samples, Rng& rng);

// Same draws as mc_run with a FeatureDropoutPredictor, but all M masked
// inputs go through one affine call. Results are identical to mc_run.
McResult mc_run_batched(const FeatureDropoutPredictor& predictor, const EmbeddingVector& v, int samples, Rng& rng);

// p_1..p_M as label ids, using feature dropout with mc.dropout_p and mc.seed.
std::vector<IntentId> mc_sample(const HeadModel& head, const EmbeddingVector& v, const McConfig& mc);

struct UncertaintyVerdict {
    Uncertainty verdict = Uncertainty::certain;
    std::size_t distinct_count = 1;
};

// certain: 1 distinct value; uncertain: 2..ceil(M/2); unstable: above ceil(M/2).
UncertaintyVerdict uncertainty_from_count(std::size_t distinct_count, int samples);

template <typename T>
UncertaintyVerdict uncertainty(const std::vector<T>& samples, int m) {
    if (static_cast<int>(samples.size()) != m)
        throw InvalidArgument("uncertainty: expected " + std::to_string(m) + " samples");
    const std::set<T> distinct(samples.begin(), samples.end());
    return uncertainty_from_count(distinct.size(), m);
}

// Per-label mean and variance of MC sample scores.
void score_moments(const McResult& r, std::vector<double>& mean, std::vector<double>& variance);

} // namespace cascade
