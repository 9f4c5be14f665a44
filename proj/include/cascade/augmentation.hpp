#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/domain.hpp"
#include "cascade/embedding.hpp"
#include "cascade/random.hpp"

namespace cascade {

// Negative data augmentation: synthetic OOS sentences made by removing or
// scrambling the keywords of in-scope training sentences.
struct AugmentationConfig {
    double ratio = 0.2;            // |U| = ratio * |D|
    int replace_string_len = 5;
    double removal_prob = 0.5;
    int max_keywords = 2;          // keywords corrupted per sentence
    std::uint64_t seed = 0;

    void validate() const;
};

struct KeywordSpan {
    std::size_t begin = 0; // byte offsets into the sentence
    std::size_t end = 0;
    std::string text;
    double score = 0.0;

    bool operator==(const KeywordSpan&) const = default;
};

// Candidate word 1- and 2-grams made only of adjacent non-stopwords, scored
// by cosine between the n-gram embedding and the sentence embedding. Returns
// up to max_k non-overlapping spans, best first.
std::vector<KeywordSpan> extract_keywords(std::string_view sentence, int max_k,
                                          const EmbeddingProvider& embedder);
std::vector<KeywordSpan> extract_keywords(std::string_view sentence, int max_k);

enum class CorruptMode { random, force_remove, force_replace };

struct Corruption {
    std::string text;
    int removed = 0;
    int replaced = 0;
};

// Each keyword is independently removed with probability removal_prob or
// replaced by a fresh [A-Z]{replace_string_len} token. Whitespace is
// collapsed. If the result is empty the sentence is redone in replace-only
// mode.
Corruption corrupt(std::string_view sentence, const std::vector<KeywordSpan>& keywords, Rng& rng,
                   const AugmentationConfig& cfg, CorruptMode mode = CorruptMode::random);

// max(1, round-half-away(ratio * n))
std::size_t augmentation_count(std::size_t train_size, double ratio);

// Samples source sentences uniformly (with replacement) from `train` and
// corrupts their keywords. Outputs are OOS (no labels, origin=augmented),
// never string-equal to any train sentence, and deterministic for cfg.seed.
std::vector<LabeledUtterance> augment_dataset(const std::vector<LabeledUtterance>& train,
                                              const AugmentationConfig& cfg,
                                              const EmbeddingProvider& embedder);
std::vector<LabeledUtterance> augment_dataset(const std::vector<LabeledUtterance>& train,
                                              const AugmentationConfig& cfg);

// True when `augmented` keeps at least one non-stopword token of `source`,
// or is `source` with some words deleted and nothing added.
bool lexically_close(std::string_view source, std::string_view augmented);

} // namespace cascade
