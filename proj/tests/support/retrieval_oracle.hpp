// Exhaustive retrieval reference and random stores to run it on.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cascade/embedding.hpp"
#include "cascade/prompting.hpp"
#include "cascade/random.hpp"

namespace cascade::testing {

inline EmbeddingVector random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = uniform01(rng) * 2 - 1;
    return EmbeddingVector::normalized(v);
}

inline VectorStore random_store(Rng& rng, std::size_t dim, std::size_t intents) {
    VectorStore s(dim);
    std::uint32_t next = 0;
    for (std::size_t c = 0; c < intents; ++c) {
        const std::size_t rows = uniform_index(rng, 12);
        std::vector<std::uint32_t> ids;
        std::vector<std::string> texts;
        std::vector<EmbeddingVector> vs;
        for (std::size_t r = 0; r < rows; ++r) {
            ids.push_back(next);
            texts.push_back("utt " + std::to_string(next++));
            vs.push_back(random_unit(rng, dim));
        }
        s.append_intent("i" + std::to_string(c), ids, texts, vs);
    }
    return s;
}

// Exhaustive top-k per intent with the threshold filter.
inline RetrievedExamples brute_force(const EmbeddingVector& q, const VectorStore& s, int k, double t) {
    RetrievedExamples out;
    for (const auto& intent : s.intents()) {
        std::vector<RetrievedExample> all;
        const auto r = s.range(intent);
        for (std::size_t i = r.begin; i < r.end; ++i) {
            double dot = 0;
            for (std::size_t d = 0; d < s.dim(); ++d) dot += q[d] * s.row(i)[d];
            if (dot > t) all.push_back({s.utterance_id(i), s.text(i), dot});
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.utterance_id < b.utterance_id;
        });
        if (all.size() > std::size_t(k)) all.resize(std::size_t(k));
        out[intent] = all;
    }
    return out;
}

} // namespace cascade::testing
