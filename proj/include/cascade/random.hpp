#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cascade {

// All stochastic choices draw from std::mt19937_64, whose output sequence is
// fixed by the standard. The std distributions are implementation-defined, so
// the helpers below map raw engine output to ranges in a portable way.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// FNV-1a over the bytes of `s`.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

// Child seed for a named stage. The seed tree is
//   master -> derive_seed(master, "augment" | "train" | "mc" | "mask" | "llm" | "lab")
//   stage  -> derive_seed(stage, <per-item key>)
// so every subcommand is fully determined by one master seed.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

// Uniform integer in [0, n). n must be > 0. Rejection sampling, unbiased.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Uniform real in [0, 1) with 53 bits of resolution.
double uniform01(Rng& rng);

bool bernoulli(Rng& rng, double p);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace cascade
