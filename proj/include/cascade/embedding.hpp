#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cascade/domain.hpp"

namespace cascade {

// Dense unit-norm vector. Construct through `normalized`, which rejects
// non-finite input.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    static EmbeddingVector normalized(std::vector<double> values);
    // Wraps values that are already unit-norm (checked to 1e-9).
    static EmbeddingVector from_unit(std::vector<double> values);

    std::size_t dim() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double norm() const;

    EmbeddingVector operator-() const;
    bool operator==(const EmbeddingVector&) const = default;

private:
    explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

// Cosine similarity, clamped to [-1, 1]. Throws DimensionMismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::size_t dim() const = 0;
    virtual std::string id() const = 0;

    // Throws InvalidArgument on blank text, ProviderError when unavailable.
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    // Output order matches input order.
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
};

// Reference embedder: signed feature hashing of word unigrams and character
// 3-grams of the lower-cased text, L2-normalized. Pure and platform
// independent for a fixed seed.
class HashingEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDim = 256;
    static constexpr std::uint64_t kDefaultSeed = 0x5eedcafe0ddba11ULL;

    explicit HashingEmbedder(std::size_t dim = kDefaultDim, std::uint64_t seed = kDefaultSeed);

    std::size_t dim() const override { return dim_; }
    std::string id() const override;
    EmbeddingVector embed(std::string_view text) const override;
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Looks texts up in a fixed table; unknown texts go to `fallback` when one
// is set and raise ProviderError otherwise. Used to pin exact geometries.
class PrecomputedEmbedder final : public EmbeddingProvider {
public:
    PrecomputedEmbedder(std::size_t dim, std::string id, std::shared_ptr<const EmbeddingProvider> fallback = nullptr);

    void add(std::string text, EmbeddingVector v);

    std::size_t dim() const override { return dim_; }
    std::string id() const override { return id_; }
    EmbeddingVector embed(std::string_view text) const override;

private:
    std::size_t dim_;
    std::string id_;
    std::shared_ptr<const EmbeddingProvider> fallback_;
    std::unordered_map<std::string, EmbeddingVector> table_;
};

struct HttpEndpoint {
    std::string url;  // scheme://host[:port]
    std::string path; // request path
    std::chrono::milliseconds timeout{10000};
    int retries = 2;
    std::string bearer_token;
};

// Remote sentence-embedding service:
//   POST {"texts": [...]}  ->  {"vectors": [[...], ...]}
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(HttpEndpoint endpoint, std::size_t dim);

    std::size_t dim() const override { return dim_; }
    std::string id() const override { return "remote:" + endpoint_.url + endpoint_.path; }
    EmbeddingVector embed(std::string_view text) const override;
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override;

private:
    HttpEndpoint endpoint_;
    std::size_t dim_;
};

// Train-utterance vectors grouped by intent. Rows of one intent are
// contiguous; an utterance with several gold labels is stored once under
// each of them. Immutable once built.
class VectorStore {
public:
    struct Range {
        std::size_t begin = 0;
        std::size_t end = 0;
        std::size_t size() const { return end - begin; }
        bool operator==(const Range&) const = default;
    };

    VectorStore() = default;
    explicit VectorStore(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t rows() const { return utterance_ids_.size(); }
    bool empty() const { return utterance_ids_.empty(); }

    const std::vector<IntentId>& intents() const { return intents_; }
    Range range(const IntentId& intent) const;

    std::span<const double> matrix() const { return data_; }
    std::span<const double> row(std::size_t r) const { return std::span(data_).subspan(r * dim_, dim_); }
    std::uint32_t utterance_id(std::size_t r) const { return utterance_ids_[r]; }
    const std::string& text(std::size_t r) const { return texts_[r]; }

    // Appends rows for `intent`; rows of one intent must be appended in one call.
    void append_intent(const IntentId& intent, std::span<const std::uint32_t> utterance_ids,
                       std::span<const std::string> texts, std::span<const EmbeddingVector> vectors);

    void save(const std::filesystem::path& prefix) const;
    static VectorStore load(const std::filesystem::path& prefix);

    bool operator==(const VectorStore&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<IntentId> intents_;
    std::map<IntentId, Range> ranges_;
    std::vector<double> data_;
    std::vector<std::uint32_t> utterance_ids_;
    std::vector<std::string> texts_;
};

// One row per (train utterance, gold label) pair; utterance ids are indices
// into dataset.train. Intents appear in dataset order.
VectorStore build_store(const EmbeddingProvider& provider, const Dataset& dataset);

// Little-endian float64 helpers shared by the on-disk formats.
void write_f64_file(const std::filesystem::path& p, std::span<const double> values);
std::vector<double> read_f64_file(const std::filesystem::path& p);

} // namespace cascade
