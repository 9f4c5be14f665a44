#include "cascade/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/random.hpp"
#include "cascade/text.hpp"
#include "http_json.hpp"

namespace cascade {

EmbeddingVector EmbeddingVector::normalized(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("embedding vector must have positive dimension");
    double ss = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidArgument("embedding vector has a non-finite entry");
        ss += v * v;
    }
    if (ss == 0.0) throw InvalidArgument("cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(ss);
    for (double& v : values) v *= inv;
    return EmbeddingVector(std::move(values));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<double> values) {
    EmbeddingVector v(std::move(values));
    for (double x : v.values_)
        if (!std::isfinite(x)) throw InvalidArgument("embedding vector has a non-finite entry");
    if (v.values_.empty() || std::abs(v.norm() - 1.0) > 1e-9) throw InvalidArgument("vector is not unit-norm");
    return v;
}

double EmbeddingVector::norm() const {
    double ss = 0.0;
    for (double v : values_) ss += v * v;
    return std::sqrt(ss);
}

EmbeddingVector EmbeddingVector::operator-() const {
    std::vector<double> v(values_);
    for (double& x : v) x = -x;
    return EmbeddingVector(std::move(v));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw DimensionMismatch("cosine: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    double dot = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
    return std::clamp(dot, -1.0, 1.0);
}

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

// --- HashingEmbedder ---------------------------------------------------------

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim == 0) throw InvalidArgument("embedding dim must be positive");
}

std::string HashingEmbedder::id() const {
    return "hashing-" + std::to_string(dim_) + "-" + text::hex64(seed_);
}

EmbeddingVector HashingEmbedder::embed(std::string_view raw) const {
    const std::string norm = text::collapse_whitespace(text::to_lower(raw));
    if (norm.empty()) throw InvalidArgument("cannot embed empty text");

    std::vector<double> v(dim_, 0.0);
    auto add = [&](std::string_view feature, std::string_view ns, double weight) {
        const std::uint64_t h = fnv1a64(feature, fnv1a64(ns, seed_));
        const double sign = (h >> 63) ? -1.0 : 1.0;
        v[(h & 0x7fffffffffffffffULL) % dim_] += sign * weight;
    };
    for (const auto& tok : text::tokenize(norm)) add(tok.text, "w", 1.0);
    const std::string padded = " " + norm + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3), "c", 1.0);

    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (ss == 0.0) v[fnv1a64(norm, seed_) % dim_] = 1.0; // every feature cancelled
    return EmbeddingVector::normalized(std::move(v));
}

std::vector<EmbeddingVector> HashingEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<EmbeddingVector> out(texts.size());
    const auto n = static_cast<long long>(texts.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16) if (n > 64)
    for (long long i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = embed(texts[static_cast<std::size_t>(i)]);
        } catch (...) {
#pragma omp critical(cascade_embed_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

// --- PrecomputedEmbedder -----------------------------------------------------

PrecomputedEmbedder::PrecomputedEmbedder(std::size_t dim, std::string id,
                                         std::shared_ptr<const EmbeddingProvider> fallback)
    : dim_(dim), id_(std::move(id)), fallback_(std::move(fallback)) {
    if (fallback_ && fallback_->dim() != dim_) throw DimensionMismatch("fallback embedder dim differs");
}

void PrecomputedEmbedder::add(std::string text, EmbeddingVector v) {
    if (v.dim() != dim_) throw DimensionMismatch("precomputed vector has wrong dim");
    table_.insert_or_assign(std::move(text), std::move(v));
}

EmbeddingVector PrecomputedEmbedder::embed(std::string_view text) const {
    if (text::trim(text).empty()) throw InvalidArgument("cannot embed empty text");
    if (auto it = table_.find(std::string(text)); it != table_.end()) return it->second;
    if (fallback_) return fallback_->embed(text);
    throw ProviderError(id_ + ": no vector for '" + std::string(text) + "'");
}

// --- RemoteEmbedder ----------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(HttpEndpoint endpoint, std::size_t dim) : endpoint_(std::move(endpoint)), dim_(dim) {}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
    const std::string t(text);
    return embed_batch(std::span(&t, 1)).front();
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
    for (const auto& t : texts)
        if (text::trim(t).empty()) throw InvalidArgument("cannot embed empty text");
    nlohmann::json body;
    body["texts"] = std::vector<std::string>(texts.begin(), texts.end());
    nlohmann::json reply;
    try {
        reply = detail::post_json(endpoint_, body);
    } catch (const detail::HttpFailure& f) {
        throw ProviderError(f.message);
    }
    if (!reply.contains("vectors") || !reply["vectors"].is_array() || reply["vectors"].size() != texts.size())
        throw ProviderError(id() + ": malformed reply, expected " + std::to_string(texts.size()) + " vectors");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& row : reply["vectors"]) {
        auto values = row.get<std::vector<double>>();
        if (values.size() != dim_) throw ProviderError(id() + ": vector of dim " + std::to_string(values.size()));
        try {
            out.push_back(EmbeddingVector::normalized(std::move(values)));
        } catch (const InvalidArgument& e) {
            throw ProviderError(id() + ": " + e.what());
        }
    }
    return out;
}

// --- VectorStore -------------------------------------------------------------

VectorStore::Range VectorStore::range(const IntentId& intent) const {
    auto it = ranges_.find(intent);
    return it == ranges_.end() ? Range{} : it->second;
}

void VectorStore::append_intent(const IntentId& intent, std::span<const std::uint32_t> utterance_ids,
                                std::span<const std::string> texts, std::span<const EmbeddingVector> vectors) {
    if (ranges_.count(intent)) throw InvalidArgument("intent '" + intent + "' already in store");
    if (utterance_ids.size() != vectors.size() || texts.size() != vectors.size())
        throw InvalidArgument("append_intent: length mismatch");
    const std::size_t begin = rows();
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].dim() != dim_) throw DimensionMismatch("store row dim differs from store dim");
        data_.insert(data_.end(), vectors[i].values().begin(), vectors[i].values().end());
        utterance_ids_.push_back(utterance_ids[i]);
        texts_.push_back(texts[i]);
    }
    intents_.push_back(intent);
    ranges_[intent] = Range{begin, rows()};
}

void write_f64_file(const std::filesystem::path& p, std::span<const double> values) {
    std::string bytes(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    write_file(p, bytes);
}

std::vector<double> read_f64_file(const std::filesystem::path& p) {
    const std::string bytes = read_file(p);
    if (bytes.size() % 8 != 0) throw FormatError("'" + p.string() + "' is not a float64 array");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

void VectorStore::save(const std::filesystem::path& prefix) const {
    const std::string base = prefix.string();
    write_f64_file(base + ".vecs", data_);
    nlohmann::ordered_json idx;
    idx["dim"] = dim_;
    idx["rows"] = rows();
    idx["intents"] = nlohmann::ordered_json::array();
    for (const auto& intent : intents_) {
        const auto r = ranges_.at(intent);
        idx["intents"].push_back({{"id", intent}, {"begin", r.begin}, {"end", r.end}});
    }
    idx["utterance_ids"] = utterance_ids_;
    idx["texts"] = texts_;
    write_file(base + ".idx.json", idx.dump(2) + "\n");
}

VectorStore VectorStore::load(const std::filesystem::path& prefix) {
    const std::string base = prefix.string();
    nlohmann::json idx;
    try {
        idx = nlohmann::json::parse(read_file(base + ".idx.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(base + ".idx.json: " + e.what());
    }
    VectorStore s(idx.at("dim").get<std::size_t>());
    s.data_ = read_f64_file(base + ".vecs");
    s.utterance_ids_ = idx.at("utterance_ids").get<std::vector<std::uint32_t>>();
    s.texts_ = idx.at("texts").get<std::vector<std::string>>();
    for (const auto& entry : idx.at("intents")) {
        const auto id = entry.at("id").get<std::string>();
        s.intents_.push_back(id);
        s.ranges_[id] = Range{entry.at("begin").get<std::size_t>(), entry.at("end").get<std::size_t>()};
    }
    if (s.data_.size() != s.rows() * s.dim_ || s.texts_.size() != s.rows())
        throw FormatError(base + ": index and vector file disagree on row count");
    return s;
}

VectorStore build_store(const EmbeddingProvider& provider, const Dataset& dataset) {
    std::vector<std::string> texts;
    texts.reserve(dataset.train.size());
    for (const auto& u : dataset.train) texts.push_back(u.text);
    const auto vectors = provider.embed_batch(texts);

    VectorStore store(provider.dim());
    for (const auto& intent : dataset.intents) {
        std::vector<std::uint32_t> ids;
        std::vector<std::string> row_texts;
        std::vector<EmbeddingVector> rows;
        for (std::size_t i = 0; i < dataset.train.size(); ++i) {
            if (!dataset.train[i].gold_labels.count(intent.id)) continue;
            ids.push_back(static_cast<std::uint32_t>(i));
            row_texts.push_back(dataset.train[i].text);
            rows.push_back(vectors[i]);
        }
        store.append_intent(intent.id, ids, row_texts, rows);
    }
    return store;
}

} // namespace cascade
