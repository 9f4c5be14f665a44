#include "cascade/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <unordered_set>

#include "cascade/error.hpp"
#include "cascade/text.hpp"

namespace cascade {

void AugmentationConfig::validate() const {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("augmentation ratio must be in (0, 1]");
    if (replace_string_len < 1) throw InvalidArgument("replace_string_len must be >= 1");
    if (!(removal_prob >= 0.0 && removal_prob <= 1.0)) throw InvalidArgument("removal_prob must be in [0, 1]");
    if (max_keywords < 1) throw InvalidArgument("max_keywords must be >= 1");
}

namespace {

const HashingEmbedder& reference_embedder() {
    static const HashingEmbedder e;
    return e;
}

std::size_t content_tokens(const std::vector<text::Token>& toks) {
    return static_cast<std::size_t>(
        std::count_if(toks.begin(), toks.end(), [](const text::Token& t) { return !text::is_stopword(t.text); }));
}

std::string random_token(Rng& rng, int len) {
    std::string s(static_cast<std::size_t>(len), 'A');
    for (auto& c : s) c = static_cast<char>('A' + uniform_index(rng, 26));
    return s;
}

} // namespace

std::vector<KeywordSpan> extract_keywords(std::string_view sentence, int max_k, const EmbeddingProvider& embedder) {
    if (max_k < 1) throw InvalidArgument("max_k must be >= 1");
    if (text::trim(sentence).empty()) throw InvalidArgument("cannot extract keywords from empty sentence");

    const auto toks = text::tokenize(sentence);
    std::vector<KeywordSpan> candidates;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (text::is_stopword(toks[i].text)) continue;
        candidates.push_back({toks[i].begin, toks[i].end, std::string(sentence.substr(toks[i].begin, toks[i].end - toks[i].begin)), 0.0});
        if (i + 1 < toks.size() && !text::is_stopword(toks[i + 1].text)) {
            const auto b = toks[i].begin;
            const auto e = toks[i + 1].end;
            candidates.push_back({b, e, std::string(sentence.substr(b, e - b)), 0.0});
        }
    }
    if (candidates.empty()) return {};

    const auto doc = embedder.embed(sentence);
    for (auto& c : candidates) c.score = cosine(embedder.embed(c.text), doc);
    std::stable_sort(candidates.begin(), candidates.end(), [](const KeywordSpan& a, const KeywordSpan& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.begin < b.begin;
    });

    std::vector<KeywordSpan> chosen;
    for (const auto& c : candidates) {
        if (static_cast<int>(chosen.size()) == max_k) break;
        const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const KeywordSpan& k) {
            return c.begin < k.end && k.begin < c.end;
        });
        if (!overlaps) chosen.push_back(c);
    }
    return chosen;
}

std::vector<KeywordSpan> extract_keywords(std::string_view sentence, int max_k) {
    return extract_keywords(sentence, max_k, reference_embedder());
}

Corruption corrupt(std::string_view sentence, const std::vector<KeywordSpan>& keywords, Rng& rng,
                   const AugmentationConfig& cfg, CorruptMode mode) {
    if (keywords.empty()) throw InvalidArgument("corrupt: no keywords");
    auto spans = keywords;
    std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].begin >= spans[i].end || spans[i].end > sentence.size())
            throw InvalidArgument("corrupt: keyword span outside sentence");
        if (i > 0 && spans[i].begin < spans[i - 1].end) throw InvalidArgument("corrupt: overlapping keywords");
    }

    const std::string original = text::collapse_whitespace(sentence);
    for (;;) {
        Corruption out;
        std::string buf;
        std::size_t pos = 0;
        for (const auto& k : spans) {
            buf.append(sentence.substr(pos, k.begin - pos));
            const bool remove = mode == CorruptMode::force_remove ||
                                (mode == CorruptMode::random && bernoulli(rng, cfg.removal_prob));
            if (remove) {
                ++out.removed;
                buf.push_back(' ');
            } else {
                ++out.replaced;
                buf += ' ' + random_token(rng, cfg.replace_string_len) + ' ';
            }
            pos = k.end;
        }
        buf.append(sentence.substr(pos));
        out.text = text::collapse_whitespace(buf);

        if (out.text.empty()) {
            mode = CorruptMode::force_replace;
            continue;
        }
        if (out.text == original) continue; // a replacement reproduced the keyword
        return out;
    }
}

std::size_t augmentation_count(std::size_t train_size, double ratio) {
    const double raw = std::round(ratio * static_cast<double>(train_size)); // half away from zero
    return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

bool lexically_close(std::string_view source, std::string_view augmented) {
    const auto src = text::tokenize(source);
    const auto aug = text::tokenize(augmented);
    if (aug.empty()) return false;
    std::unordered_set<std::string> content;
    for (const auto& t : src)
        if (!text::is_stopword(t.text)) content.insert(t.text);
    for (const auto& t : aug)
        if (content.count(t.text)) return true;
    // pure removal: aug is a subsequence of src
    std::size_t j = 0;
    for (const auto& t : src)
        if (j < aug.size() && t.text == aug[j].text) ++j;
    return j == aug.size();
}

namespace {

// Keywords for one sentence, capped so at least one content word survives
// whenever the sentence has two or more.
std::vector<KeywordSpan> keywords_for(std::string_view sentence, const AugmentationConfig& cfg,
                                      const EmbeddingProvider& embedder) {
    const auto toks = text::tokenize(sentence);
    const std::size_t content = content_tokens(toks);
    if (content == 0) return {};
    const std::size_t budget = content == 1 ? 1 : content - 1;

    auto ranked = extract_keywords(sentence, static_cast<int>(content), embedder);
    std::vector<KeywordSpan> chosen;
    std::size_t covered = 0;
    for (const auto& k : ranked) {
        if (static_cast<int>(chosen.size()) == cfg.max_keywords) break;
        const std::size_t words = content_tokens(text::tokenize(k.text));
        if (covered + words > budget) continue;
        covered += words;
        chosen.push_back(k);
    }
    return chosen;
}

} // namespace

std::vector<LabeledUtterance> augment_dataset(const std::vector<LabeledUtterance>& train,
                                              const AugmentationConfig& cfg, const EmbeddingProvider& embedder) {
    cfg.validate();
    if (train.empty()) throw InvalidArgument("augment_dataset: empty train set");

    std::vector<std::size_t> sources;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (!train[i].is_oos()) sources.push_back(i);
    if (sources.empty())
        for (std::size_t i = 0; i < train.size(); ++i) sources.push_back(i);

    std::unordered_set<std::string> existing;
    for (const auto& u : train) existing.insert(text::collapse_whitespace(u.text));

    constexpr int kMaxAttempts = 64;
    const std::size_t n = augmentation_count(train.size(), cfg.ratio);
    std::vector<LabeledUtterance> out(n);
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 4) if (n > 32)
    for (long long j = 0; j < static_cast<long long>(n); ++j) {
        try {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(j)));
            std::string fallback;
            std::string accepted;
            for (int attempt = 0; attempt < kMaxAttempts && accepted.empty(); ++attempt) {
                const auto& src = train[sources[uniform_index(rng, sources.size())]].text;
                const auto keywords = keywords_for(src, cfg, embedder);
                if (keywords.empty()) continue;
                auto c = corrupt(src, keywords, rng, cfg);
                if (existing.count(c.text)) continue;
                if (lexically_close(src, c.text)) accepted = std::move(c.text);
                else if (fallback.empty()) fallback = std::move(c.text);
            }
            if (accepted.empty()) accepted = fallback;
            if (accepted.empty()) throw InvalidArgument("augment_dataset: no sentence has a usable keyword");
            out[static_cast<std::size_t>(j)] = LabeledUtterance{std::move(accepted), {}, Origin::augmented};
        } catch (...) {
#pragma omp critical(cascade_augment_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<LabeledUtterance> augment_dataset(const std::vector<LabeledUtterance>& train,
                                              const AugmentationConfig& cfg) {
    return augment_dataset(train, cfg, reference_embedder());
}

} // namespace cascade
