#include "cascade/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

namespace cascade::text {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_word(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

// English stopwords, sorted for binary search.
constexpr std::array kStopwords = {
    "a",       "about",  "above",   "after",   "again",   "against", "all",     "am",
    "an",      "and",    "any",     "are",     "as",      "at",      "be",      "because",
    "been",    "before", "being",   "below",   "between", "both",    "but",     "by",
    "can",     "could",  "did",     "do",      "does",    "doing",   "down",    "during",
    "each",    "few",    "for",     "from",    "further", "had",     "has",     "have",
    "having",  "he",     "her",     "here",    "hers",    "herself", "him",     "himself",
    "his",     "how",    "i",       "if",      "in",      "into",    "is",      "it",
    "its",     "itself", "just",    "me",      "more",    "most",    "my",      "myself",
    "no",      "nor",    "not",     "now",     "of",      "off",     "on",      "once",
    "only",    "or",     "other",   "our",     "ours",    "ourselves", "out",   "over",
    "own",     "same",   "she",     "should",  "so",      "some",    "such",    "than",
    "that",    "the",    "their",   "theirs",  "them",    "themselves", "then", "there",
    "these",   "they",   "this",    "those",   "through", "to",      "too",     "under",
    "until",   "up",     "very",    "was",     "we",      "were",    "what",    "when",
    "where",   "which",  "while",   "who",     "whom",    "why",     "will",    "with",
    "would",   "you",    "your",    "yours",   "yourself", "yourselves",
};

} // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_word(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size()) {
            const auto c = static_cast<unsigned char>(s[j]);
            if (is_word(c)) {
                ++j;
            } else if (c == '\'' && j + 1 < s.size() && is_word(static_cast<unsigned char>(s[j + 1]))) {
                j += 2;
            } else {
                break;
            }
        }
        tokens.push_back({to_lower(s.substr(i, j - i)), i, j});
        i = j;
    }
    return tokens;
}

bool is_stopword(std::string_view lower_word) {
    return std::binary_search(kStopwords.begin(), kStopwords.end(), lower_word,
                              [](std::string_view a, std::string_view b) { return a < b; });
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            return parts;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

} // namespace cascade::text
