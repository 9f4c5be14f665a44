#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cascade::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Collapse every run of ASCII whitespace into one space and trim the ends.
std::string collapse_whitespace(std::string_view s);

struct Token {
    std::string text;  // lower-cased
    std::size_t begin; // byte offsets into the source string
    std::size_t end;
};

// Alphanumeric word tokens (apostrophes kept inside words).
std::vector<Token> tokenize(std::string_view s);

bool is_stopword(std::string_view lower_word);

std::string hex64(std::uint64_t v);

std::vector<std::string> split(std::string_view s, char sep);

bool starts_with_ci(std::string_view s, std::string_view prefix);

} // namespace cascade::text
