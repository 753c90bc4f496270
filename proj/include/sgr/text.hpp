#pragma once

#include <cctype>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sgr {

// Shared text normalization: lowercase, collapse whitespace, strip outer
// punctuation from each token. Applied identically to aliases, questions,
// hypothesis text and answer values so matches are byte-comparable.
inline std::vector<std::string> tokenize_normalized(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    // strip leading/trailing non-alphanumeric (keep '_' as word char)
    std::size_t b = 0, e = current.size();
    auto word = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
    while (b < e && !word(static_cast<unsigned char>(current[b]))) ++b;
    while (e > b && !word(static_cast<unsigned char>(current[e - 1]))) --e;
    if (e > b) tokens.emplace_back(current.substr(b, e - b));
    current.clear();
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

inline std::string normalize_text(std::string_view text) {
  auto tokens = tokenize_normalized(text);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// 64-bit FNV-1a
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace sgr
