#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace film {

// Lowercases and splits on runs of non-alphanumeric bytes. No stemming, no
// subword handling; bytes outside ASCII act as separators.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace film
