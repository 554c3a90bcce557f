#include "melkit/tokenize.hpp"

namespace mel {

namespace {

inline bool is_token_byte(unsigned char c) {
  if (c >= 0x80) return true;  // inside a multi-byte UTF-8 character
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

inline char fold(unsigned char c) {
  if (c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  return static_cast<char>(c);
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  seq.tokens.emplace_back(kStartToken);
  std::string current;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      current.push_back(fold(c));
    } else if (!current.empty()) {
      seq.tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) seq.tokens.push_back(std::move(current));
  seq.tokens.emplace_back(kEndToken);
  return seq;
}

std::size_t end_of_nth_token(std::string_view text, std::size_t n) {
  if (n == 0) return 0;
  std::size_t seen = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool tok = is_token_byte(static_cast<unsigned char>(text[i]));
    if (tok && !in_token) {
      in_token = true;
      ++seen;
    } else if (!tok && in_token) {
      in_token = false;
      if (seen == n) return i;
    }
  }
  return text.size();
}

}  // namespace mel
