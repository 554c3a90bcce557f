#pragma once
// Tokenization contract shared by the toy encoder, dataset statistics, and the
// text cleaning pipeline.

#include <string>
#include <string_view>
#include <vector>

namespace mel {

inline constexpr std::string_view kStartToken = "<|startoftext|>";
inline constexpr std::string_view kEndToken = "<|endoftext|>";

// Tokens of one text with sentinels at position 0 and at the end.
struct TokenSequence {
  std::vector<std::string> tokens;

  // Number of tokens excluding the two sentinels.
  std::size_t content_size() const { return tokens.size() - 2; }
};

// Casefolded (ASCII) tokens split at whitespace and punctuation boundaries:
// a token is a maximal run of alphanumeric bytes, where any byte >= 0x80 is
// treated as a letter so multi-byte UTF-8 characters stay inside one token.
// Punctuation is a separator and does not survive as a token. Deterministic.
TokenSequence tokenize(std::string_view text);

// Byte offset one past the end of the n-th token of `text` (same token rule
// as tokenize). Returns text.size() when there are fewer than n tokens.
std::size_t end_of_nth_token(std::string_view text, std::size_t n);

}  // namespace mel
