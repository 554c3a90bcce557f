#pragma once
// Deterministic stand-in for a frozen pretrained text encoder, for desk-scale
// runs and fixtures. Real encoder outputs enter through feature-store files
// instead; both paths produce the same shape of data.
//
// Recipe (mirrored by tests/oracles/toy_encode_oracle.py):
//   per token: SplitMix64 stream seeded with mix64(fnv1a64(token) ^ mix64(seed)),
//   d values of 2*((u >> 11) * 2^-53) - 1; mean-pool over non-sentinel tokens;
//   L2-normalize. A zero-norm pool is re-drawn with a salted seed.

#include <Eigen/Dense>
#include <stdexcept>

#include "melkit/rng.hpp"
#include "melkit/tokenize.hpp"

namespace mel {

inline Eigen::VectorXd toy_token_vector(std::string_view token, std::uint64_t seed, int d) {
  RngStream stream(token_seed(token, seed));
  Eigen::VectorXd v(d);
  for (int j = 0; j < d; ++j) v[j] = stream.next_symmetric();
  return v;
}

inline Eigen::VectorXd toy_encode(const TokenSequence& tokens, std::uint64_t seed, int d) {
  if (d < 2) throw std::invalid_argument("toy_encode: dimension must be >= 2");
  for (std::uint64_t salt = 0;; ++salt) {
    const std::uint64_t eff_seed = salt == 0 ? seed : mix64(seed + salt * kGolden64);
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(d);
    std::size_t n = 0;
    for (const auto& tok : tokens.tokens) {
      if (tok == kStartToken || tok == kEndToken) continue;
      pooled += toy_token_vector(tok, eff_seed, d);
      ++n;
    }
    if (n == 0) {
      // Sentinels only: fall back to the empty-string pseudo-token.
      pooled = toy_token_vector("", eff_seed, d);
      n = 1;
    }
    pooled /= static_cast<double>(n);
    const double norm = pooled.norm();
    if (norm >= 1e-12) return pooled / norm;
  }
}

inline Eigen::VectorXd toy_encode_text(std::string_view text, std::uint64_t seed, int d) {
  return toy_encode(tokenize(text), seed, d);
}

}  // namespace mel
