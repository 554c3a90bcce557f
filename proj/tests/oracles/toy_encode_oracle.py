#!/usr/bin/env python3
"""Standalone reference for the toy encoder recipe.

Implements the hash/PRNG pipeline independently of the C++ code and prints
golden vectors that tests freeze. Run: python3 toy_encode_oracle.py
"""

import math

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def mix64(z: int) -> int:
    z = (z + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class SplitMix:
    def __init__(self, seed: int):
        self.state = seed & MASK

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def next_symmetric(self) -> float:
        return 2.0 * ((self.next_u64() >> 11) * 2.0**-53) - 1.0


def token_seed(token: str, seed: int) -> int:
    return mix64(fnv1a64(token.encode()) ^ mix64(seed))


def token_vector(token: str, seed: int, d: int):
    rng = SplitMix(token_seed(token, seed))
    return [rng.next_symmetric() for _ in range(d)]


def tokenize(text: str):
    tokens, cur = [], []
    for ch in text.encode():
        if (ord("a") <= ch <= ord("z")) or (ord("A") <= ch <= ord("Z")) or (ord("0") <= ch <= ord("9")) or ch >= 0x80:
            cur.append(chr(ch).lower())
        elif cur:
            tokens.append("".join(cur))
            cur = []
    if cur:
        tokens.append("".join(cur))
    return tokens


def toy_encode(text: str, seed: int, d: int):
    tokens = tokenize(text)
    salt = 0
    while True:
        eff = seed if salt == 0 else mix64((seed + salt * GOLDEN) & MASK)
        if tokens:
            pooled = [0.0] * d
            for tok in tokens:
                v = token_vector(tok, eff, d)
                pooled = [a + b for a, b in zip(pooled, v)]
            pooled = [x / len(tokens) for x in pooled]
        else:
            pooled = token_vector("", eff, d)
        norm = math.sqrt(sum(x * x for x in pooled))
        if norm >= 1e-12:
            return [x / norm for x in pooled]
        salt += 1


if __name__ == "__main__":
    for text, seed, d in [("trump", 42, 8), ("", 42, 8), ("Trump and Melania", 7, 4)]:
        vec = toy_encode(text, seed, d)
        print(f'text={text!r} seed={seed} d={d}')
        print("  [" + ", ".join(f"{x:.17g}" for x in vec) + "]")
