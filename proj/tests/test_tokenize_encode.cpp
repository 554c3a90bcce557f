#include <catch2/catch_amalgamated.hpp>

#include "melkit/tokenize.hpp"
#include "melkit/toy_encoder.hpp"

using namespace mel;

TEST_CASE("tokenize - empty text yields sentinels only") {
  const TokenSequence seq = tokenize("");
  REQUIRE(seq.tokens.size() == 2);
  CHECK(seq.tokens.front() == std::string(kStartToken));
  CHECK(seq.tokens.back() == std::string(kEndToken));
  CHECK(seq.content_size() == 0);
}

TEST_CASE("tokenize - casefolds and splits at whitespace/punctuation") {
  const TokenSequence seq = tokenize("Trump and Melania");
  const std::vector<std::string> expected{std::string(kStartToken), "trump", "and", "melania",
                                          std::string(kEndToken)};
  CHECK(seq.tokens == expected);
}

TEST_CASE("tokenize - punctuation separates, digits survive, utf8 stays whole") {
  CHECK(tokenize("Trump, gender: male, age: 50").content_size() == 5);
  const TokenSequence seq = tokenize("Luiz In\xc3\xa1" "cio Lula");
  REQUIRE(seq.content_size() == 3);
  CHECK(seq.tokens[2] == "in\xc3\xa1" "cio");
}

TEST_CASE("tokenize - deterministic") {
  const std::string text = "Golding with the President of Brazil, Lula .";
  CHECK(tokenize(text).tokens == tokenize(text).tokens);
}

TEST_CASE("end_of_nth_token - truncation boundaries") {
  CHECK(end_of_nth_token("a, b", 1) == 1);
  CHECK(end_of_nth_token("alpha beta", 1) == 5);
  CHECK(end_of_nth_token("alpha beta", 2) == 10);
  CHECK(end_of_nth_token("alpha beta", 5) == 10);
  CHECK(end_of_nth_token("", 3) == 0);
}

TEST_CASE("toy_encode - deterministic unit vectors") {
  const TokenSequence seq = tokenize("some mention text");
  const Eigen::VectorXd a = toy_encode(seq, 42, 16);
  const Eigen::VectorXd b = toy_encode(seq, 42, 16);
  CHECK(a == b);
  CHECK(std::abs(a.norm() - 1.0) < 1e-6);
  const Eigen::VectorXd c = toy_encode(seq, 43, 16);
  CHECK((a - c).norm() > 1e-3);  // seed changes the embedding
}

TEST_CASE("toy_encode - golden vector from the oracle script") {
  // tests/oracles/toy_encode_oracle.py, text='trump' seed=42 d=8
  const Eigen::VectorXd v = toy_encode(tokenize("trump"), 42, 8);
  const double expected[8] = {0.4731165634084819,    -0.26376536077880852, 0.46255973258126565,
                              -0.41036418687094717,  -0.054452548431333181, 0.47145626389565853,
                              -0.22084515482723793,  -0.22409731948883532};
  REQUIRE(v.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(v[i] == Catch::Approx(expected[i]).epsilon(0).margin(1e-12));
}

TEST_CASE("toy_encode - sentinel-only input uses the empty pseudo-token") {
  // tests/oracles/toy_encode_oracle.py, text='' seed=42 d=8
  const Eigen::VectorXd v = toy_encode(tokenize(""), 42, 8);
  CHECK(v[0] == Catch::Approx(-0.23380896643697749).epsilon(0).margin(1e-12));
  CHECK(v[7] == Catch::Approx(0.27796060464145889).epsilon(0).margin(1e-12));
}

TEST_CASE("toy_encode - golden multi-token vector") {
  // tests/oracles/toy_encode_oracle.py, text='Trump and Melania' seed=7 d=4
  const Eigen::VectorXd v = toy_encode(tokenize("Trump and Melania"), 7, 4);
  const double expected[4] = {0.040574090192644248, 0.57716183007765332, 0.6741485439133148,
                              0.45908790644713182};
  for (int i = 0; i < 4; ++i) CHECK(v[i] == Catch::Approx(expected[i]).epsilon(0).margin(1e-12));
}

TEST_CASE("toy_encode - rejects d below 2") {
  CHECK_THROWS_AS(toy_encode(tokenize("x"), 1, 1), std::invalid_argument);
}

TEST_CASE("tokenize/toy_encode - total and deterministic over random ascii") {
  RngStream rng(99);
  for (int iter = 0; iter < 200; ++iter) {
    std::string text;
    const std::size_t len = rng.next_below(24);
    for (std::size_t i = 0; i < len; ++i)
      text.push_back(static_cast<char>(32 + rng.next_below(95)));
    const TokenSequence seq = tokenize(text);
    REQUIRE(seq.tokens.size() >= 2);
    CHECK(seq.tokens.front() == std::string(kStartToken));
    CHECK(seq.tokens.back() == std::string(kEndToken));
    const Eigen::VectorXd v = toy_encode(seq, 5, 8);
    CHECK(std::abs(v.norm() - 1.0) < 1e-6);
    CHECK(toy_encode(tokenize(text), 5, 8) == v);
  }
}
