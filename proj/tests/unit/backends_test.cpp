/* Copyright 2026 The mdecode Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <map>
#include <random>

#include "doctest.h"
#include "mdecode/backends.hpp"
#include "mdecode/errors.hpp"
#include "test_util.hpp"

using namespace mdecode;
using mdecode::testing::row;
using mdecode::testing::table;

namespace {

void check_probs(const Distribution& d, std::vector<double> expected, double tol = 1e-12) {
  REQUIRE(d.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(d.probs()[i] == doctest::Approx(expected[i]).epsilon(tol));
  }
}

TokenSeq random_context(std::mt19937_64& rng, std::size_t vocab, std::size_t max_len) {
  TokenSeq ctx(rng() % (max_len + 1));
  for (auto& t : ctx) t = static_cast<TokenId>(rng() % vocab);
  return ctx;
}

void check_distribution_invariants(const LmBackend& backend, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 1000; ++i) {
    const auto ctx = random_context(rng, backend.vocab_size(), 8);
    const auto d = backend.next_distribution(ctx);
    REQUIRE(d.size() == backend.vocab_size());
    for (double p : d.probs()) REQUIRE(p >= 0.0);
    REQUIRE(d.sum_error() <= 1e-9);
    REQUIRE(backend.next_distribution(ctx) == d);  // deterministic
  }
}

}  // namespace

TEST_CASE("table backend lookups") {
  SUBCASE("constant row") {
    const auto lm = table({0.7, 0.2, 0.1});
    check_probs(lm->next_distribution(TokenSeq{}), {0.7, 0.2, 0.1});
    check_probs(lm->next_distribution(TokenSeq{2, 1, 0}), {0.7, 0.2, 0.1});
  }
  SUBCASE("suffix-keyed row") {
    const auto lm = table({0.7, 0.2, 0.1}, {row({2}, {0.1, 0.1, 0.8})});
    check_probs(lm->next_distribution(TokenSeq{0, 2}), {0.1, 0.1, 0.8});
    check_probs(lm->next_distribution(TokenSeq{2, 0}), {0.7, 0.2, 0.1});
  }
  SUBCASE("longest suffix wins") {
    // rows keyed [a] and [b,a]
    const auto lm = table({0.7, 0.2, 0.1}, {row({0}, {0.2, 0.2, 0.6}), row({1, 0}, {0.5, 0.25, 0.25})});
    check_probs(lm->next_distribution(TokenSeq{2, 1, 0}), {0.5, 0.25, 0.25});
    check_probs(lm->next_distribution(TokenSeq{2, 0}), {0.2, 0.2, 0.6});
  }
  SUBCASE("out-of-range context") {
    const auto lm = table({0.5, 0.5});
    CHECK_THROWS_AS(lm->next_distribution(TokenSeq{2}), std::invalid_argument);
    CHECK_THROWS_AS(lm->next_distribution(TokenSeq{-1}), std::invalid_argument);
  }
}

TEST_CASE("table_lm_from_spec") {
  const auto spec = nlohmann::json::parse(R"({"vocab":["a","b","c"],"default":[0.7,0.2,0.1]})");
  const auto lm = table_lm_from_spec(spec);
  CHECK(lm->vocab_size() == 3);
  CHECK_FALSE(lm->eos_token().has_value());

  const auto with_rows = table_lm_from_spec(nlohmann::json::parse(R"({
    "vocab":["a","b","c"], "default":[0.7,0.2,0.1], "eos":"c",
    "rows":[{"suffix":["a"],"probs":[0.2,0.2,0.6]},{"suffix":["b","a"],"probs":[0.5,0.25,0.25]}]})"));
  CHECK(with_rows->eos_token() == TokenId{2});
  check_probs(with_rows->next_distribution(TokenSeq{1, 0}), {0.5, 0.25, 0.25});

  CHECK_THROWS_AS(table_lm_from_spec(nlohmann::json::parse(R"({"vocab":["a","b"],"default":[0.5,0.6]})")),
                  ParseError);
  CHECK_THROWS_AS(table_lm_from_spec(nlohmann::json::parse(R"({
    "vocab":["a","b"], "default":[0.5,0.5],
    "rows":[{"suffix":["a"],"probs":[0.1,0.9]},{"suffix":["a"],"probs":[0.2,0.8]}]})")),
                  ParseError);
  CHECK_THROWS_AS(table_lm_from_spec(nlohmann::json::parse(R"({"vocab":["a","b"],"default":[1.0]})")), ParseError);
  CHECK_THROWS_AS(table_lm_from_spec(nlohmann::json::parse(R"({"vocab":["a","b"]})")), ParseError);
  CHECK_THROWS_AS(table_lm_from_spec(nlohmann::json::parse(R"({
    "vocab":["a","b"], "default":[0.5,0.5], "rows":[{"suffix":["z"],"probs":[0.5,0.5]}]})")),
                  ParseError);

  // spec -> table -> spec keeps the model
  const auto spec_once = table_lm_to_spec(*with_rows);
  const auto reloaded = table_lm_from_spec(spec_once);
  const auto spec_twice = table_lm_to_spec(*reloaded);
  CHECK(spec_twice.at("vocab") == spec_once.at("vocab"));
  CHECK(spec_twice.at("eos") == spec_once.at("eos"));
  CHECK(spec_twice.at("rows").size() == spec_once.at("rows").size());
  for (const TokenSeq& ctx : {TokenSeq{}, TokenSeq{0}, TokenSeq{1, 0}, TokenSeq{2, 2}}) {
    const auto want = with_rows->next_distribution(ctx);
    check_probs(reloaded->next_distribution(ctx), {want.probs().begin(), want.probs().end()}, 1e-15);
  }
}

TEST_CASE("ngram_lm_train") {
  // Independent hand count over "a b a b" for histories of length one.
  const std::vector<std::string> words{"a", "b", "a", "b"};
  std::map<std::pair<std::string, std::string>, double> pair_counts;
  std::map<std::string, double> history_counts;
  for (std::size_t i = 1; i < words.size(); ++i) {
    pair_counts[{words[i - 1], words[i]}] += 1.0;
    history_counts[words[i - 1]] += 1.0;
  }
  const double vocab = 2.0;
  const double p_b_given_a = (pair_counts[{"a", "b"}] + 1.0) / (history_counts["a"] + 1.0 * vocab);
  const double p_a_given_a = (pair_counts[{"a", "a"}] + 1.0) / (history_counts["a"] + 1.0 * vocab);
  CHECK(p_b_given_a == 0.75);
  CHECK(p_a_given_a == 0.25);

  const auto lm = ngram_lm_train("a b a b", 2, 1.0);
  REQUIRE(lm->vocab_size() == 2);
  CHECK(lm->vocab_labels() == std::vector<std::string>{"a", "b"});
  check_probs(lm->next_distribution(TokenSeq{0}), {p_a_given_a, p_b_given_a});

  SUBCASE("unigram") {
    const auto uni = ngram_lm_train("a a a b", 1, 1.0);
    check_probs(uni->next_distribution(TokenSeq{1, 0}), {4.0 / 6.0, 2.0 / 6.0});
    check_probs(uni->next_distribution(TokenSeq{}), {4.0 / 6.0, 2.0 / 6.0});
  }
  SUBCASE("unseen history without smoothing is uniform") {
    const auto raw = ngram_lm_train("a b c", 2, 0.0);
    check_probs(raw->next_distribution(TokenSeq{2}), {1.0 / 3, 1.0 / 3, 1.0 / 3});
    check_probs(raw->next_distribution(TokenSeq{0}), {0.0, 1.0, 0.0});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ngram_lm_train("   \n ", 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ngram_lm_train("a b", 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ngram_lm_train("a b", 2, 1.0, "z"), std::invalid_argument);
  }
}

TEST_CASE("ngram smoothing lower bound") {
  const std::string corpus = "the cat sat on the mat the cat ate the rat on the mat";
  for (double add_k : {0.1, 0.5, 1.0}) {
    for (std::size_t n : {1u, 2u, 3u}) {
      const auto lm = ngram_lm_train(corpus, n, add_k);
      const double v = static_cast<double>(lm->vocab_size());
      const double bound = add_k / (static_cast<double>(lm->max_context_count()) + add_k * v);
      std::mt19937_64 rng(n);
      for (int i = 0; i < 300; ++i) {
        const auto d = lm->next_distribution(random_context(rng, lm->vocab_size(), 4));
        for (double p : d.probs()) REQUIRE(p >= bound * (1 - 1e-12));
      }
    }
  }
}

TEST_CASE("perturb_backend") {
  const auto base = table({0.1, 0.7, 0.2});

  SUBCASE("boost rescales the rest proportionally") {
    const auto lm = perturb_backend(base, {{{}, 0, 0.9}});
    const auto d = lm->next_distribution(TokenSeq{1});
    // 0.7 : 0.2 squeezed into the remaining 0.1
    check_probs(d, {0.9, 0.1 * 0.7 / 0.9, 0.1 * 0.2 / 0.9});
    CHECK(d.sum_error() <= 1e-9);
    CHECK(d.argmax() == 0);
    CHECK(base->next_distribution(TokenSeq{1}).argmax() == 1);
  }
  SUBCASE("empty edit list is the identity") {
    const auto lm = perturb_backend(base, {});
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
      const auto ctx = random_context(rng, 3, 5);
      CHECK(lm->next_distribution(ctx) == base->next_distribution(ctx));
    }
  }
  SUBCASE("conflicting edits") {
    CHECK_THROWS_AS(perturb_backend(base, {{{0, 1}, 2, 0.9}, {{1}, 0, 0.9}}), std::invalid_argument);
    CHECK_THROWS_AS(perturb_backend(base, {{{}, 2, 0.9}, {{1}, 0, 0.9}}), std::invalid_argument);
    CHECK_NOTHROW(perturb_backend(base, {{{0, 1}, 2, 0.9}, {{1, 1}, 0, 0.9}}));
  }
  SUBCASE("bad edits") {
    CHECK_THROWS_AS(perturb_backend(base, {{{}, 3, 0.9}}), std::invalid_argument);
    CHECK_THROWS_AS(perturb_backend(base, {{{}, 0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(perturb_backend(base, {{{7}, 0, 0.5}}), std::invalid_argument);
  }
  SUBCASE("boosting a certain token spreads the remainder evenly") {
    const auto certain = table({0.0, 1.0, 0.0});
    const auto d = PerturbedLm::apply(certain->default_row(), 1, 0.4);
    check_probs(d, {0.3, 0.4, 0.3});
  }
}

TEST_CASE("perturbation only changes matching contexts (exhaustive sweep)") {
  const auto base = table({0.5, 0.3, 0.2}, {row({1}, {0.2, 0.2, 0.6}), row({2, 0}, {0.1, 0.8, 0.1})});
  const std::vector<PerturbationEdit> edits{{{0, 1}, 2, 0.95}, {{2, 2}, 0, 0.6}};
  const auto lm = std::make_shared<const PerturbedLm>(base, edits);
  const std::size_t vocab = 3;
  std::size_t matched = 0;
  for (std::size_t len = 0; len <= 4; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= vocab;
    for (std::size_t code = 0; code < total; ++code) {
      TokenSeq ctx(len);
      std::size_t c = code;
      for (auto& t : ctx) {
        t = static_cast<TokenId>(c % vocab);
        c /= vocab;
      }
      const bool should_match = ends_with(ctx, edits[0].match_context_suffix) ||
                                ends_with(ctx, edits[1].match_context_suffix);
      const auto got = lm->next_distribution(ctx);
      const auto want = base->next_distribution(ctx);
      if (should_match) {
        ++matched;
        CHECK(got != want);
        CHECK(got.sum_error() <= 1e-9);
      } else {
        CHECK(got == want);
      }
    }
  }
  CHECK(matched > 0);
}

TEST_CASE("every backend satisfies the distribution invariants") {
  check_distribution_invariants(*table({0.7, 0.2, 0.1}, {row({0}, {0.0, 0.5, 0.5}), row({1, 2}, {1.0, 0.0, 0.0})}), 1);
  check_distribution_invariants(*ngram_lm_train("x y z x y y z z x", 3, 0.2), 2);
  check_distribution_invariants(*ngram_lm_train("x y z x y y z z x", 2, 0.0), 3);
  check_distribution_invariants(
      *perturb_backend(ngram_lm_train("x y z x y y z z x", 2, 0.5), {{{0}, 2, 0.9}, {{1, 1}, 0, 0.3}}), 4);
}

TEST_CASE("word encoding") {
  const auto lm = ngram_lm_train("paris is the capital </s>", 1, 1.0, "</s>");
  const auto tokens = encode_words(*lm, "  the capital\tis paris ");
  CHECK(tokens == TokenSeq{2, 3, 1, 0});
  CHECK(decode_tokens(*lm, TokenSeq{0, 1, 4}) == "paris is");
  CHECK_THROWS_AS(encode_words(*lm, "london"), ValidationError);
}
