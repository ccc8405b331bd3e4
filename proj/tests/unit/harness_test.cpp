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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mdecode/errors.hpp"
#include "mdecode/harness.hpp"
#include "mdecode/json_io.hpp"
#include "test_util.hpp"

using namespace mdecode;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mdecode_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<QaItem> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_jsonl_corpus(in, "mem.jsonl");
}

}  // namespace

TEST_CASE("corpus parsing") {
  const auto items = parse(
      "{\"id\":\"q1\",\"prompt\":\"who\",\"answers\":[\"Paris\"]}\n"
      "\n"
      "{\"id\":\"q2\",\"prompt\":\"what\",\"answers\":[\"x\",\"y\"]}\n");
  REQUIRE(items.size() == 2);
  CHECK(items[1].answers == std::vector<std::string>{"x", "y"});

  try {
    parse("{\"id\":\"q1\",\"prompt\":\"a\",\"answers\":[\"x\"]}\n{not json}\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("mem.jsonl:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("{\"id\":\"q1\",\"prompt\":\"a\"}\n"), ParseError);
  CHECK_THROWS_AS(parse("{\"id\":\"q1\",\"prompt\":\"a\",\"answers\":[\"x\"]}\n{\"id\":\"q1\",\"prompt\":\"b\",\"answers\":[\"x\"]}\n"),
                  ValidationError);
  CHECK_THROWS(load_jsonl_corpus("/nonexistent/corpus.jsonl"));
}

TEST_CASE("corpus round trip") {
  const std::vector<QaItem> corpus{{"a", "first prompt", {"one", "two"}}, {"b", "second \"quoted\"", {"x"}}};
  std::ostringstream out;
  write_jsonl_corpus(out, corpus);
  CHECK(parse(out.str()) == corpus);
}

TEST_CASE("exact match") {
  CHECK(normalize_answer("  The  Eiffel\tTower ") == "the eiffel tower");
  const std::vector<std::string> answers{"Eiffel Tower", "tour eiffel"};
  CHECK(exact_match("it is the eiffel   tower of course", answers));
  CHECK(exact_match("TOUR EIFFEL", answers));
  CHECK_FALSE(exact_match("eiffel", answers));
  CHECK_FALSE(exact_match("anything", std::vector<std::string>{}));

  // case and whitespace invariance
  std::mt19937_64 rng(5);
  const std::string base = "alpha beta gamma";
  for (int i = 0; i < 100; ++i) {
    std::string variant;
    for (char c : base) {
      if (c == ' ') {
        variant += std::string(1 + rng() % 3, rng() % 2 ? ' ' : '\t');
      } else {
        variant += rng() % 2 ? static_cast<char>(std::toupper(c)) : c;
      }
    }
    CHECK(exact_match(variant, std::vector<std::string>{"beta gamma"}));
    CHECK(normalize_answer(variant) == base);
  }
}

TEST_CASE("synthetic suite") {
  const auto suite = synth_hallucination_suite(3, 40, 16, 0.25);
  REQUIRE(suite.corpus.size() == 40);
  REQUIRE(suite.ground_truth.size() == 40);
  std::size_t perturbed = 0;
  for (const auto& truth : suite.ground_truth) perturbed += truth.perturbed ? 1 : 0;
  CHECK(perturbed == 10);
  CHECK(suite.edits.size() == 10);

  const auto& labels = suite.reference->vocab_labels();
  CHECK(labels[0] == "</s>");
  CHECK(suite.reference->eos_token() == TokenId{0});

  for (std::size_t i = 0; i < suite.corpus.size(); ++i) {
    const auto& item = suite.corpus[i];
    const auto& truth = suite.ground_truth[i];
    CHECK(item.id == truth.item_id);
    CHECK(tokenize_prompt(*suite.target, *suite.reference, item.prompt) == truth.prompt);
    CHECK(truth.answer.size() == 5);

    // Reference greedy gives the answer then eos.
    auto ref_out = greedy_decode(*suite.reference, truth.prompt, 16);
    TokenSeq expected = truth.answer;
    expected.push_back(0);
    CHECK(ref_out == expected);
    CHECK(exact_match(decode_tokens(*suite.reference, ref_out), item.answers));

    const auto target_out = greedy_decode(*suite.target, truth.prompt, 16);
    CHECK(exact_match(decode_tokens(*suite.target, target_out), item.answers) == !truth.perturbed);
    if (truth.perturbed) {
      CHECK(truth.position < 2);
      CHECK(truth.wrong_token != truth.correct_token);
      CHECK(truth.wrong_token > 1);
      CHECK(target_out[truth.position] == truth.wrong_token);
    }
  }

  // The flat target table is the same model as the wrapped one.
  std::mt19937_64 rng(1);
  for (const auto& truth : suite.ground_truth) {
    for (std::size_t j = 0; j <= truth.answer.size(); ++j) {
      TokenSeq ctx = truth.prompt;
      ctx.insert(ctx.end(), truth.answer.begin(), truth.answer.begin() + static_cast<std::ptrdiff_t>(j));
      const auto x = suite.target->next_distribution(ctx);
      const auto y = suite.target_table->next_distribution(ctx);
      for (std::size_t v = 0; v < x.size(); ++v) REQUIRE(std::abs(x.probs()[v] - y.probs()[v]) <= 1e-12);
    }
  }

  CHECK(synth_hallucination_suite(3, 40, 16, 0.25).ground_truth[7].wrong_token ==
        suite.ground_truth[7].wrong_token);
  CHECK_THROWS_AS(synth_hallucination_suite(0, 10, 3, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(synth_hallucination_suite(0, 10, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_hallucination_suite(0, 0, 8, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(synth_hallucination_suite(0, 10, 8, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("run_benchmark on a small suite") {
  const auto suite = synth_hallucination_suite(11, 20, 16, 0.5);
  DecodeConfig config;
  config.max_tokens = 16;

  BenchmarkOptions greedy_opts;
  greedy_opts.mode = DecodeMode::kGreedy;
  const auto greedy = run_benchmark(suite.corpus, *suite.target, *suite.reference, config, greedy_opts);
  CHECK(greedy.aggregates.em_rate == 0.5);
  CHECK(greedy.aggregates.mean_resampled_ratio == 0.0);

  BenchmarkOptions md_opts;
  std::size_t traces = 0;
  md_opts.on_trace = [&](const QaItem&, const DecodeTrace& t) {
    ++traces;
    CHECK(check_trace(t, config.gamma0).empty());
  };
  const auto md = run_benchmark(suite.corpus, *suite.target, *suite.reference, config, md_opts);
  CHECK(traces == 20);
  CHECK(md.aggregates.em_rate >= 0.9);
  CHECK(md.aggregates.mean_resampled_ratio > 0.0);
  CHECK(md.metadata.mode == DecodeMode::kMd);
  CHECK(md.metadata.config == config);

  md_opts.threads = 4;
  md_opts.on_trace = nullptr;
  const auto threaded = run_benchmark(suite.corpus, *suite.target, *suite.reference, config, md_opts);
  for (std::size_t i = 0; i < md.items.size(); ++i) {
    CHECK(threaded.items[i].id == md.items[i].id);
    CHECK(threaded.items[i].prediction == md.items[i].prediction);
  }

  for (const auto& item : md.items) {
    CHECK(item.ms_per_token > 0.0);
    CHECK(item.resampled_ratio >= 0.0);
    CHECK(item.resampled_ratio <= 1.0);
  }
}

TEST_CASE("benchmark stops at the first failing item") {
  const auto lm = mdecode::testing::table({0.5, 0.5});
  const std::vector<QaItem> corpus{{"ok", "a b", {"x"}}, {"bad", "a z", {"x"}}};
  try {
    run_benchmark(corpus, *lm, *lm, DecodeConfig{}, BenchmarkOptions{});
    FAIL("expected BenchmarkItemError");
  } catch (const BenchmarkItemError& e) {
    CHECK(e.item_id() == "bad");
  }
}

TEST_CASE("aggregates") {
  std::vector<ItemRecord> items(4);
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].exact_match = i % 2 == 0;
    items[i].ms_per_token = static_cast<double>(i + 1);
    items[i].resampled_ratio = 0.25 * static_cast<double>(i);
  }
  const auto a = aggregate(items);
  CHECK(a.em_rate == 0.5);
  CHECK(a.mean_ms_per_token == 2.5);
  CHECK(a.tokens_per_second == 400.0);
  CHECK(a.mean_resampled_ratio == doctest::Approx(0.375));
}

TEST_CASE("reports: emit, load and markdown") {
  BenchmarkReport report;
  report.items.push_back({"q1", "paris", true, 0.27, 0.5, 1, 4});
  report.aggregates = aggregate(report.items);
  report.metadata.mode = DecodeMode::kMd;
  report.metadata.target = "table:t";
  report.metadata.reference = "table:r";
  report.metadata.timestamp = "2026-01-01T00:00:00Z";

  const auto dir = scratch_dir("reports");
  const auto json_path = (dir / "report.json").string();
  emit_report(report, json_path, ReportFormat::kJson);
  const auto loaded = load_reports(json_path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == report);

  std::vector<BenchmarkReport> two{report, report};
  two[1].metadata.mode = DecodeMode::kBon;
  emit_reports(two, json_path, ReportFormat::kJson);
  CHECK(load_reports(json_path) == two);

  const auto md = render_markdown(two);
  CHECK(md.find("| Method | EM | ms/token | tokens/s | Resampled% |") != std::string::npos);
  CHECK(md.find("| MD | 100.0 | 0.5000 | 2000.0 | 27.0% |") != std::string::npos);
  CHECK(md.find("BoN (n=8)") != std::string::npos);

  CHECK_THROWS_AS(emit_report(report, (dir / "missing" / "x.json").string(), ReportFormat::kJson),
                  std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("small oracle sweep") {
  const auto summary = run_oracle_check(5, 50);
  CHECK(summary.trials == 50);
  CHECK(summary.mismatches == 0);
  CHECK(summary.score_violations == 0);
  CHECK(summary.frontier_violations == 0);
}
