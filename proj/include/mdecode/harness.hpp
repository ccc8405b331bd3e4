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

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mdecode/backends.hpp"
#include "mdecode/engine.hpp"
#include "mdecode/types.hpp"

namespace mdecode {

// ---------------------------------------------------------------------------
// Corpus

struct QaItem {
  std::string id;
  std::string prompt;
  std::vector<std::string> answers;

  friend bool operator==(const QaItem&, const QaItem&) = default;
};

// One JSON object per line with keys id, prompt, answers. Blank lines are
// skipped. Throws ParseError naming the line, ValidationError on duplicate
// ids.
std::vector<QaItem> parse_jsonl_corpus(std::istream& in, const std::string& source = "<stream>");
std::vector<QaItem> load_jsonl_corpus(const std::string& path);
void write_jsonl_corpus(std::ostream& out, std::span<const QaItem> corpus);
void write_jsonl_corpus(const std::string& path, std::span<const QaItem> corpus);

// ---------------------------------------------------------------------------
// Exact match

// Lowercase, whitespace runs collapsed to one space, trimmed.
std::string normalize_answer(std::string_view text);
// True iff some normalized answer is a substring of the normalized prediction.
bool exact_match(std::string_view prediction, std::span<const std::string> answers);

// ---------------------------------------------------------------------------
// Synthetic hallucination suite
//
// Vocabulary: "</s>" (eos, id 0), "<q>" (question marker, id 1), then content
// tokens "t000", "t001", ... Each prompt is "<q>" plus a unique run of content
// tokens. The reference table continues every prompt greedily with its
// answer and then eos; anything off an answer path falls to a default row
// whose argmax is eos. The target is the reference with one edit for a
// fixed fraction of items: at one of the first answer positions, a wrong
// content token is boosted to `boosted_prob`.

struct SynthGroundTruth {
  std::string item_id;
  TokenSeq prompt;
  TokenSeq answer;
  bool perturbed = false;
  std::size_t position = 0;  // index into answer of the boosted step
  TokenId correct_token = 0;
  TokenId wrong_token = 0;
};

struct SynthSuite {
  std::vector<QaItem> corpus;
  std::shared_ptr<const TableLm> reference;
  BackendPtr target;  // perturb_backend(reference, edits)
  std::shared_ptr<const TableLm> target_table;  // the same model as a flat table
  std::vector<PerturbationEdit> edits;
  std::vector<SynthGroundTruth> ground_truth;
};

struct SynthOptions {
  std::size_t answer_length = 5;
  // The boosted step is drawn from answer positions [0, critical_positions).
  std::size_t critical_positions = 2;
  double reference_confidence = 0.6;  // reference mass on the correct token
  double default_eos_prob = 0.5;      // default-row mass on eos
};

// Throws std::invalid_argument unless vocab_size ≥ 4, size ≥ 1,
// error_rate ∈ (0,1) and boosted_prob ∈ (0,1). Exactly
// round(error_rate * size) items are perturbed.
SynthSuite synth_hallucination_suite(std::uint64_t seed, std::size_t size, std::size_t vocab_size,
                                     double error_rate, double boosted_prob = 0.9,
                                     const SynthOptions& options = {});

// ---------------------------------------------------------------------------
// Benchmark

enum class DecodeMode { kMd, kGreedy, kBon };
std::string_view to_string(DecodeMode mode);
std::optional<DecodeMode> parse_decode_mode(std::string_view text);

struct ItemRecord {
  std::string id;
  std::string prediction;
  bool exact_match = false;
  double resampled_ratio = 0.0;
  double ms_per_token = 0.0;
  std::size_t blocks_rejected = 0;
  std::size_t num_tokens = 0;

  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

struct BenchmarkAggregates {
  double em_rate = 0.0;
  double mean_ms_per_token = 0.0;
  double tokens_per_second = 0.0;  // 1000 / mean_ms_per_token
  double mean_resampled_ratio = 0.0;

  friend bool operator==(const BenchmarkAggregates&, const BenchmarkAggregates&) = default;
};

struct RunMetadata {
  DecodeMode mode = DecodeMode::kMd;
  DecodeConfig config;
  std::string target;
  std::string reference;
  std::uint64_t seed = 0;
  std::string timestamp;
  std::size_t bon_n = 8;
  double bon_temperature = 0.7;

  friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

struct BenchmarkReport {
  std::vector<ItemRecord> items;
  BenchmarkAggregates aggregates;
  RunMetadata metadata;

  friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

struct BenchmarkOptions {
  DecodeMode mode = DecodeMode::kMd;
  std::size_t bon_n = 8;
  double bon_temperature = 0.7;
  // Items decoded concurrently; each item is still one single-threaded session.
  int threads = 1;
  Execution revision_execution = Execution::kSerial;
  // Called with each md trace, in item order, after the run.
  std::function<void(const QaItem&, const DecodeTrace&)> on_trace;
};

// Thrown when an item fails; the run stops at the first failing item.
class BenchmarkItemError : public std::runtime_error {
 public:
  BenchmarkItemError(std::string item_id, const std::string& what)
      : std::runtime_error("item '" + item_id + "': " + what), item_id_(std::move(item_id)) {}
  const std::string& item_id() const { return item_id_; }

 private:
  std::string item_id_;
};

BenchmarkAggregates aggregate(std::span<const ItemRecord> items);

BenchmarkReport run_benchmark(std::span<const QaItem> corpus, const LmBackend& target,
                              const LmBackend& reference, const DecodeConfig& config,
                              const BenchmarkOptions& options);

// Prompt text to tokens: labels of the target, else of the reference, else
// whitespace-separated integer ids.
TokenSeq tokenize_prompt(const LmBackend& target, const LmBackend& reference, std::string_view text);

enum class ReportFormat { kJson, kMarkdown };
std::optional<ReportFormat> parse_report_format(std::string_view text);

// JSON: a single report object, or an array when several reports are given.
// Markdown: one table row per report. Throws std::runtime_error naming the
// path on I/O failure.
void emit_report(const BenchmarkReport& report, const std::string& out_path, ReportFormat format);
void emit_reports(std::span<const BenchmarkReport> reports, const std::string& out_path,
                  ReportFormat format);
std::string render_markdown(std::span<const BenchmarkReport> reports);
std::vector<BenchmarkReport> load_reports(const std::string& path);

// ---------------------------------------------------------------------------
// Random instances and the oracle sweep

// Random conditional table with Dirichlet(1) rows. eos, when requested, is id 0.
std::shared_ptr<const TableLm> random_table_lm(std::mt19937_64& rng, std::size_t vocab_size,
                                               std::size_t n_rows, std::size_t max_suffix_len,
                                               bool with_eos);

struct RevisionInstance {
  std::shared_ptr<const TableLm> target;
  std::shared_ptr<const TableLm> reference;
  TokenSeq prompt;
  TokenSeq generated_prefix;
  DecodeConfig config;  // keep_k == branch_n ^ block_size_m
};

// vocab ∈ [2,8], m ∈ [1,3], N ∈ [1,3], K = N^m.
RevisionInstance random_revision_instance(std::mt19937_64& rng);

struct DecodeInstance {
  BackendPtr target;
  BackendPtr reference;  // same vocabulary, different model
  TokenSeq prompt;
  std::string kind;      // "table" or "ngram"
};

// Alternates table and n-gram backends by `index`.
DecodeInstance random_decode_instance(std::mt19937_64& rng, std::size_t index);

struct OracleCheckSummary {
  std::size_t trials = 0;
  std::size_t mismatches = 0;
  std::size_t score_violations = 0;  // stored score vs recomputation > 1e-12
  std::size_t frontier_violations = 0;
  std::vector<std::string> details;
};

// revise_block with K = N^m against exhaustive_revision_oracle on `trials`
// random instances.
OracleCheckSummary run_oracle_check(std::uint64_t seed, std::size_t trials);

}  // namespace mdecode
