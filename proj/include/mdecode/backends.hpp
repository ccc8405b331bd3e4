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

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mdecode/types.hpp"

namespace mdecode {

// A next-token model. Implementations are immutable after construction, so
// a single instance may be queried concurrently from many decode sessions.
class LmBackend {
 public:
  virtual ~LmBackend() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::optional<TokenId> eos_token() const = 0;
  // One label per token id, or empty when the backend has no surface forms.
  virtual const std::vector<std::string>& vocab_labels() const;
  // Short identifier recorded in benchmark metadata.
  virtual std::string describe() const = 0;

  // Throws std::invalid_argument if any context token is out of range.
  Distribution next_distribution(std::span<const TokenId> context) const;

 protected:
  virtual Distribution do_next_distribution(std::span<const TokenId> context) const = 0;
};

using BackendPtr = std::shared_ptr<const LmBackend>;

bool ends_with(std::span<const TokenId> context, std::span<const TokenId> suffix);

struct TableRow {
  TokenSeq suffix;
  Distribution probs;
};

// Explicit conditional table. A context uses the row with the longest
// matching suffix, falling back to the default row.
class TableLm final : public LmBackend {
 public:
  TableLm(std::vector<std::string> labels, Distribution default_row,
          std::vector<TableRow> rows, std::optional<TokenId> eos);

  std::size_t vocab_size() const override { return labels_.size(); }
  std::optional<TokenId> eos_token() const override { return eos_; }
  const std::vector<std::string>& vocab_labels() const override { return labels_; }
  std::string describe() const override;

  const Distribution& default_row() const { return default_row_; }
  const std::vector<TableRow>& rows() const { return rows_; }

  // Same table with the rows whose suffix matches one of `replacements`
  // swapped out; unmatched replacements are appended.
  TableLm with_rows(std::span<const TableRow> replacements) const;

 protected:
  Distribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  std::vector<std::string> labels_;
  Distribution default_row_;
  std::vector<TableRow> rows_;
  std::map<TokenSeq, std::size_t> index_;
  std::size_t longest_suffix_ = 0;
  std::optional<TokenId> eos_;
};

// Table spec documents: {"vocab":[...], "default":[...],
// "rows":[{"suffix":[labels], "probs":[...]}], "eos": label?}.
// Rows must sum to 1 within 1e-6; duplicate suffixes are rejected.
// Throws ParseError.
std::shared_ptr<const TableLm> table_lm_from_spec(const nlohmann::json& spec);
std::shared_ptr<const TableLm> table_lm_from_file(const std::string& path);
nlohmann::json table_lm_to_spec(const TableLm& table);

// Add-k smoothed n-gram model over whitespace tokens.
class NgramLm final : public LmBackend {
 public:
  NgramLm(std::vector<std::string> labels, std::size_t order, double add_k,
          const TokenSeq& corpus, std::optional<TokenId> eos);

  std::size_t vocab_size() const override { return labels_.size(); }
  std::optional<TokenId> eos_token() const override { return eos_; }
  const std::vector<std::string>& vocab_labels() const override { return labels_; }
  std::string describe() const override;

  std::size_t order() const { return order_; }
  // Largest number of times any history was observed.
  std::size_t max_context_count() const;

 protected:
  Distribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  struct HistoryCounts {
    std::vector<double> next;
    double total = 0.0;
  };
  std::vector<std::string> labels_;
  std::size_t order_;
  double add_k_;
  std::map<TokenSeq, HistoryCounts> counts_;
  std::optional<TokenId> eos_;
};

// Vocabulary is the distinct whitespace tokens in first-appearance order.
// A history is the last min(n-1, |context|) tokens. A history never seen
// with add_k == 0 yields the uniform distribution.
std::shared_ptr<const NgramLm> ngram_lm_train(std::string_view corpus_text,
                                              std::size_t n, double add_k,
                                              std::optional<std::string> eos_label = std::nullopt);

struct PerturbationEdit {
  TokenSeq match_context_suffix;  // empty matches every context
  TokenId boosted_token = 0;
  double boosted_prob = 0.9;
};

// Wraps a base model and, at contexts ending in an edit's suffix, moves the
// boosted token to boosted_prob and rescales the other tokens proportionally.
class PerturbedLm final : public LmBackend {
 public:
  // Throws std::invalid_argument for out-of-range edits and when two edits
  // can match the same context.
  PerturbedLm(BackendPtr base, std::vector<PerturbationEdit> edits);

  std::size_t vocab_size() const override { return base_->vocab_size(); }
  std::optional<TokenId> eos_token() const override { return base_->eos_token(); }
  const std::vector<std::string>& vocab_labels() const override { return base_->vocab_labels(); }
  std::string describe() const override;

  const std::vector<PerturbationEdit>& edits() const { return edits_; }
  const PerturbationEdit* matching_edit(std::span<const TokenId> context) const;

  static Distribution apply(const Distribution& base, TokenId boosted, double boosted_prob);

 protected:
  Distribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  BackendPtr base_;
  std::vector<PerturbationEdit> edits_;
};

BackendPtr perturb_backend(BackendPtr base, std::vector<PerturbationEdit> edits);

// Whitespace tokenization against a backend's labels. Throws ValidationError
// on an unknown word or when the backend has no labels.
TokenSeq encode_words(const LmBackend& backend, std::string_view text);
// Labels joined by single spaces, eos dropped. Backends without labels
// render ids as decimal numbers.
std::string decode_tokens(const LmBackend& backend, std::span<const TokenId> tokens);

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace mdecode
