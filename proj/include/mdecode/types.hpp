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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdecode {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Next-token probabilities over a backend's vocabulary. Always non-negative
// and normalized; construction goes through the validating factories.
class Distribution {
 public:
  Distribution() = default;

  // Rejects negative or non-finite entries and sums further than `tolerance`
  // from 1, then renormalizes.
  static Distribution from_probs(std::vector<double> probs,
                                 double tolerance = 1e-6);
  // exp + renormalize. Entries may be -inf; at least one must be finite.
  static Distribution from_logprobs(std::span<const double> logprobs);
  static Distribution uniform(std::size_t vocab_size);

  std::size_t size() const { return probs_.size(); }
  bool empty() const { return probs_.empty(); }
  double prob(TokenId id) const { return probs_.at(static_cast<std::size_t>(id)); }
  std::span<const double> probs() const { return probs_; }

  // Highest probability, ties to the lowest id.
  TokenId argmax() const;
  // The min(n, size) most probable ids, descending probability then
  // ascending id.
  TokenSeq top_n(std::size_t n) const;
  // |sum - 1|.
  double sum_error() const;

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

enum class AcceptanceMode { kThreshold, kClamped, kStochastic };
enum class WeightScheme { kGeneratedPlusOne, kFullContext };

std::string_view to_string(AcceptanceMode mode);
std::string_view to_string(WeightScheme scheme);
// Accept both the snake_case names used in JSON and the dashed CLI spelling.
std::optional<AcceptanceMode> parse_acceptance_mode(std::string_view text);
std::optional<WeightScheme> parse_weight_scheme(std::string_view text);

struct DecodeConfig {
  std::size_t block_size_m = 3;
  std::size_t branch_n = 2;
  std::size_t keep_k = 2;
  double gamma0 = 0.8;
  std::size_t max_tokens = 64;
  AcceptanceMode acceptance_mode = AcceptanceMode::kThreshold;
  WeightScheme weight_scheme = WeightScheme::kGeneratedPlusOne;
  double prob_floor = 1e-10;
  std::uint64_t seed = 0;

  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

// Every violated constraint, human readable; empty means the config is valid.
std::vector<std::string> validate_config(const DecodeConfig& config);
// Throws std::invalid_argument listing all violations.
void require_valid_config(const DecodeConfig& config);

// Weight of a scored token that has `generated_before` generated tokens in
// front of it. Strictly decreasing in generated_before.
double token_weight(std::size_t generated_before, std::size_t prompt_len,
                    WeightScheme scheme);

// Left-to-right sum of weights[s] * ratios[s].
double weighted_ratio_sum(std::span<const double> weights,
                          std::span<const double> ratios);

struct BlockReport {
  std::size_t start_index = 0;
  TokenSeq tokens;
  std::vector<double> weights;
  std::vector<double> ratios;
  double r_beta = 0.0;
  double sum_weights = 0.0;
  double threshold = 0.0;
  bool accepted = false;
  std::optional<TokenSeq> revised_tokens;
  std::size_t revision_paths_explored = 0;

  // Tokens this block contributed to the output.
  const TokenSeq& emitted() const { return accepted ? tokens : *revised_tokens; }

  friend bool operator==(const BlockReport&, const BlockReport&) = default;
};

struct DecodeTrace {
  TokenSeq prompt;
  std::vector<BlockReport> blocks;
  TokenSeq final_tokens;
  std::size_t target_model_calls = 0;
  std::size_t reference_model_calls = 0;
  double wall_time_per_token = 0.0;  // ms
  double tokens_per_second = 0.0;

  friend bool operator==(const DecodeTrace&, const DecodeTrace&) = default;
};

// Fraction of final tokens that came out of revised blocks.
double resampled_ratio(const DecodeTrace& trace);

// Invariant checks used by tests and the acceptance suite. Each returns a
// list of violations; empty means consistent.
std::vector<std::string> check_block_report(const BlockReport& report,
                                            double gamma0,
                                            double tolerance = 1e-12);
std::vector<std::string> check_trace(const DecodeTrace& trace, double gamma0,
                                     double tolerance = 1e-12);

}  // namespace mdecode
