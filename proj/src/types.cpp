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

#include "mdecode/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mdecode {

Distribution Distribution::from_probs(std::vector<double> probs,
                                      double tolerance) {
  if (probs.empty()) {
    throw std::invalid_argument("distribution must be non-empty");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!std::isfinite(p) || p < 0.0) {
      std::ostringstream msg;
      msg << "probability at index " << i << " is invalid: " << p;
      throw std::invalid_argument(msg.str());
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    std::ostringstream msg;
    msg << "probabilities sum to " << sum << ", not 1";
    throw std::invalid_argument(msg.str());
  }
  for (double& p : probs) p /= sum;
  return Distribution(std::move(probs));
}

Distribution Distribution::from_logprobs(std::span<const double> logprobs) {
  if (logprobs.empty()) {
    throw std::invalid_argument("distribution must be non-empty");
  }
  double max_lp = -std::numeric_limits<double>::infinity();
  for (double lp : logprobs) {
    if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("logprob is NaN or +inf");
    }
    max_lp = std::max(max_lp, lp);
  }
  if (!std::isfinite(max_lp)) {
    throw std::invalid_argument("all logprobs are -inf");
  }
  std::vector<double> probs(logprobs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    probs[i] = std::exp(logprobs[i] - max_lp);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return Distribution(std::move(probs));
}

Distribution Distribution::uniform(std::size_t vocab_size) {
  if (vocab_size == 0) {
    throw std::invalid_argument("distribution must be non-empty");
  }
  return Distribution(std::vector<double>(vocab_size, 1.0 / static_cast<double>(vocab_size)));
}

TokenId Distribution::argmax() const {
  if (probs_.empty()) throw std::invalid_argument("argmax of empty distribution");
  // max_element returns the first maximum, which is the lowest id.
  const auto it = std::max_element(probs_.begin(), probs_.end());
  return static_cast<TokenId>(it - probs_.begin());
}

TokenSeq Distribution::top_n(std::size_t n) const {
  TokenSeq ids(probs_.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  const std::size_t take = std::min(n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                    [this](TokenId a, TokenId b) {
                      const double pa = probs_[static_cast<std::size_t>(a)];
                      const double pb = probs_[static_cast<std::size_t>(b)];
                      if (pa != pb) return pa > pb;
                      return a < b;
                    });
  ids.resize(take);
  return ids;
}

double Distribution::sum_error() const {
  double sum = 0.0;
  for (double p : probs_) sum += p;
  return std::abs(sum - 1.0);
}

std::string_view to_string(AcceptanceMode mode) {
  switch (mode) {
    case AcceptanceMode::kThreshold: return "threshold";
    case AcceptanceMode::kClamped: return "clamped";
    case AcceptanceMode::kStochastic: return "stochastic";
  }
  return "threshold";
}

std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::kGeneratedPlusOne: return "generated_plus_one";
    case WeightScheme::kFullContext: return "full_context";
  }
  return "generated_plus_one";
}

std::optional<AcceptanceMode> parse_acceptance_mode(std::string_view text) {
  if (text == "threshold") return AcceptanceMode::kThreshold;
  if (text == "clamped") return AcceptanceMode::kClamped;
  if (text == "stochastic") return AcceptanceMode::kStochastic;
  return std::nullopt;
}

std::optional<WeightScheme> parse_weight_scheme(std::string_view text) {
  if (text == "generated_plus_one" || text == "generated-plus-one") {
    return WeightScheme::kGeneratedPlusOne;
  }
  if (text == "full_context" || text == "full-context") {
    return WeightScheme::kFullContext;
  }
  return std::nullopt;
}

std::vector<std::string> validate_config(const DecodeConfig& config) {
  std::vector<std::string> errors;
  if (config.block_size_m < 1) errors.emplace_back("block_size_m must be ≥ 1");
  if (config.branch_n < 1) errors.emplace_back("branch_n must be ≥ 1");
  if (config.keep_k < 1) errors.emplace_back("keep_k must be ≥ 1");
  if (config.max_tokens < 1) errors.emplace_back("max_tokens must be ≥ 1");
  if (!(config.gamma0 >= 0.0 && config.gamma0 <= 1.0)) {
    errors.emplace_back("gamma0 out of [0,1]");
  }
  if (!(config.prob_floor > 0.0 && config.prob_floor <= 1e-3)) {
    errors.emplace_back("prob_floor out of (0, 1e-3]");
  }
  return errors;
}

void require_valid_config(const DecodeConfig& config) {
  const auto errors = validate_config(config);
  if (errors.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& e : errors) msg += " " + e + ";";
  throw std::invalid_argument(msg);
}

double token_weight(std::size_t generated_before, std::size_t prompt_len,
                    WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::kGeneratedPlusOne:
      return 1.0 / static_cast<double>(generated_before + 1);
    case WeightScheme::kFullContext: {
      const std::size_t denom = prompt_len + generated_before;
      if (denom == 0) {
        throw std::invalid_argument(
            "full_context weight undefined for an empty prompt and no generated tokens");
      }
      return 1.0 / static_cast<double>(denom);
    }
  }
  throw std::invalid_argument("unknown weight scheme");
}

double weighted_ratio_sum(std::span<const double> weights,
                          std::span<const double> ratios) {
  if (weights.size() != ratios.size()) {
    throw std::invalid_argument("weights and ratios differ in length");
  }
  double sum = 0.0;
  for (std::size_t s = 0; s < weights.size(); ++s) sum += weights[s] * ratios[s];
  return sum;
}

double resampled_ratio(const DecodeTrace& trace) {
  if (trace.final_tokens.empty()) {
    throw std::invalid_argument("resampled_ratio needs a non-empty output");
  }
  std::size_t remaining = trace.final_tokens.size();
  std::size_t revised = 0;
  for (const auto& block : trace.blocks) {
    const std::size_t len = std::min(block.emitted().size(), remaining);
    if (!block.accepted) revised += len;
    remaining -= len;
    if (remaining == 0) break;
  }
  return static_cast<double>(revised) / static_cast<double>(trace.final_tokens.size());
}

std::vector<std::string> check_block_report(const BlockReport& r, double gamma0,
                                            double tolerance) {
  std::vector<std::string> errors;
  const auto fail = [&](std::string what) {
    errors.push_back("block@" + std::to_string(r.start_index) + ": " + std::move(what));
  };
  if (r.weights.size() != r.tokens.size() || r.ratios.size() != r.tokens.size()) {
    fail("weights/ratios/tokens length mismatch");
    return errors;
  }
  double sum_w = 0.0;
  for (double w : r.weights) sum_w += w;
  for (double q : r.ratios) {
    if (!std::isfinite(q) || q < 0.0) fail("ratio not finite and non-negative");
  }
  if (std::abs(weighted_ratio_sum(r.weights, r.ratios) - r.r_beta) > tolerance) {
    fail("r_beta does not match weights and ratios");
  }
  if (std::abs(sum_w - r.sum_weights) > tolerance) fail("sum_weights mismatch");
  if (std::abs(gamma0 * r.sum_weights - r.threshold) > tolerance) {
    fail("threshold != gamma0 * sum_weights");
  }
  if (r.accepted == r.revised_tokens.has_value()) {
    fail("revised_tokens must be present exactly when the block was rejected");
  }
  return errors;
}

std::vector<std::string> check_trace(const DecodeTrace& trace, double gamma0,
                                     double tolerance) {
  std::vector<std::string> errors;
  TokenSeq rebuilt;
  std::size_t expected_start = 0;
  for (const auto& block : trace.blocks) {
    auto block_errors = check_block_report(block, gamma0, tolerance);
    errors.insert(errors.end(), block_errors.begin(), block_errors.end());
    if (block.start_index != expected_start) {
      errors.push_back("block start_index " + std::to_string(block.start_index) +
                       " does not follow previous blocks");
    }
    if (block.accepted || block.revised_tokens) {
      const auto& emitted = block.emitted();
      rebuilt.insert(rebuilt.end(), emitted.begin(), emitted.end());
      expected_start += emitted.size();
    }
  }
  if (rebuilt.size() < trace.final_tokens.size() ||
      !std::equal(trace.final_tokens.begin(), trace.final_tokens.end(), rebuilt.begin())) {
    errors.emplace_back("final_tokens is not a prefix of the concatenated blocks");
  }
  if (rebuilt.size() != trace.final_tokens.size()) {
    errors.emplace_back("final_tokens length differs from concatenated blocks");
  }
  if (!trace.final_tokens.empty()) {
    if (!(trace.wall_time_per_token > 0.0)) errors.emplace_back("wall_time_per_token not positive");
    if (trace.wall_time_per_token > 0.0 &&
        std::abs(trace.tokens_per_second * trace.wall_time_per_token / 1000.0 - 1.0) > 0.01) {
      errors.emplace_back("tokens_per_second inconsistent with wall_time_per_token");
    }
  }
  return errors;
}

}  // namespace mdecode
