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

#include "mdecode/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdecode {

namespace {

void require_shared_vocab(const LmBackend& target, const LmBackend& reference) {
  if (target.vocab_size() != reference.vocab_size()) {
    throw std::invalid_argument("target vocab_size " + std::to_string(target.vocab_size()) +
                                " differs from reference vocab_size " +
                                std::to_string(reference.vocab_size()));
  }
}

// Core scoring loop. `target_prob(s, context)` supplies p_target for position s.
template <typename TargetProb>
BlockReport score_positions(const LmBackend& reference, std::span<const TokenId> prompt,
                            std::span<const TokenId> generated_prefix,
                            std::span<const TokenId> block, const DecodeConfig& config,
                            TargetProb&& target_prob) {
  BlockReport report;
  report.start_index = generated_prefix.size();
  report.tokens.assign(block.begin(), block.end());
  report.weights.reserve(block.size());
  report.ratios.reserve(block.size());

  TokenSeq context;
  context.reserve(prompt.size() + generated_prefix.size() + block.size());
  context.insert(context.end(), prompt.begin(), prompt.end());
  context.insert(context.end(), generated_prefix.begin(), generated_prefix.end());

  for (std::size_t s = 0; s < block.size(); ++s) {
    const double p_ref = reference.next_distribution(context).prob(block[s]);
    const double p_tgt = target_prob(s, context);
    report.ratios.push_back(probability_ratio(p_ref, p_tgt, config.prob_floor));
    report.weights.push_back(token_weight(generated_prefix.size() + s, prompt.size(), config.weight_scheme));
    context.push_back(block[s]);
  }
  report.r_beta = weighted_ratio_sum(report.weights, report.ratios);
  report.sum_weights = 0.0;
  for (double w : report.weights) report.sum_weights += w;
  report.threshold = config.gamma0 * report.sum_weights;
  return report;
}

void require_block_shape(std::span<const TokenId> block, const DecodeConfig& config) {
  if (block.empty()) throw std::invalid_argument("cannot score an empty block");
  if (block.size() > config.block_size_m) {
    throw std::invalid_argument("block of " + std::to_string(block.size()) + " tokens exceeds block_size_m " +
                                std::to_string(config.block_size_m));
  }
}

}  // namespace

double probability_ratio(double reference_prob, double target_prob, double prob_floor) {
  const double p_ref = std::max(reference_prob, prob_floor);
  const double p_tgt = std::max(target_prob, prob_floor);
  return std::exp(std::log(p_ref) - std::log(p_tgt));
}

BlockReport block_score(const LmBackend& target, const LmBackend& reference,
                        std::span<const TokenId> prompt, std::span<const TokenId> generated_prefix,
                        std::span<const TokenId> block, const DecodeConfig& config) {
  require_shared_vocab(target, reference);
  require_block_shape(block, config);
  return score_positions(reference, prompt, generated_prefix, block, config,
                         [&](std::size_t s, const TokenSeq& context) {
                           return target.next_distribution(context).prob(block[s]);
                         });
}

BlockReport score_drafted_block(const LmBackend& reference, std::span<const TokenId> prompt,
                                std::span<const TokenId> generated_prefix,
                                std::span<const TokenId> block, std::span<const double> target_probs,
                                const DecodeConfig& config) {
  require_block_shape(block, config);
  if (target_probs.size() != block.size()) {
    throw std::invalid_argument("target_probs length differs from block length");
  }
  return score_positions(reference, prompt, generated_prefix, block, config,
                         [&](std::size_t s, const TokenSeq&) { return target_probs[s]; });
}

double normalized_sequence_score(const LmBackend& target, const LmBackend& reference,
                                 std::span<const TokenId> prompt, std::span<const TokenId> response,
                                 const DecodeConfig& config) {
  require_shared_vocab(target, reference);
  if (response.empty()) throw std::invalid_argument("cannot score an empty response");
  const auto report = score_positions(reference, prompt, {}, response, config,
                                      [&](std::size_t s, const TokenSeq& context) {
                                        return target.next_distribution(context).prob(response[s]);
                                      });
  return report.r_beta / report.sum_weights;
}

bool accept_block(BlockReport& report, const DecodeConfig& config, std::mt19937_64& rng) {
  report.threshold = config.gamma0 * report.sum_weights;
  bool accepted = false;
  switch (config.acceptance_mode) {
    case AcceptanceMode::kThreshold:
      accepted = report.r_beta >= report.threshold;
      break;
    case AcceptanceMode::kClamped:
      accepted = std::min(1.0, report.r_beta) >= report.threshold;
      break;
    case AcceptanceMode::kStochastic: {
      const double p = std::min(1.0, report.r_beta / report.sum_weights);
      accepted = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
      break;
    }
  }
  report.accepted = accepted;
  return accepted;
}

}  // namespace mdecode
