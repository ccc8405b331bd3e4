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

#include <random>
#include <span>

#include "mdecode/backends.hpp"
#include "mdecode/types.hpp"

namespace mdecode {

// Reference-to-target probability ratio with both sides floored at
// `prob_floor`, evaluated as exp(log p_ref - log p_target).
double probability_ratio(double reference_prob, double target_prob, double prob_floor);

// Scores `block` (appended after prompt ⧺ generated_prefix) with the weighted
// ratio monitor: per position s, context = prompt ⧺ generated_prefix ⧺ block[<s],
// weight = token_weight(|generated_prefix| + s, |prompt|, scheme).
// The returned report has accepted == false and no revision yet.
// Throws std::invalid_argument if the vocabularies differ or the block is
// empty or longer than block_size_m.
BlockReport block_score(const LmBackend& target, const LmBackend& reference,
                        std::span<const TokenId> prompt,
                        std::span<const TokenId> generated_prefix,
                        std::span<const TokenId> block, const DecodeConfig& config);

// As block_score, but reuses target probabilities already computed while
// drafting (target_probs[s] = p_target(block[s] | context_s)), so only the
// reference is queried.
BlockReport score_drafted_block(const LmBackend& reference,
                                std::span<const TokenId> prompt,
                                std::span<const TokenId> generated_prefix,
                                std::span<const TokenId> block,
                                std::span<const double> target_probs,
                                const DecodeConfig& config);

// Whole-response monitor score r_beta / Σw with no block-length cap.
double normalized_sequence_score(const LmBackend& target, const LmBackend& reference,
                                 std::span<const TokenId> prompt,
                                 std::span<const TokenId> response,
                                 const DecodeConfig& config);

// Sets report.threshold from config.gamma0, applies the configured
// acceptance rule and records it in report.accepted.
//   threshold:  r_beta >= gamma0 * Σw
//   clamped:    min(1, r_beta) >= gamma0 * Σw
//   stochastic: accept with probability min(1, r_beta / Σw)
bool accept_block(BlockReport& report, const DecodeConfig& config, std::mt19937_64& rng);

}  // namespace mdecode
