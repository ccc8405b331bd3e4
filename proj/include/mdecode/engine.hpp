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
#include <random>
#include <span>
#include <vector>

#include "mdecode/backends.hpp"
#include "mdecode/revision.hpp"
#include "mdecode/types.hpp"

namespace mdecode {

struct DecodeResult {
  TokenSeq tokens;
  DecodeTrace trace;
};

// Monitored decoding: draft up to m tokens greedily from the target, score
// them against the reference, keep the block if accepted and otherwise
// replace it with revise_block's output. Stops once eos is emitted or
// max_tokens tokens exist. Revised blocks are not re-monitored.
DecodeResult md_decode(const LmBackend& target, const LmBackend& reference,
                       std::span<const TokenId> prompt, const DecodeConfig& config,
                       Execution execution = Execution::kSerial);

// Repeated argmax (ties to the lowest id); eos is kept as the last token.
TokenSeq greedy_decode(const LmBackend& backend, std::span<const TokenId> prompt,
                       std::size_t max_tokens);

struct BestOfNResult {
  TokenSeq tokens;
  std::vector<double> scores;  // normalized monitor score per candidate
  std::vector<TokenSeq> candidates;
  std::size_t chosen = 0;
};

// Temperatures below this are treated as argmax sampling.
inline constexpr double kGreedyTemperature = 1e-6;

// Samples n full responses from the target at `temperature` and keeps the
// one with the highest r_beta / Σw (ties to the lowest index).
BestOfNResult best_of_n_decode(const LmBackend& target, const LmBackend& reference,
                               std::span<const TokenId> prompt, std::size_t n,
                               double temperature, const DecodeConfig& config,
                               std::uint64_t seed);

// Index of the highest score, ties to the lowest index.
std::size_t best_candidate_index(std::span<const double> scores);

// Draws one token from p^(1/temperature), renormalized.
TokenId sample_with_temperature(const Distribution& dist, double temperature,
                                std::mt19937_64& rng);

}  // namespace mdecode
