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
#include <span>
#include <vector>

#include "mdecode/backends.hpp"
#include "mdecode/types.hpp"

namespace mdecode {

// A partial revision path. `score` accumulates weight * ratio over
// new_tokens, in order, exactly as block_score does.
struct PathCandidate {
  TokenSeq new_tokens;
  double score = 0.0;
  bool terminated = false;
  std::size_t insertion_rank = 0;

  friend bool operator==(const PathCandidate&, const PathCandidate&) = default;
};

struct RevisionStats {
  std::size_t paths_created = 0;
  std::size_t paths_pruned = 0;
  std::size_t target_calls = 0;
  std::size_t reference_calls = 0;
};

struct RevisionResult {
  TokenSeq tokens;
  double score = 0.0;
  RevisionStats stats;
};

// How the frontier of one layer is expanded. Both policies give identical
// results; kParallel spreads path expansions over OpenMP threads.
enum class Execution { kSerial, kParallel };

// Children of `path` for the n most probable target tokens, ties to the
// lowest id. Children take consecutive insertion ranks starting at
// `next_rank`, which is advanced. Throws InvalidState if `path` is terminated
// or already holds block_size_m tokens.
std::vector<PathCandidate> expand_path(const LmBackend& target, const LmBackend& reference,
                                       std::span<const TokenId> prompt,
                                       std::span<const TokenId> generated_prefix,
                                       const PathCandidate& path, std::size_t n,
                                       const DecodeConfig& config, std::size_t& next_rank);

// Relative band inside which two path scores count as equal. Scores that
// agree in exact arithmetic can differ in the last bits once computed.
inline constexpr double kScoreTieTolerance = 1e-12;
bool scores_tied(double a, double b);

// The min(k, |candidates|) best candidates by descending score, then
// ascending insertion_rank among tied scores. Throws std::invalid_argument
// on empty input or k == 0.
std::vector<PathCandidate> fact_check(std::vector<PathCandidate> candidates, std::size_t k);

// Layer-by-layer top-N expansion with top-K pruning for block_size_m layers,
// then the single best path.
RevisionResult revise_block(const LmBackend& target, const LmBackend& reference,
                            std::span<const TokenId> prompt,
                            std::span<const TokenId> generated_prefix, const DecodeConfig& config,
                            Execution execution = Execution::kSerial);

struct OracleResult {
  TokenSeq tokens;
  double score = 0.0;
  std::size_t paths_enumerated = 0;
};

inline constexpr std::size_t kOracleMaxLeaves = 10'000;

// Brute force over every path reachable through the target's top-N tokens
// (no pruning). Among tied scores the shorter path wins, then the earlier
// choice in top-N order at the first differing step. Throws ResourceError when
// N^m > kOracleMaxLeaves.
OracleResult exhaustive_revision_oracle(const LmBackend& target, const LmBackend& reference,
                                        std::span<const TokenId> prompt,
                                        std::span<const TokenId> generated_prefix,
                                        const DecodeConfig& config);

// Re-scores a finished path from scratch through block-level scoring.
double recompute_path_score(const LmBackend& target, const LmBackend& reference,
                            std::span<const TokenId> prompt,
                            std::span<const TokenId> generated_prefix,
                            std::span<const TokenId> tokens, const DecodeConfig& config);

}  // namespace mdecode
