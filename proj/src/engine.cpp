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

#include "mdecode/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mdecode/monitor.hpp"

namespace mdecode {

namespace {

using Clock = std::chrono::steady_clock;

TokenSeq concat(std::span<const TokenId> a, std::span<const TokenId> b) {
  TokenSeq out;
  out.reserve(a.size() + b.size() + 1);
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool is_eos(const LmBackend& backend, TokenId token) {
  const auto eos = backend.eos_token();
  return eos && token == *eos;
}

}  // namespace

DecodeResult md_decode(const LmBackend& target, const LmBackend& reference,
                       std::span<const TokenId> prompt, const DecodeConfig& config,
                       Execution execution) {
  require_valid_config(config);
  if (target.vocab_size() != reference.vocab_size()) {
    throw std::invalid_argument("target and reference vocabularies differ");
  }
  const auto start = Clock::now();
  std::mt19937_64 rng(config.seed);

  DecodeResult result;
  auto& trace = result.trace;
  trace.prompt.assign(prompt.begin(), prompt.end());
  TokenSeq& generated = result.tokens;

  bool finished = false;
  while (!finished && generated.size() < config.max_tokens) {
    const std::size_t budget = std::min(config.block_size_m, config.max_tokens - generated.size());

    TokenSeq block;
    std::vector<double> target_probs;
    TokenSeq context = concat(prompt, generated);
    while (block.size() < budget) {
      const Distribution dist = target.next_distribution(context);
      ++trace.target_model_calls;
      const TokenId token = dist.argmax();
      block.push_back(token);
      target_probs.push_back(dist.prob(token));
      context.push_back(token);
      if (is_eos(target, token)) break;
    }

    BlockReport report = score_drafted_block(reference, prompt, generated, block, target_probs, config);
    trace.reference_model_calls += block.size();
    accept_block(report, config, rng);

    if (report.accepted) {
      generated.insert(generated.end(), block.begin(), block.end());
    } else {
      DecodeConfig revision_config = config;
      revision_config.block_size_m = budget;
      RevisionResult revision = revise_block(target, reference, prompt, generated, revision_config, execution);
      trace.target_model_calls += revision.stats.target_calls;
      trace.reference_model_calls += revision.stats.reference_calls;
      report.revision_paths_explored = revision.stats.paths_created;
      generated.insert(generated.end(), revision.tokens.begin(), revision.tokens.end());
      report.revised_tokens = std::move(revision.tokens);
    }
    finished = !generated.empty() && is_eos(target, generated.back());
    trace.blocks.push_back(std::move(report));
  }

  trace.final_tokens = generated;
  const double elapsed_ms =
      std::max(std::chrono::duration<double, std::milli>(Clock::now() - start).count(), 1e-6);
  const double n_tokens = static_cast<double>(std::max<std::size_t>(generated.size(), 1));
  trace.wall_time_per_token = elapsed_ms / n_tokens;
  trace.tokens_per_second = 1000.0 / trace.wall_time_per_token;
  return result;
}

TokenSeq greedy_decode(const LmBackend& backend, std::span<const TokenId> prompt,
                       std::size_t max_tokens) {
  TokenSeq context(prompt.begin(), prompt.end());
  TokenSeq out;
  while (out.size() < max_tokens) {
    const TokenId token = backend.next_distribution(context).argmax();
    out.push_back(token);
    context.push_back(token);
    if (is_eos(backend, token)) break;
  }
  return out;
}

std::size_t best_candidate_index(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("no candidates to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

TokenId sample_with_temperature(const Distribution& dist, double temperature, std::mt19937_64& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (temperature < kGreedyTemperature) return dist.argmax();
  const auto probs = dist.probs();
  // p^(1/T) relative to the max, computed in log space.
  double max_log = -std::numeric_limits<double>::infinity();
  for (double p : probs) {
    if (p > 0.0) max_log = std::max(max_log, std::log(p));
  }
  std::vector<double> weights(probs.size(), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) weights[i] = std::exp((std::log(probs[i]) - max_log) / temperature);
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return static_cast<TokenId>(pick(rng));
}

BestOfNResult best_of_n_decode(const LmBackend& target, const LmBackend& reference,
                               std::span<const TokenId> prompt, std::size_t n, double temperature,
                               const DecodeConfig& config, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("best-of-n needs n ≥ 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  require_valid_config(config);
  std::mt19937_64 rng(seed);

  BestOfNResult result;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSeq context(prompt.begin(), prompt.end());
    TokenSeq response;
    while (response.size() < config.max_tokens) {
      const TokenId token = sample_with_temperature(target.next_distribution(context), temperature, rng);
      response.push_back(token);
      context.push_back(token);
      if (is_eos(target, token)) break;
    }
    result.scores.push_back(normalized_sequence_score(target, reference, prompt, response, config));
    result.candidates.push_back(std::move(response));
  }
  result.chosen = best_candidate_index(result.scores);
  result.tokens = result.candidates[result.chosen];
  return result;
}

}  // namespace mdecode
