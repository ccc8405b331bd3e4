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

#include "mdecode/revision.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iterator>
#include <stdexcept>

#include "mdecode/errors.hpp"
#include "mdecode/monitor.hpp"

namespace mdecode {

namespace {

TokenSeq path_context(std::span<const TokenId> prompt, std::span<const TokenId> generated_prefix,
                      std::span<const TokenId> new_tokens) {
  TokenSeq context;
  context.reserve(prompt.size() + generated_prefix.size() + new_tokens.size());
  context.insert(context.end(), prompt.begin(), prompt.end());
  context.insert(context.end(), generated_prefix.begin(), generated_prefix.end());
  context.insert(context.end(), new_tokens.begin(), new_tokens.end());
  return context;
}

// Children of `path` without insertion ranks. One target and one reference
// query.
std::vector<PathCandidate> expand_children(const LmBackend& target, const LmBackend& reference,
                                           std::span<const TokenId> prompt,
                                           std::span<const TokenId> generated_prefix,
                                           const PathCandidate& path, std::size_t n,
                                           const DecodeConfig& config) {
  const TokenSeq context = path_context(prompt, generated_prefix, path.new_tokens);
  const Distribution p_target = target.next_distribution(context);
  const Distribution p_reference = reference.next_distribution(context);
  const double weight =
      token_weight(generated_prefix.size() + path.new_tokens.size(), prompt.size(), config.weight_scheme);
  const auto eos = target.eos_token();

  std::vector<PathCandidate> children;
  for (TokenId token : p_target.top_n(n)) {
    PathCandidate child;
    child.new_tokens = path.new_tokens;
    child.new_tokens.push_back(token);
    child.score = path.score +
                  weight * probability_ratio(p_reference.prob(token), p_target.prob(token), config.prob_floor);
    child.terminated = eos && token == *eos;
    children.push_back(std::move(child));
  }
  return children;
}

// Sorts by descending score, then reorders each run of tied scores with
// `tie_less`. Runs are built by chaining neighbours in exact score order.
template <typename T, typename Score, typename TieLess>
void order_with_ties(std::vector<T>& items, Score score, TieLess tie_less) {
  std::stable_sort(items.begin(), items.end(), [&](const T& a, const T& b) { return score(a) > score(b); });
  auto run_begin = items.begin();
  while (run_begin != items.end()) {
    auto run_end = std::next(run_begin);
    while (run_end != items.end() && scores_tied(score(*std::prev(run_end)), score(*run_end))) ++run_end;
    std::sort(run_begin, run_end, tie_less);
    run_begin = run_end;
  }
}

void require_shared_vocab(const LmBackend& target, const LmBackend& reference) {
  if (target.vocab_size() != reference.vocab_size()) {
    throw std::invalid_argument("target and reference vocabularies differ");
  }
}

}  // namespace

bool scores_tied(double a, double b) {
  return std::abs(a - b) <= kScoreTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

std::vector<PathCandidate> expand_path(const LmBackend& target, const LmBackend& reference,
                                       std::span<const TokenId> prompt,
                                       std::span<const TokenId> generated_prefix,
                                       const PathCandidate& path, std::size_t n,
                                       const DecodeConfig& config, std::size_t& next_rank) {
  if (path.terminated) throw InvalidState("cannot expand a terminated path");
  if (path.new_tokens.size() >= config.block_size_m) throw InvalidState("cannot expand a full path");
  require_shared_vocab(target, reference);
  auto children = expand_children(target, reference, prompt, generated_prefix, path, n, config);
  for (auto& child : children) child.insertion_rank = next_rank++;
  return children;
}

std::vector<PathCandidate> fact_check(std::vector<PathCandidate> candidates, std::size_t k) {
  if (candidates.empty()) throw std::invalid_argument("fact_check needs at least one candidate");
  if (k == 0) throw std::invalid_argument("fact_check needs k ≥ 1");
  const std::size_t keep = std::min(k, candidates.size());
  order_with_ties(
      candidates, [](const PathCandidate& c) { return c.score; },
      [](const PathCandidate& a, const PathCandidate& b) { return a.insertion_rank < b.insertion_rank; });
  candidates.resize(keep);
  return candidates;
}

RevisionResult revise_block(const LmBackend& target, const LmBackend& reference,
                            std::span<const TokenId> prompt,
                            std::span<const TokenId> generated_prefix, const DecodeConfig& config,
                            Execution execution) {
  require_shared_vocab(target, reference);
  RevisionResult result;
  auto& stats = result.stats;
  std::vector<PathCandidate> frontier(1);  // the empty path
  std::size_t next_rank = 0;

  for (std::size_t layer = 0; layer < config.block_size_m; ++layer) {
    std::vector<const PathCandidate*> open;
    std::vector<PathCandidate> layer_paths;
    for (const auto& path : frontier) {
      if (path.terminated) {
        layer_paths.push_back(path);
      } else {
        open.push_back(&path);
      }
    }
    if (open.empty()) break;

    std::vector<std::vector<PathCandidate>> expansions(open.size());
    std::vector<std::exception_ptr> failures(open.size());
    const auto count = static_cast<long>(open.size());
    const bool parallel = execution == Execution::kParallel && open.size() > 1;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (long i = 0; i < count; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      try {
        expansions[idx] = expand_children(target, reference, prompt, generated_prefix, *open[idx],
                                          config.branch_n, config);
      } catch (...) {
        failures[idx] = std::current_exception();
      }
    }
    for (const auto& failure : failures) {
      if (failure) std::rethrow_exception(failure);
    }

    // Ranks are handed out in frontier order, independent of thread timing.
    for (auto& children : expansions) {
      for (auto& child : children) {
        child.insertion_rank = next_rank++;
        layer_paths.push_back(std::move(child));
        ++stats.paths_created;
      }
    }
    stats.target_calls += open.size();
    stats.reference_calls += open.size();

    const std::size_t before = layer_paths.size();
    frontier = fact_check(std::move(layer_paths), config.keep_k);
    stats.paths_pruned += before - frontier.size();
  }

  auto winner = fact_check(std::move(frontier), 1);
  result.tokens = std::move(winner.front().new_tokens);
  result.score = winner.front().score;
  return result;
}

OracleResult exhaustive_revision_oracle(const LmBackend& target, const LmBackend& reference,
                                        std::span<const TokenId> prompt,
                                        std::span<const TokenId> generated_prefix,
                                        const DecodeConfig& config) {
  require_shared_vocab(target, reference);
  std::size_t leaves = 1;
  for (std::size_t j = 0; j < config.block_size_m; ++j) {
    leaves *= config.branch_n;
    if (leaves > kOracleMaxLeaves) {
      throw ResourceError("oracle refuses to enumerate more than " + std::to_string(kOracleMaxLeaves) +
                          " paths (N^m too large)");
    }
  }

  struct Leaf {
    TokenSeq tokens;
    double score;
    std::size_t order;  // depth-first visiting order
  };
  std::vector<Leaf> leaves_seen;
  const auto eos = target.eos_token();
  const std::size_t depth_limit = config.block_size_m;

  // Depth-first over top-N choices, so leaves are visited in lexicographic
  // choice order.
  const auto visit = [&](auto&& self, TokenSeq& tokens, double score, bool terminated) -> void {
    if (!tokens.empty() && (terminated || tokens.size() == depth_limit)) {
      leaves_seen.push_back({tokens, score, leaves_seen.size()});
      return;
    }
    TokenSeq context(prompt.begin(), prompt.end());
    context.insert(context.end(), generated_prefix.begin(), generated_prefix.end());
    context.insert(context.end(), tokens.begin(), tokens.end());
    const Distribution p_target = target.next_distribution(context);
    const Distribution p_reference = reference.next_distribution(context);
    const double w = token_weight(generated_prefix.size() + tokens.size(), prompt.size(), config.weight_scheme);
    for (TokenId token : p_target.top_n(config.branch_n)) {
      const double ratio = probability_ratio(p_reference.prob(token), p_target.prob(token), config.prob_floor);
      tokens.push_back(token);
      self(self, tokens, score + w * ratio, eos && token == *eos);
      tokens.pop_back();
    }
  };
  TokenSeq scratch;
  visit(visit, scratch, 0.0, false);

  order_with_ties(leaves_seen, [](const Leaf& l) { return l.score; }, [](const Leaf& a, const Leaf& b) {
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.order < b.order;
  });
  OracleResult best;
  best.paths_enumerated = leaves_seen.size();
  best.tokens = std::move(leaves_seen.front().tokens);
  best.score = leaves_seen.front().score;
  return best;
}

double recompute_path_score(const LmBackend& target, const LmBackend& reference,
                            std::span<const TokenId> prompt,
                            std::span<const TokenId> generated_prefix,
                            std::span<const TokenId> tokens, const DecodeConfig& config) {
  return block_score(target, reference, prompt, generated_prefix, tokens, config).r_beta;
}

}  // namespace mdecode
