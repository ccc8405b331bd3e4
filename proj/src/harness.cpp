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

#include "mdecode/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "mdecode/errors.hpp"
#include "mdecode/monitor.hpp"
#include "mdecode/revision.hpp"

namespace mdecode {

// ---------------------------------------------------------------------------
// Corpus

std::vector<QaItem> parse_jsonl_corpus(std::istream& in, const std::string& source) {
  std::vector<QaItem> items;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    QaItem item;
    try {
      const auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");
      for (const char* key : {"id", "prompt", "answers"}) {
        if (!obj.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
      }
      item.id = obj.at("id").get<std::string>();
      item.prompt = obj.at("prompt").get<std::string>();
      item.answers = obj.at("answers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (item.answers.empty()) throw ParseError(where + ": \"answers\" must be non-empty");
    if (!ids.insert(item.id).second) throw ValidationError(where + ": duplicate id '" + item.id + "'");
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<QaItem> load_jsonl_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus '" + path + "'");
  return parse_jsonl_corpus(in, path);
}

void write_jsonl_corpus(std::ostream& out, std::span<const QaItem> corpus) {
  for (const auto& item : corpus) {
    out << nlohmann::json{{"id", item.id}, {"prompt", item.prompt}, {"answers", item.answers}}.dump() << '\n';
  }
}

void write_jsonl_corpus(const std::string& path, std::span<const QaItem> corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus '" + path + "'");
  write_jsonl_corpus(out, corpus);
  if (!out) throw std::runtime_error("error writing corpus '" + path + "'");
}

// ---------------------------------------------------------------------------
// Exact match

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

bool exact_match(std::string_view prediction, std::span<const std::string> answers) {
  const std::string pred = normalize_answer(prediction);
  return std::any_of(answers.begin(), answers.end(), [&](const std::string& answer) {
    return pred.find(normalize_answer(answer)) != std::string::npos;
  });
}

// ---------------------------------------------------------------------------
// Synthetic suite

namespace {

constexpr TokenId kSynthEos = 0;
constexpr TokenId kSynthQuestion = 1;

std::vector<std::string> synth_labels(std::size_t vocab_size) {
  std::vector<std::string> labels{"</s>", "<q>"};
  const std::size_t content = vocab_size - 2;
  const int width = std::max<int>(3, static_cast<int>(std::to_string(content - 1).size()));
  for (std::size_t i = 0; i < content; ++i) {
    std::ostringstream label;
    label << 't' << std::setw(width) << std::setfill('0') << i;
    labels.push_back(label.str());
  }
  return labels;
}

// `peak` on one token, the rest spread evenly.
Distribution peaked_row(std::size_t vocab_size, TokenId peak, double mass) {
  std::vector<double> probs(vocab_size, (1.0 - mass) / static_cast<double>(vocab_size - 1));
  probs[static_cast<std::size_t>(peak)] = mass;
  return Distribution::from_probs(std::move(probs), 1e-9);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

SynthSuite synth_hallucination_suite(std::uint64_t seed, std::size_t size, std::size_t vocab_size,
                                     double error_rate, double boosted_prob, const SynthOptions& options) {
  if (vocab_size < 4) throw std::invalid_argument("synthetic suite needs vocab_size ≥ 4");
  if (size < 1) throw std::invalid_argument("synthetic suite needs size ≥ 1");
  if (!(error_rate > 0.0 && error_rate < 1.0)) throw std::invalid_argument("error_rate must lie in (0,1)");
  if (!(boosted_prob > 0.0 && boosted_prob < 1.0)) throw std::invalid_argument("boosted_prob must lie in (0,1)");
  if (options.answer_length < 1 || options.critical_positions < 1) {
    throw std::invalid_argument("answer_length and critical_positions must be ≥ 1");
  }
  if (!(options.reference_confidence > 0.5 && options.reference_confidence < 1.0)) {
    throw std::invalid_argument("reference_confidence must lie in (0.5,1)");
  }

  std::mt19937_64 rng(seed);
  const auto labels = synth_labels(vocab_size);
  const std::size_t content = vocab_size - 2;
  const auto content_token = [](std::size_t i) { return static_cast<TokenId>(i + 2); };

  // Shortest prompt body leaving plenty of room for unique prompts.
  std::size_t body_len = 2;
  while (std::pow(static_cast<double>(content), static_cast<double>(body_len)) < 4.0 * static_cast<double>(size)) {
    ++body_len;
  }

  SynthSuite suite;
  std::vector<TableRow> rows;
  std::set<TokenSeq> seen_prompts;
  for (std::size_t i = 0; i < size; ++i) {
    SynthGroundTruth truth;
    std::ostringstream id;
    id << 'q' << std::setw(4) << std::setfill('0') << i;
    truth.item_id = id.str();
    do {
      truth.prompt = {kSynthQuestion};
      for (std::size_t j = 0; j < body_len; ++j) truth.prompt.push_back(content_token(uniform_index(rng, content)));
    } while (!seen_prompts.insert(truth.prompt).second);
    for (std::size_t j = 0; j < options.answer_length; ++j) {
      truth.answer.push_back(content_token(uniform_index(rng, content)));
    }

    TokenSeq key = truth.prompt;
    for (std::size_t j = 0; j <= truth.answer.size(); ++j) {
      const TokenId next = j < truth.answer.size() ? truth.answer[j] : kSynthEos;
      rows.push_back({key, peaked_row(vocab_size, next, options.reference_confidence)});
      if (j < truth.answer.size()) key.push_back(truth.answer[j]);
    }
    suite.ground_truth.push_back(std::move(truth));
  }

  std::vector<double> default_probs(vocab_size, (1.0 - options.default_eos_prob) / static_cast<double>(vocab_size - 1));
  default_probs[static_cast<std::size_t>(kSynthEos)] = options.default_eos_prob;
  suite.reference = std::make_shared<const TableLm>(labels, Distribution::from_probs(default_probs, 1e-9),
                                                    std::move(rows), kSynthEos);

  // Exactly round(error_rate * size) perturbed items, chosen by shuffle.
  const auto n_perturbed = static_cast<std::size_t>(std::llround(error_rate * static_cast<double>(size)));
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_perturbed));

  std::vector<TableRow> replaced;
  for (std::size_t k = 0; k < n_perturbed; ++k) {
    auto& truth = suite.ground_truth[order[k]];
    truth.perturbed = true;
    truth.position = uniform_index(rng, std::min(options.critical_positions, truth.answer.size()));
    truth.correct_token = truth.answer[truth.position];
    do {
      truth.wrong_token = content_token(uniform_index(rng, content));
    } while (truth.wrong_token == truth.correct_token);

    PerturbationEdit edit;
    edit.match_context_suffix = truth.prompt;
    edit.match_context_suffix.insert(edit.match_context_suffix.end(), truth.answer.begin(),
                                     truth.answer.begin() + static_cast<std::ptrdiff_t>(truth.position));
    edit.boosted_token = truth.wrong_token;
    edit.boosted_prob = boosted_prob;
    const Distribution base = suite.reference->next_distribution(edit.match_context_suffix);
    replaced.push_back({edit.match_context_suffix, PerturbedLm::apply(base, edit.boosted_token, boosted_prob)});
    suite.edits.push_back(std::move(edit));
  }
  suite.target = perturb_backend(suite.reference, suite.edits);
  suite.target_table = std::make_shared<const TableLm>(suite.reference->with_rows(replaced));

  for (const auto& truth : suite.ground_truth) {
    QaItem item;
    item.id = truth.item_id;
    item.prompt = decode_tokens(*suite.reference, truth.prompt);
    item.answers = {decode_tokens(*suite.reference, truth.answer)};
    suite.corpus.push_back(std::move(item));
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Benchmark

std::string_view to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kMd: return "md";
    case DecodeMode::kGreedy: return "greedy";
    case DecodeMode::kBon: return "bon";
  }
  return "md";
}

std::optional<DecodeMode> parse_decode_mode(std::string_view text) {
  if (text == "md") return DecodeMode::kMd;
  if (text == "greedy") return DecodeMode::kGreedy;
  if (text == "bon") return DecodeMode::kBon;
  return std::nullopt;
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::kJson;
  if (text == "markdown" || text == "md") return ReportFormat::kMarkdown;
  return std::nullopt;
}

BenchmarkAggregates aggregate(std::span<const ItemRecord> items) {
  BenchmarkAggregates agg;
  if (items.empty()) return agg;
  double em = 0.0, ms = 0.0, resampled = 0.0;
  for (const auto& item : items) {
    em += item.exact_match ? 1.0 : 0.0;
    ms += item.ms_per_token;
    resampled += item.resampled_ratio;
  }
  const double n = static_cast<double>(items.size());
  agg.em_rate = em / n;
  agg.mean_ms_per_token = ms / n;
  agg.tokens_per_second = agg.mean_ms_per_token > 0.0 ? 1000.0 / agg.mean_ms_per_token : 0.0;
  agg.mean_resampled_ratio = resampled / n;
  return agg;
}

TokenSeq tokenize_prompt(const LmBackend& target, const LmBackend& reference, std::string_view text) {
  if (!target.vocab_labels().empty()) return encode_words(target, text);
  if (!reference.vocab_labels().empty()) return encode_words(reference, text);
  TokenSeq out;
  for (const auto& word : split_whitespace(text)) {
    try {
      std::size_t used = 0;
      const long value = std::stol(word, &used);
      if (used != word.size() || value < 0 || static_cast<std::size_t>(value) >= target.vocab_size()) {
        throw std::invalid_argument("bad id");
      }
      out.push_back(static_cast<TokenId>(value));
    } catch (const std::exception&) {
      throw ValidationError("prompt word '" + word + "' is not a token id and the backends have no labels");
    }
  }
  return out;
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

struct ItemOutcome {
  ItemRecord record;
  std::optional<DecodeTrace> trace;
};

ItemOutcome decode_item(const QaItem& item, const LmBackend& target, const LmBackend& reference,
                        const DecodeConfig& config, const BenchmarkOptions& options) {
  using Clock = std::chrono::steady_clock;
  const TokenSeq prompt = tokenize_prompt(target, reference, item.prompt);
  ItemOutcome outcome;
  auto& rec = outcome.record;
  rec.id = item.id;

  TokenSeq output;
  const auto start = Clock::now();
  switch (options.mode) {
    case DecodeMode::kMd: {
      auto result = md_decode(target, reference, prompt, config, options.revision_execution);
      output = std::move(result.tokens);
      rec.resampled_ratio = output.empty() ? 0.0 : resampled_ratio(result.trace);
      rec.blocks_rejected = static_cast<std::size_t>(
          std::count_if(result.trace.blocks.begin(), result.trace.blocks.end(),
                        [](const BlockReport& b) { return !b.accepted; }));
      outcome.trace = std::move(result.trace);
      break;
    }
    case DecodeMode::kGreedy:
      output = greedy_decode(target, prompt, config.max_tokens);
      break;
    case DecodeMode::kBon:
      output = best_of_n_decode(target, reference, prompt, options.bon_n, options.bon_temperature, config,
                                config.seed)
                   .tokens;
      break;
  }
  const double elapsed_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  rec.num_tokens = output.size();
  rec.ms_per_token = std::max(elapsed_ms, 1e-6) / static_cast<double>(std::max<std::size_t>(output.size(), 1));
  rec.prediction = decode_tokens(target.vocab_labels().empty() ? reference : target, output);
  rec.exact_match = exact_match(rec.prediction, item.answers);
  return outcome;
}

}  // namespace

BenchmarkReport run_benchmark(std::span<const QaItem> corpus, const LmBackend& target,
                              const LmBackend& reference, const DecodeConfig& config,
                              const BenchmarkOptions& options) {
  require_valid_config(config);
  if (options.mode == DecodeMode::kBon && options.bon_n < 1) throw std::invalid_argument("bon_n must be ≥ 1");

  std::vector<ItemOutcome> outcomes(corpus.size());
  std::vector<std::exception_ptr> failures(corpus.size());
  const auto count = static_cast<long>(corpus.size());
  const int threads = std::max(1, options.threads);
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (long i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      outcomes[idx] = decode_item(corpus[idx], target, reference, config, options);
    } catch (...) {
      failures[idx] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const std::exception& e) {
      throw BenchmarkItemError(corpus[i].id, e.what());
    }
  }

  BenchmarkReport report;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (options.on_trace && outcomes[i].trace) options.on_trace(corpus[i], *outcomes[i].trace);
    report.items.push_back(std::move(outcomes[i].record));
  }
  report.aggregates = aggregate(report.items);
  report.metadata.mode = options.mode;
  report.metadata.config = config;
  report.metadata.target = target.describe();
  report.metadata.reference = reference.describe();
  report.metadata.seed = config.seed;
  report.metadata.timestamp = utc_timestamp();
  report.metadata.bon_n = options.bon_n;
  report.metadata.bon_temperature = options.bon_temperature;
  return report;
}

// ---------------------------------------------------------------------------
// Random instances

namespace {

Distribution random_row(std::mt19937_64& rng, std::size_t vocab_size) {
  // Normalized exponentials: a flat Dirichlet draw.
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> probs(vocab_size);
  double sum = 0.0;
  for (auto& p : probs) {
    p = expo(rng) + 1e-12;
    sum += p;
  }
  for (auto& p : probs) p /= sum;
  return Distribution::from_probs(std::move(probs), 1e-9);
}

std::size_t uniform_between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

std::shared_ptr<const TableLm> random_table_lm(std::mt19937_64& rng, std::size_t vocab_size, std::size_t n_rows,
                                               std::size_t max_suffix_len, bool with_eos) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < vocab_size; ++i) labels.push_back("v" + std::to_string(i));
  std::vector<TableRow> rows;
  std::set<TokenSeq> used;
  for (std::size_t r = 0; r < n_rows; ++r) {
    TokenSeq suffix(uniform_between(rng, 1, std::max<std::size_t>(1, max_suffix_len)));
    for (auto& t : suffix) t = static_cast<TokenId>(uniform_index(rng, vocab_size));
    auto probs = random_row(rng, vocab_size);
    if (used.insert(suffix).second) rows.push_back({std::move(suffix), std::move(probs)});
  }
  std::optional<TokenId> eos;
  if (with_eos) eos = TokenId{0};
  return std::make_shared<const TableLm>(std::move(labels), random_row(rng, vocab_size), std::move(rows), eos);
}

RevisionInstance random_revision_instance(std::mt19937_64& rng) {
  RevisionInstance inst;
  const std::size_t vocab = uniform_between(rng, 2, 8);
  const bool with_eos = uniform_index(rng, 2) == 0;
  inst.target = random_table_lm(rng, vocab, 2 * vocab, 2, with_eos);
  inst.reference = random_table_lm(rng, vocab, 2 * vocab, 2, with_eos);
  inst.prompt.resize(uniform_between(rng, 0, 3));
  for (auto& t : inst.prompt) t = static_cast<TokenId>(uniform_index(rng, vocab));
  inst.generated_prefix.resize(uniform_between(rng, 0, 2));
  for (auto& t : inst.generated_prefix) t = static_cast<TokenId>(uniform_index(rng, vocab));

  auto& cfg = inst.config;
  cfg.block_size_m = uniform_between(rng, 1, 3);
  cfg.branch_n = uniform_between(rng, 1, 3);
  cfg.keep_k = 1;
  for (std::size_t j = 0; j < cfg.block_size_m; ++j) cfg.keep_k *= cfg.branch_n;
  cfg.weight_scheme = uniform_index(rng, 2) == 0 ? WeightScheme::kGeneratedPlusOne : WeightScheme::kFullContext;
  if (cfg.weight_scheme == WeightScheme::kFullContext && inst.prompt.empty()) {
    inst.prompt.push_back(static_cast<TokenId>(uniform_index(rng, vocab)));
  }
  return inst;
}

DecodeInstance random_decode_instance(std::mt19937_64& rng, std::size_t index) {
  DecodeInstance inst;
  if (index % 2 == 0) {
    const std::size_t vocab = uniform_between(rng, 2, 12);
    inst.kind = "table";
    inst.target = random_table_lm(rng, vocab, 3 * vocab, 3, true);
    inst.reference = random_table_lm(rng, vocab, 3 * vocab, 3, true);
    inst.prompt.resize(uniform_between(rng, 0, 5));
    for (auto& t : inst.prompt) t = static_cast<TokenId>(uniform_index(rng, vocab));
    return inst;
  }
  inst.kind = "ngram";
  const std::size_t vocab = uniform_between(rng, 3, 10);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < vocab; ++i) words.push_back("w" + std::to_string(i));
  std::string text;
  // Every word appears so the vocabulary is complete; then random filler.
  for (const auto& w : words) text += w + " ";
  const std::size_t length = uniform_between(rng, 20, 80);
  for (std::size_t i = 0; i < length; ++i) text += words[uniform_index(rng, vocab)] + " ";
  const bool with_eos = uniform_index(rng, 2) == 0;
  std::optional<std::string> eos = with_eos ? std::optional<std::string>("w0") : std::nullopt;
  inst.target = ngram_lm_train(text, 2, 0.5, eos);
  inst.reference = ngram_lm_train(text, 3, 0.1, eos);
  inst.prompt.resize(uniform_between(rng, 0, 4));
  for (auto& t : inst.prompt) t = static_cast<TokenId>(uniform_index(rng, vocab));
  return inst;
}

OracleCheckSummary run_oracle_check(std::uint64_t seed, std::size_t trials) {
  OracleCheckSummary summary;
  std::mt19937_64 rng(seed);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const auto inst = random_revision_instance(rng);
    const auto& cfg = inst.config;
    const auto revised = revise_block(*inst.target, *inst.reference, inst.prompt, inst.generated_prefix, cfg);
    const auto oracle =
        exhaustive_revision_oracle(*inst.target, *inst.reference, inst.prompt, inst.generated_prefix, cfg);
    ++summary.trials;
    if (revised.tokens != oracle.tokens) {
      ++summary.mismatches;
      std::ostringstream msg;
      msg << "trial " << trial << ": revise_block score " << revised.score << " vs oracle " << oracle.score
          << " (m=" << cfg.block_size_m << ", N=" << cfg.branch_n << ", K=" << cfg.keep_k << ")";
      summary.details.push_back(msg.str());
    }
    const double recomputed =
        recompute_path_score(*inst.target, *inst.reference, inst.prompt, inst.generated_prefix, revised.tokens, cfg);
    if (std::abs(recomputed - revised.score) > 1e-12) ++summary.score_violations;
    if (revised.stats.paths_created > cfg.block_size_m * cfg.keep_k * cfg.branch_n) ++summary.frontier_violations;
  }
  return summary;
}

}  // namespace mdecode
