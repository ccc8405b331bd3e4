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

#include "mdecode/backends.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mdecode/errors.hpp"

namespace mdecode {

namespace {

const std::vector<std::string>& no_labels() {
  static const std::vector<std::string> empty;
  return empty;
}

std::unordered_map<std::string, TokenId> label_index(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, TokenId> index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!index.emplace(labels[i], static_cast<TokenId>(i)).second) {
      throw ParseError("duplicate vocabulary label '" + labels[i] + "'");
    }
  }
  return index;
}

}  // namespace

const std::vector<std::string>& LmBackend::vocab_labels() const { return no_labels(); }

Distribution LmBackend::next_distribution(std::span<const TokenId> context) const {
  const auto vocab = vocab_size();
  for (TokenId t : context) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::invalid_argument("context token " + std::to_string(t) +
                                  " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  return do_next_distribution(context);
}

bool ends_with(std::span<const TokenId> context, std::span<const TokenId> suffix) {
  if (suffix.size() > context.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), context.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

// ---------------------------------------------------------------------------
// TableLm

TableLm::TableLm(std::vector<std::string> labels, Distribution default_row,
                 std::vector<TableRow> rows, std::optional<TokenId> eos)
    : labels_(std::move(labels)),
      default_row_(std::move(default_row)),
      rows_(std::move(rows)),
      eos_(eos) {
  if (labels_.empty()) throw std::invalid_argument("table model needs a vocabulary");
  const auto vocab = labels_.size();
  if (default_row_.size() != vocab) {
    throw std::invalid_argument("default row length differs from vocabulary size");
  }
  if (eos_ && (*eos_ < 0 || static_cast<std::size_t>(*eos_) >= vocab)) {
    throw std::invalid_argument("eos token outside vocabulary");
  }
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& row = rows_[i];
    if (row.suffix.empty()) throw std::invalid_argument("table row with empty suffix");
    if (row.probs.size() != vocab) {
      throw std::invalid_argument("table row length differs from vocabulary size");
    }
    for (TokenId t : row.suffix) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
        throw std::invalid_argument("table row suffix token outside vocabulary");
      }
    }
    if (!index_.emplace(row.suffix, i).second) {
      throw std::invalid_argument("duplicate table row suffix");
    }
    longest_suffix_ = std::max(longest_suffix_, row.suffix.size());
  }
}

std::string TableLm::describe() const {
  return "table(vocab=" + std::to_string(labels_.size()) + ",rows=" + std::to_string(rows_.size()) + ")";
}

Distribution TableLm::do_next_distribution(std::span<const TokenId> context) const {
  TokenSeq key;
  for (std::size_t len = std::min(longest_suffix_, context.size()); len >= 1; --len) {
    key.assign(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
    if (auto it = index_.find(key); it != index_.end()) return rows_[it->second].probs;
  }
  return default_row_;
}

TableLm TableLm::with_rows(std::span<const TableRow> replacements) const {
  std::vector<TableRow> rows = rows_;
  for (const auto& repl : replacements) {
    if (auto it = index_.find(repl.suffix); it != index_.end()) {
      rows[it->second].probs = repl.probs;
    } else {
      rows.push_back(repl);
    }
  }
  return TableLm(labels_, default_row_, std::move(rows), eos_);
}

std::shared_ptr<const TableLm> table_lm_from_spec(const nlohmann::json& spec) {
  try {
    if (!spec.is_object()) throw ParseError("table spec must be a JSON object");
    for (const char* key : {"vocab", "default"}) {
      if (!spec.contains(key)) throw ParseError(std::string("table spec missing \"") + key + "\"");
    }
    auto labels = spec.at("vocab").get<std::vector<std::string>>();
    const auto index = label_index(labels);
    const auto lookup = [&](const std::string& label) {
      auto it = index.find(label);
      if (it == index.end()) throw ParseError("unknown label '" + label + "' in table spec");
      return it->second;
    };
    const auto parse_row = [&](const nlohmann::json& probs, const std::string& where) {
      auto values = probs.get<std::vector<double>>();
      if (values.size() != labels.size()) {
        throw ParseError(where + ": expected " + std::to_string(labels.size()) + " probabilities, got " +
                         std::to_string(values.size()));
      }
      try {
        return Distribution::from_probs(std::move(values), 1e-6);
      } catch (const std::invalid_argument& e) {
        throw ParseError(where + ": " + e.what());
      }
    };

    Distribution default_row = parse_row(spec.at("default"), "default row");
    std::vector<TableRow> rows;
    std::set<TokenSeq> seen;
    if (spec.contains("rows")) {
      std::size_t i = 0;
      for (const auto& row : spec.at("rows")) {
        const std::string where = "row " + std::to_string(i++);
        TableRow parsed;
        for (const auto& label : row.at("suffix")) parsed.suffix.push_back(lookup(label.get<std::string>()));
        if (parsed.suffix.empty()) throw ParseError(where + ": empty suffix");
        if (!seen.insert(parsed.suffix).second) throw ParseError(where + ": duplicate suffix key");
        parsed.probs = parse_row(row.at("probs"), where);
        rows.push_back(std::move(parsed));
      }
    }
    std::optional<TokenId> eos;
    if (spec.contains("eos") && !spec.at("eos").is_null()) eos = lookup(spec.at("eos").get<std::string>());
    return std::make_shared<const TableLm>(std::move(labels), std::move(default_row), std::move(rows), eos);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed table spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("invalid table spec: ") + e.what());
  }
}

std::shared_ptr<const TableLm> table_lm_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open table spec '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("table spec '" + path + "' is not valid JSON: " + e.what());
  }
  return table_lm_from_spec(doc);
}

nlohmann::json table_lm_to_spec(const TableLm& table) {
  const auto& labels = table.vocab_labels();
  const auto probs_of = [](const Distribution& d) {
    return std::vector<double>(d.probs().begin(), d.probs().end());
  };
  nlohmann::json spec;
  spec["vocab"] = labels;
  spec["default"] = probs_of(table.default_row());
  spec["rows"] = nlohmann::json::array();
  for (const auto& row : table.rows()) {
    std::vector<std::string> suffix;
    for (TokenId t : row.suffix) suffix.push_back(labels[static_cast<std::size_t>(t)]);
    spec["rows"].push_back({{"suffix", suffix}, {"probs", probs_of(row.probs)}});
  }
  if (auto eos = table.eos_token()) {
    spec["eos"] = labels[static_cast<std::size_t>(*eos)];
  } else {
    spec["eos"] = nullptr;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// NgramLm

NgramLm::NgramLm(std::vector<std::string> labels, std::size_t order, double add_k,
                 const TokenSeq& corpus, std::optional<TokenId> eos)
    : labels_(std::move(labels)), order_(order), add_k_(add_k), eos_(eos) {
  if (order_ < 1) throw std::invalid_argument("n-gram order must be ≥ 1");
  if (!(add_k_ >= 0.0)) throw std::invalid_argument("add_k must be ≥ 0");
  const auto vocab = labels_.size();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t hist = std::min(order_ - 1, i);
    TokenSeq key(corpus.begin() + static_cast<std::ptrdiff_t>(i - hist),
                 corpus.begin() + static_cast<std::ptrdiff_t>(i));
    auto& entry = counts_[std::move(key)];
    if (entry.next.empty()) entry.next.assign(vocab, 0.0);
    entry.next[static_cast<std::size_t>(corpus[i])] += 1.0;
    entry.total += 1.0;
  }
}

std::string NgramLm::describe() const {
  std::ostringstream out;
  out << "ngram(n=" << order_ << ",add_k=" << add_k_ << ",vocab=" << labels_.size() << ")";
  return out.str();
}

std::size_t NgramLm::max_context_count() const {
  double best = 0.0;
  for (const auto& [key, entry] : counts_) best = std::max(best, entry.total);
  return static_cast<std::size_t>(best);
}

Distribution NgramLm::do_next_distribution(std::span<const TokenId> context) const {
  const auto vocab = labels_.size();
  const std::size_t hist = std::min(order_ - 1, context.size());
  const TokenSeq key(context.end() - static_cast<std::ptrdiff_t>(hist), context.end());
  const auto it = counts_.find(key);
  const double total = (it == counts_.end() ? 0.0 : it->second.total);
  const double denom = total + add_k_ * static_cast<double>(vocab);
  if (denom <= 0.0) return Distribution::uniform(vocab);
  std::vector<double> probs(vocab);
  for (std::size_t t = 0; t < vocab; ++t) {
    const double c = (it == counts_.end() ? 0.0 : it->second.next[t]);
    probs[t] = (c + add_k_) / denom;
  }
  return Distribution::from_probs(std::move(probs), 1e-9);
}

std::shared_ptr<const NgramLm> ngram_lm_train(std::string_view corpus_text, std::size_t n,
                                              double add_k, std::optional<std::string> eos_label) {
  if (n < 1) throw std::invalid_argument("n-gram order must be ≥ 1");
  const auto words = split_whitespace(corpus_text);
  if (words.empty()) throw std::invalid_argument("n-gram corpus is empty");
  std::vector<std::string> labels;
  std::unordered_map<std::string, TokenId> index;
  TokenSeq corpus;
  corpus.reserve(words.size());
  for (const auto& w : words) {
    auto [it, inserted] = index.emplace(w, static_cast<TokenId>(labels.size()));
    if (inserted) labels.push_back(w);
    corpus.push_back(it->second);
  }
  std::optional<TokenId> eos;
  if (eos_label) {
    auto it = index.find(*eos_label);
    if (it == index.end()) throw std::invalid_argument("eos label '" + *eos_label + "' not in corpus");
    eos = it->second;
  }
  return std::make_shared<const NgramLm>(std::move(labels), n, add_k, corpus, eos);
}

// ---------------------------------------------------------------------------
// PerturbedLm

PerturbedLm::PerturbedLm(BackendPtr base, std::vector<PerturbationEdit> edits)
    : base_(std::move(base)), edits_(std::move(edits)) {
  if (!base_) throw std::invalid_argument("perturbation needs a base backend");
  const auto vocab = base_->vocab_size();
  for (const auto& e : edits_) {
    if (e.boosted_token < 0 || static_cast<std::size_t>(e.boosted_token) >= vocab) {
      throw std::invalid_argument("boosted token outside vocabulary");
    }
    if (!(e.boosted_prob > 0.0 && e.boosted_prob < 1.0)) {
      throw std::invalid_argument("boosted_prob must lie in (0,1)");
    }
    for (TokenId t : e.match_context_suffix) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
        throw std::invalid_argument("edit suffix token outside vocabulary");
      }
    }
  }
  // Two edits can fire on the same context iff one suffix ends the other.
  for (std::size_t i = 0; i < edits_.size(); ++i) {
    for (std::size_t j = i + 1; j < edits_.size(); ++j) {
      const auto& a = edits_[i].match_context_suffix;
      const auto& b = edits_[j].match_context_suffix;
      if (ends_with(a, b) || ends_with(b, a)) {
        throw std::invalid_argument("conflicting perturbation edits " + std::to_string(i) + " and " +
                                    std::to_string(j) + " match the same context");
      }
    }
  }
}

std::string PerturbedLm::describe() const {
  return "perturbed(" + base_->describe() + ",edits=" + std::to_string(edits_.size()) + ")";
}

const PerturbationEdit* PerturbedLm::matching_edit(std::span<const TokenId> context) const {
  for (const auto& e : edits_) {
    if (ends_with(context, e.match_context_suffix)) return &e;
  }
  return nullptr;
}

Distribution PerturbedLm::apply(const Distribution& base, TokenId boosted, double boosted_prob) {
  const auto probs = base.probs();
  const auto b = static_cast<std::size_t>(boosted);
  std::vector<double> out(probs.size());
  const double rest = 1.0 - probs[b];
  const double others = static_cast<double>(probs.size() - 1);
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (t == b) {
      out[t] = boosted_prob;
    } else if (rest > 0.0) {
      out[t] = probs[t] * (1.0 - boosted_prob) / rest;
    } else {
      out[t] = (1.0 - boosted_prob) / others;
    }
  }
  return Distribution::from_probs(std::move(out), 1e-9);
}

Distribution PerturbedLm::do_next_distribution(std::span<const TokenId> context) const {
  Distribution base = base_->next_distribution(context);
  if (const auto* edit = matching_edit(context)) {
    if (base.size() == 1) return base;
    return apply(base, edit->boosted_token, edit->boosted_prob);
  }
  return base;
}

BackendPtr perturb_backend(BackendPtr base, std::vector<PerturbationEdit> edits) {
  return std::make_shared<const PerturbedLm>(std::move(base), std::move(edits));
}

// ---------------------------------------------------------------------------
// Text helpers

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

TokenSeq encode_words(const LmBackend& backend, std::string_view text) {
  const auto& labels = backend.vocab_labels();
  if (labels.empty()) throw ValidationError("backend has no vocabulary labels to tokenize against");
  std::unordered_map<std::string_view, TokenId> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], static_cast<TokenId>(i));
  TokenSeq out;
  for (const auto& w : split_whitespace(text)) {
    auto it = index.find(w);
    if (it == index.end()) throw ValidationError("out-of-vocabulary word '" + w + "'");
    out.push_back(it->second);
  }
  return out;
}

std::string decode_tokens(const LmBackend& backend, std::span<const TokenId> tokens) {
  const auto& labels = backend.vocab_labels();
  const auto eos = backend.eos_token();
  std::string out;
  for (TokenId t : tokens) {
    if (eos && t == *eos) continue;
    if (!out.empty()) out += ' ';
    if (!labels.empty() && t >= 0 && static_cast<std::size_t>(t) < labels.size()) {
      out += labels[static_cast<std::size_t>(t)];
    } else {
      out += std::to_string(t);
    }
  }
  return out;
}

}  // namespace mdecode
