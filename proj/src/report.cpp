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

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mdecode/harness.hpp"
#include "mdecode/json_io.hpp"

namespace mdecode {

void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = {{"block_size_m", c.block_size_m},
       {"branch_n", c.branch_n},
       {"keep_k", c.keep_k},
       {"gamma0", c.gamma0},
       {"max_tokens", c.max_tokens},
       {"acceptance_mode", to_string(c.acceptance_mode)},
       {"weight_scheme", to_string(c.weight_scheme)},
       {"prob_floor", c.prob_floor},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DecodeConfig& c) {
  j.at("block_size_m").get_to(c.block_size_m);
  j.at("branch_n").get_to(c.branch_n);
  j.at("keep_k").get_to(c.keep_k);
  j.at("gamma0").get_to(c.gamma0);
  j.at("max_tokens").get_to(c.max_tokens);
  const auto mode = parse_acceptance_mode(j.at("acceptance_mode").get<std::string>());
  const auto scheme = parse_weight_scheme(j.at("weight_scheme").get<std::string>());
  if (!mode || !scheme) throw std::invalid_argument("unknown acceptance_mode or weight_scheme");
  c.acceptance_mode = *mode;
  c.weight_scheme = *scheme;
  j.at("prob_floor").get_to(c.prob_floor);
  j.at("seed").get_to(c.seed);
}

void to_json(nlohmann::json& j, const BlockReport& r) {
  j = {{"start_index", r.start_index},
       {"tokens", r.tokens},
       {"weights", r.weights},
       {"ratios", r.ratios},
       {"r_beta", r.r_beta},
       {"sum_weights", r.sum_weights},
       {"threshold", r.threshold},
       {"accepted", r.accepted},
       {"revised_tokens", nullptr},
       {"revision_paths_explored", r.revision_paths_explored}};
  if (r.revised_tokens) j["revised_tokens"] = *r.revised_tokens;
}

void from_json(const nlohmann::json& j, BlockReport& r) {
  j.at("start_index").get_to(r.start_index);
  j.at("tokens").get_to(r.tokens);
  j.at("weights").get_to(r.weights);
  j.at("ratios").get_to(r.ratios);
  j.at("r_beta").get_to(r.r_beta);
  j.at("sum_weights").get_to(r.sum_weights);
  j.at("threshold").get_to(r.threshold);
  j.at("accepted").get_to(r.accepted);
  if (j.contains("revised_tokens") && !j.at("revised_tokens").is_null()) {
    r.revised_tokens = j.at("revised_tokens").get<TokenSeq>();
  } else {
    r.revised_tokens.reset();
  }
  j.at("revision_paths_explored").get_to(r.revision_paths_explored);
}

void to_json(nlohmann::json& j, const DecodeTrace& t) {
  j = {{"prompt", t.prompt},
       {"blocks", t.blocks},
       {"final_tokens", t.final_tokens},
       {"target_model_calls", t.target_model_calls},
       {"reference_model_calls", t.reference_model_calls},
       {"wall_time_per_token", t.wall_time_per_token},
       {"tokens_per_second", t.tokens_per_second}};
}

void from_json(const nlohmann::json& j, DecodeTrace& t) {
  j.at("prompt").get_to(t.prompt);
  j.at("blocks").get_to(t.blocks);
  j.at("final_tokens").get_to(t.final_tokens);
  j.at("target_model_calls").get_to(t.target_model_calls);
  j.at("reference_model_calls").get_to(t.reference_model_calls);
  j.at("wall_time_per_token").get_to(t.wall_time_per_token);
  j.at("tokens_per_second").get_to(t.tokens_per_second);
}

void to_json(nlohmann::json& j, const ItemRecord& r) {
  j = {{"id", r.id},
       {"prediction", r.prediction},
       {"exact_match", r.exact_match},
       {"resampled_ratio", r.resampled_ratio},
       {"ms_per_token", r.ms_per_token},
       {"blocks_rejected", r.blocks_rejected},
       {"num_tokens", r.num_tokens}};
}

void from_json(const nlohmann::json& j, ItemRecord& r) {
  j.at("id").get_to(r.id);
  j.at("prediction").get_to(r.prediction);
  j.at("exact_match").get_to(r.exact_match);
  j.at("resampled_ratio").get_to(r.resampled_ratio);
  j.at("ms_per_token").get_to(r.ms_per_token);
  j.at("blocks_rejected").get_to(r.blocks_rejected);
  r.num_tokens = j.value("num_tokens", std::size_t{0});
}

void to_json(nlohmann::json& j, const BenchmarkAggregates& a) {
  j = {{"em_rate", a.em_rate},
       {"mean_ms_per_token", a.mean_ms_per_token},
       {"tokens_per_second", a.tokens_per_second},
       {"mean_resampled_ratio", a.mean_resampled_ratio}};
}

void from_json(const nlohmann::json& j, BenchmarkAggregates& a) {
  j.at("em_rate").get_to(a.em_rate);
  j.at("mean_ms_per_token").get_to(a.mean_ms_per_token);
  j.at("tokens_per_second").get_to(a.tokens_per_second);
  j.at("mean_resampled_ratio").get_to(a.mean_resampled_ratio);
}

void to_json(nlohmann::json& j, const RunMetadata& m) {
  j = {{"mode", to_string(m.mode)},
       {"config", m.config},
       {"target", m.target},
       {"reference", m.reference},
       {"seed", m.seed},
       {"timestamp", m.timestamp},
       {"bon_n", m.bon_n},
       {"bon_temperature", m.bon_temperature}};
}

void from_json(const nlohmann::json& j, RunMetadata& m) {
  const auto mode = parse_decode_mode(j.at("mode").get<std::string>());
  if (!mode) throw std::invalid_argument("unknown mode in report metadata");
  m.mode = *mode;
  j.at("config").get_to(m.config);
  j.at("target").get_to(m.target);
  j.at("reference").get_to(m.reference);
  j.at("seed").get_to(m.seed);
  j.at("timestamp").get_to(m.timestamp);
  j.at("bon_n").get_to(m.bon_n);
  j.at("bon_temperature").get_to(m.bon_temperature);
}

void to_json(nlohmann::json& j, const BenchmarkReport& r) {
  j = {{"items", r.items}, {"aggregates", r.aggregates}, {"metadata", r.metadata}};
}

void from_json(const nlohmann::json& j, BenchmarkReport& r) {
  j.at("items").get_to(r.items);
  j.at("aggregates").get_to(r.aggregates);
  j.at("metadata").get_to(r.metadata);
}

namespace {

std::string method_name(const RunMetadata& meta) {
  switch (meta.mode) {
    case DecodeMode::kMd: return "MD";
    case DecodeMode::kGreedy: return "Greedy";
    case DecodeMode::kBon: return "BoN (n=" + std::to_string(meta.bon_n) + ")";
  }
  return "MD";
}

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw std::runtime_error("error writing '" + path + "'");
}

}  // namespace

std::string render_markdown(std::span<const BenchmarkReport> reports) {
  std::ostringstream out;
  out << "| Method | EM | ms/token | tokens/s | Resampled% |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    const auto& a = r.aggregates;
    out << "| " << method_name(r.metadata) << " | " << fixed(100.0 * a.em_rate, 1) << " | "
        << fixed(a.mean_ms_per_token, 4) << " | " << fixed(a.tokens_per_second, 1) << " | "
        << fixed(100.0 * a.mean_resampled_ratio, 1) << "% |\n";
  }
  return out.str();
}

void emit_reports(std::span<const BenchmarkReport> reports, const std::string& out_path, ReportFormat format) {
  if (format == ReportFormat::kMarkdown) {
    write_file(out_path, render_markdown(reports));
    return;
  }
  nlohmann::json doc;
  if (reports.size() == 1) {
    doc = reports.front();
  } else {
    doc = nlohmann::json::array();
    for (const auto& r : reports) doc.push_back(r);
  }
  write_file(out_path, doc.dump(2) + "\n");
}

void emit_report(const BenchmarkReport& report, const std::string& out_path, ReportFormat format) {
  emit_reports(std::span<const BenchmarkReport>(&report, 1), out_path, format);
}

std::vector<BenchmarkReport> load_reports(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report '" + path + "'");
  const auto doc = nlohmann::json::parse(in);
  if (doc.is_array()) return doc.get<std::vector<BenchmarkReport>>();
  return {doc.get<BenchmarkReport>()};
}

}  // namespace mdecode
