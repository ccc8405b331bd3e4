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

// mdecode command-line front end: run, synth, oracle-check, serve.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdecode/backends.hpp"
#include "mdecode/errors.hpp"
#include "mdecode/harness.hpp"
#include "mdecode/json_io.hpp"
#include "mdecode/remote.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitOracleMismatch = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

mdecode::BackendPtr load_backend(const std::string& spec_or_endpoint) {
  if (mdecode::looks_like_endpoint(spec_or_endpoint)) return mdecode::remote_logit_client(spec_or_endpoint);
  return mdecode::table_lm_from_file(spec_or_endpoint);
}

struct RunArgs {
  std::string modes = "md";
  std::string target;
  std::string reference;
  std::string corpus;
  std::string acceptance = "threshold";
  std::string weights = "generated-plus-one";
  std::string out;
  std::string format = "json";
  std::string traces;
  std::size_t bon_n = 8;
  double temperature = 0.7;
  int threads = 1;
  bool parallel_revision = false;
  mdecode::DecodeConfig config;
};

int cmd_run(const RunArgs& args) {
  std::vector<mdecode::DecodeMode> modes;
  std::stringstream ss(args.modes);
  for (std::string part; std::getline(ss, part, ',');) {
    const auto mode = mdecode::parse_decode_mode(part);
    if (!mode) throw UsageError("unknown mode '" + part + "' (expected md, greedy or bon)");
    modes.push_back(*mode);
  }
  if (modes.empty()) throw UsageError("--mode needs at least one mode");
  const auto format = mdecode::parse_report_format(args.format);
  if (!format) throw UsageError("unknown format '" + args.format + "'");

  mdecode::DecodeConfig config = args.config;
  const auto acceptance = mdecode::parse_acceptance_mode(args.acceptance);
  const auto weights = mdecode::parse_weight_scheme(args.weights);
  if (!acceptance) throw UsageError("unknown acceptance mode '" + args.acceptance + "'");
  if (!weights) throw UsageError("unknown weight scheme '" + args.weights + "'");
  config.acceptance_mode = *acceptance;
  config.weight_scheme = *weights;
  if (const auto errors = mdecode::validate_config(config); !errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw UsageError(msg);
  }

  const auto target = load_backend(args.target);
  const auto reference = load_backend(args.reference);
  const auto corpus = mdecode::load_jsonl_corpus(args.corpus);

  std::ofstream traces;
  if (!args.traces.empty()) {
    traces.open(args.traces);
    if (!traces) throw std::runtime_error("cannot open '" + args.traces + "' for writing");
  }

  std::vector<mdecode::BenchmarkReport> reports;
  for (const auto mode : modes) {
    mdecode::BenchmarkOptions options;
    options.mode = mode;
    options.bon_n = args.bon_n;
    options.bon_temperature = args.temperature;
    options.threads = args.threads;
    options.revision_execution =
        args.parallel_revision ? mdecode::Execution::kParallel : mdecode::Execution::kSerial;
    if (traces.is_open()) {
      options.on_trace = [&traces](const mdecode::QaItem& item, const mdecode::DecodeTrace& trace) {
        nlohmann::json doc = trace;
        doc["id"] = item.id;
        traces << doc.dump() << '\n';
      };
    }
    reports.push_back(mdecode::run_benchmark(corpus, *target, *reference, config, options));
  }
  mdecode::emit_reports(reports, args.out, *format);
  std::cout << mdecode::render_markdown(reports);
  return kExitOk;
}

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t size = 200;
  std::size_t vocab = 32;
  double error_rate = 0.5;
  double boosted_prob = 0.9;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& args) {
  mdecode::SynthSuite suite;
  try {
    suite = mdecode::synth_hallucination_suite(args.seed, args.size, args.vocab, args.error_rate, args.boosted_prob);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  namespace fs = std::filesystem;
  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  mdecode::write_jsonl_corpus((dir / "corpus.jsonl").string(), suite.corpus);
  const auto write_json = [](const fs::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << doc.dump() << '\n';
  };
  write_json(dir / "reference.json", mdecode::table_lm_to_spec(*suite.reference));
  write_json(dir / "target.json", mdecode::table_lm_to_spec(*suite.target_table));

  nlohmann::json truth = nlohmann::json::array();
  for (const auto& t : suite.ground_truth) {
    truth.push_back({{"id", t.item_id},
                     {"perturbed", t.perturbed},
                     {"position", t.position},
                     {"correct_token", t.correct_token},
                     {"wrong_token", t.wrong_token}});
  }
  write_json(dir / "ground_truth.json", truth);
  std::cout << "wrote " << suite.corpus.size() << " items to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_oracle_check(std::uint64_t seed, std::size_t trials) {
  const auto summary = mdecode::run_oracle_check(seed, trials);
  for (const auto& line : summary.details) std::cout << "MISMATCH " << line << "\n";
  std::cout << "oracle-check: " << summary.trials << " trials, " << summary.mismatches << " mismatches, "
            << summary.score_violations << " score violations, " << summary.frontier_violations
            << " frontier violations\n";
  const bool ok = summary.mismatches == 0 && summary.score_violations == 0 && summary.frontier_violations == 0;
  return ok ? kExitOk : kExitOracleMismatch;
}

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(const std::string& model, std::uint16_t port) {
  auto backend = mdecode::table_lm_from_file(model);
  mdecode::WireServer server(backend, port);
  std::cout << "serving " << backend->describe() << " on " << server.address() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monitored decoding with tree-based revision"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Decode a corpus and write a benchmark report");
  run_cmd->add_option("--mode", run.modes, "md|greedy|bon, or a comma-separated list")->capture_default_str();
  run_cmd->add_option("--target", run.target, "Target table spec or tcp://host:port")->required();
  run_cmd->add_option("--reference", run.reference, "Reference table spec or tcp://host:port")->required();
  run_cmd->add_option("--corpus", run.corpus, "JSONL corpus")->required();
  run_cmd->add_option("--gamma0", run.config.gamma0)->capture_default_str();
  run_cmd->add_option("--block", run.config.block_size_m, "Block size m")->capture_default_str();
  run_cmd->add_option("--branch", run.config.branch_n, "Candidates per expansion N")->capture_default_str();
  run_cmd->add_option("--keep", run.config.keep_k, "Paths kept per layer K")->capture_default_str();
  run_cmd->add_option("--max-tokens", run.config.max_tokens)->capture_default_str();
  run_cmd->add_option("--acceptance", run.acceptance, "threshold|clamped|stochastic")->capture_default_str();
  run_cmd->add_option("--weights", run.weights, "generated-plus-one|full-context")->capture_default_str();
  run_cmd->add_option("--prob-floor", run.config.prob_floor)->capture_default_str();
  run_cmd->add_option("--bon-n", run.bon_n)->capture_default_str();
  run_cmd->add_option("--temperature", run.temperature, "BoN sampling temperature")->capture_default_str();
  run_cmd->add_option("--seed", run.config.seed)->capture_default_str();
  run_cmd->add_option("--threads", run.threads, "Items decoded concurrently")->capture_default_str();
  run_cmd->add_flag("--parallel-revision", run.parallel_revision, "Expand revision frontiers with OpenMP");
  run_cmd->add_option("--traces", run.traces, "Write one JSON trace per md decode (JSONL)");
  run_cmd->add_option("--out", run.out, "Report path")->required();
  run_cmd->add_option("--format", run.format, "json|markdown")->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic hallucination suite");
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--size", synth.size)->capture_default_str();
  synth_cmd->add_option("--vocab", synth.vocab)->capture_default_str();
  synth_cmd->add_option("--error-rate", synth.error_rate)->capture_default_str();
  synth_cmd->add_option("--boosted-prob", synth.boosted_prob)->capture_default_str();
  synth_cmd->add_option("--out-dir", synth.out_dir)->required();

  std::uint64_t oracle_seed = 0;
  std::size_t oracle_trials = 200;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Compare tree revision against brute force");
  oracle_cmd->add_option("--seed", oracle_seed)->capture_default_str();
  oracle_cmd->add_option("--trials", oracle_trials)->capture_default_str();

  std::string serve_model;
  std::uint16_t serve_port = 0;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a table model over the logits wire protocol");
  serve_cmd->add_option("--model", serve_model, "Table spec")->required();
  serve_cmd->add_option("--port", serve_port, "TCP port (0 = ephemeral)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*synth_cmd) return cmd_synth(synth);
    if (*oracle_cmd) return cmd_oracle_check(oracle_seed, oracle_trials);
    if (*serve_cmd) return cmd_serve(serve_model, serve_port);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
