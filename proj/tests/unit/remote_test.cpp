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

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "mdecode/errors.hpp"
#include "mdecode/remote.hpp"
#include "test_util.hpp"

using namespace mdecode;
using mdecode::testing::row;
using mdecode::testing::table;

namespace {

// Handler that answers hello with `vocab` and every logprobs request with `reply`.
WireServer::Handler fixed_reply(int vocab, std::string reply) {
  return [vocab, reply](const std::string& line) {
    const auto request = nlohmann::json::parse(line);
    if (request.at("op") == "hello") return nlohmann::json{{"vocab_size", vocab}, {"eos", nullptr}}.dump();
    return reply;
  };
}

}  // namespace

TEST_CASE("parse_endpoint") {
  const auto a = parse_endpoint("tcp://localhost:8080");
  CHECK(a.host == "localhost");
  CHECK(a.port == 8080);
  const auto b = parse_endpoint("10.0.0.1:7");
  CHECK(b.host == "10.0.0.1");
  CHECK(b.port == 7);
  CHECK_THROWS_AS(parse_endpoint("tcp://nohost"), std::invalid_argument);
  CHECK_THROWS_AS(parse_endpoint("tcp://h:99999"), std::invalid_argument);
  CHECK(looks_like_endpoint("tcp://h:1"));
  CHECK_FALSE(looks_like_endpoint("models/target.json"));
}

TEST_CASE("remote backend reproduces a served table") {
  const auto local = table({0.7, 0.2, 0.1}, {row({0}, {0.1, 0.1, 0.8}), row({2, 1}, {0.3, 0.3, 0.4})}, TokenId{2});
  WireServer server(local);
  const auto remote = remote_logit_client(server.address());
  CHECK(remote->vocab_size() == 3);
  CHECK(remote->eos_token() == TokenId{2});
  CHECK(remote->vocab_labels() == local->vocab_labels());

  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    TokenSeq ctx(rng() % 5);
    for (auto& t : ctx) t = static_cast<TokenId>(rng() % 3);
    const auto want = local->next_distribution(ctx);
    const auto got = remote->next_distribution(ctx);
    for (std::size_t v = 0; v < 3; ++v) CHECK(got.probs()[v] == doctest::Approx(want.probs()[v]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(remote->next_distribution(TokenSeq{3}), std::invalid_argument);
}

TEST_CASE("remote backend handles zero-probability tokens") {
  const auto local = table({0.0, 1.0, 0.0});
  WireServer server(local);
  const auto remote = remote_logit_client(server.address());
  const auto d = remote->next_distribution(TokenSeq{});
  CHECK(d.probs()[0] == 0.0);
  CHECK(d.probs()[1] == 1.0);
}

TEST_CASE("equal logprobs give the uniform distribution") {
  WireServer server(fixed_reply(4, R"({"logprobs":[-7.5,-7.5,-7.5,-7.5]})"));
  const auto remote = remote_logit_client(server.address());
  const auto d = remote->next_distribution(TokenSeq{1, 2});
  for (double p : d.probs()) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("protocol violations raise BackendUnavailable") {
  SUBCASE("length mismatch") {
    WireServer server(fixed_reply(4, R"({"logprobs":[-1.0,-1.0,-1.0]})"));
    const auto remote = remote_logit_client(server.address());
    CHECK_THROWS_AS(remote->next_distribution(TokenSeq{}), BackendUnavailable);
  }
  SUBCASE("malformed reply") {
    WireServer server(fixed_reply(2, "this is not json"));
    const auto remote = remote_logit_client(server.address());
    CHECK_THROWS_AS(remote->next_distribution(TokenSeq{}), BackendUnavailable);
  }
  SUBCASE("error reply") {
    WireServer server(fixed_reply(2, R"({"error":"model exploded"})"));
    const auto remote = remote_logit_client(server.address());
    CHECK_THROWS_AS(remote->next_distribution(TokenSeq{}), BackendUnavailable);
  }
  SUBCASE("bad handshake") {
    WireServer server([](const std::string&) { return std::string(R"({"vocab_size":0})"); });
    CHECK_THROWS_AS(remote_logit_client(server.address()), BackendUnavailable);
  }
  SUBCASE("timeout") {
    WireServer server([](const std::string& line) {
      if (nlohmann::json::parse(line).at("op") == "hello") return std::string(R"({"vocab_size":2,"eos":null})");
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      return std::string(R"({"logprobs":[0.0,0.0]})");
    });
    const auto remote = remote_logit_client(server.address(), std::chrono::milliseconds(100));
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(remote->next_distribution(TokenSeq{}), BackendUnavailable);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::milliseconds(550));
  }
  SUBCASE("connection refused") {
    std::string address;
    {
      WireServer server(fixed_reply(2, "{}"));
      address = server.address();
    }
    CHECK_THROWS_AS(remote_logit_client(address, std::chrono::milliseconds(500)), BackendUnavailable);
  }
}

TEST_CASE("handle_wire_request") {
  const auto local = table({0.5, 0.5});
  const auto hello = handle_wire_request(*local, {{"op", "hello"}});
  CHECK(hello.at("vocab_size") == 2);
  CHECK(hello.at("eos").is_null());
  const auto lp = handle_wire_request(*local, {{"op", "logprobs"}, {"context", {0, 1}}});
  REQUIRE(lp.at("logprobs").size() == 2);
  CHECK(lp.at("logprobs")[0].get<double>() == doctest::Approx(std::log(0.5)));
  CHECK(handle_wire_request(*local, {{"op", "bogus"}}).contains("error"));
  CHECK(handle_wire_request(*local, {{"op", "logprobs"}, {"context", {5}}}).contains("error"));
}

TEST_CASE("concurrent queries through one client") {
  const auto local = table({0.6, 0.3, 0.1}, {row({1}, {0.2, 0.2, 0.6})});
  WireServer server(local);
  const auto remote = remote_logit_client(server.address());
  std::vector<std::thread> threads;
  std::vector<int> failures(8, 0);
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        const TokenSeq ctx{static_cast<TokenId>((t + i) % 3)};
        const auto d = remote->next_distribution(ctx);
        const auto want = local->next_distribution(ctx);
        if (std::abs(d.probs()[2] - want.probs()[2]) > 1e-9) ++failures[t];
      }
    });
  }
  for (auto& th : threads) th.join();
  for (int f : failures) CHECK(f == 0);
}
