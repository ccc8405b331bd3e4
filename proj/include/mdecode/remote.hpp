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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mdecode/backends.hpp"

namespace mdecode {

// Line-delimited JSON logits protocol:
//   {"op":"hello"}                    -> {"vocab_size":V,"eos":id|null}
//   {"op":"logprobs","context":[...]} -> {"logprobs":[...]}
//   failures                          -> {"error":"..."}

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

// Accepts "tcp://host:port" or "host:port". Throws std::invalid_argument.
Endpoint parse_endpoint(const std::string& address);
bool looks_like_endpoint(const std::string& address);

// Client side. One socket guarded by a mutex, so concurrent queries are safe
// and serialized on the wire.
class RemoteLm final : public LmBackend {
 public:
  // Connects and performs the handshake. Throws BackendUnavailable.
  explicit RemoteLm(const std::string& address,
                    std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~RemoteLm() override;

  RemoteLm(const RemoteLm&) = delete;
  RemoteLm& operator=(const RemoteLm&) = delete;

  std::size_t vocab_size() const override { return vocab_size_; }
  std::optional<TokenId> eos_token() const override { return eos_; }
  const std::vector<std::string>& vocab_labels() const override { return labels_; }
  std::string describe() const override { return "remote(" + address_ + ")"; }

 protected:
  Distribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  nlohmann::json round_trip(const nlohmann::json& request) const;

  std::string address_;
  int fd_ = -1;
  std::size_t vocab_size_ = 0;
  std::optional<TokenId> eos_;
  std::vector<std::string> labels_;
  mutable std::mutex mu_;
  mutable std::string pending_;
};

std::shared_ptr<const RemoteLm> remote_logit_client(
    const std::string& address, std::chrono::milliseconds timeout = std::chrono::seconds(10));

// Server side: answers one protocol request for a local backend. Optional
// "vocab" labels are included in the hello reply when the backend has them.
nlohmann::json handle_wire_request(const LmBackend& backend, const nlohmann::json& request);

// Minimal TCP server for the protocol, one thread per connection. The
// handler maps a request line to a reply line.
class WireServer {
 public:
  using Handler = std::function<std::string(const std::string& line)>;

  // Binds 127.0.0.1:port (0 picks an ephemeral port) and starts serving.
  WireServer(Handler handler, std::uint16_t port = 0);
  // Serves `backend` with handle_wire_request.
  explicit WireServer(BackendPtr backend, std::uint16_t port = 0);
  ~WireServer();

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::string address() const { return "tcp://127.0.0.1:" + std::to_string(port_); }
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

 private:
  void accept_loop();
  void serve_connection(int fd);

  Handler handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

}  // namespace mdecode
