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

#include "mdecode/remote.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "mdecode/errors.hpp"

namespace mdecode {

namespace {

constexpr std::string_view kTcpScheme = "tcp://";

void send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BackendUnavailable(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Reads one '\n'-terminated line; `buffer` keeps bytes past the newline.
// Returns false on orderly EOF before any newline.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    if (auto pos = buffer.find('\n'); pos != std::string::npos) {
      line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      return true;
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw BackendUnavailable("timed out waiting for reply");
      throw BackendUnavailable(std::string("recv failed: ") + std::strerror(errno));
    }
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

bool looks_like_endpoint(const std::string& address) {
  return address.rfind(kTcpScheme, 0) == 0;
}

Endpoint parse_endpoint(const std::string& address) {
  std::string rest = address;
  if (looks_like_endpoint(rest)) rest = rest.substr(kTcpScheme.size());
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
    throw std::invalid_argument("endpoint '" + address + "' is not host:port");
  }
  Endpoint ep;
  ep.host = rest.substr(0, colon);
  const std::string port_text = rest.substr(colon + 1);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("endpoint '" + address + "' has a bad port");
  }
  if (port == 0 || port > 65535) throw std::invalid_argument("endpoint '" + address + "' has a bad port");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

// ---------------------------------------------------------------------------
// RemoteLm

RemoteLm::RemoteLm(const std::string& address, std::chrono::milliseconds timeout) : address_(address) {
  Endpoint ep;
  try {
    ep = parse_endpoint(address);
  } catch (const std::invalid_argument& e) {
    throw BackendUnavailable(e.what());
  }
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (int rc = ::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &found); rc != 0) {
    throw BackendUnavailable("cannot resolve '" + ep.host + "': " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(found);
  if (fd_ < 0) throw BackendUnavailable("cannot connect to " + address + ": " + last_error);

  try {
    const auto hello = round_trip({{"op", "hello"}});
    if (!hello.contains("vocab_size") || !hello.at("vocab_size").is_number_integer()) {
      throw BackendUnavailable("handshake reply lacks integer vocab_size");
    }
    const auto vocab = hello.at("vocab_size").get<long long>();
    if (vocab <= 0) throw BackendUnavailable("handshake vocab_size must be positive");
    vocab_size_ = static_cast<std::size_t>(vocab);
    if (hello.contains("eos") && !hello.at("eos").is_null()) {
      const auto eos = hello.at("eos").get<long long>();
      if (eos < 0 || static_cast<std::size_t>(eos) >= vocab_size_) {
        throw BackendUnavailable("handshake eos outside vocabulary");
      }
      eos_ = static_cast<TokenId>(eos);
    }
    if (hello.contains("vocab") && hello.at("vocab").is_array()) {
      labels_ = hello.at("vocab").get<std::vector<std::string>>();
      if (labels_.size() != vocab_size_) labels_.clear();
    }
  } catch (const nlohmann::json::exception& e) {
    ::close(fd_);
    throw BackendUnavailable(std::string("malformed handshake reply: ") + e.what());
  } catch (...) {
    ::close(fd_);
    throw;
  }
}

RemoteLm::~RemoteLm() {
  if (fd_ >= 0) ::close(fd_);
}

nlohmann::json RemoteLm::round_trip(const nlohmann::json& request) const {
  std::lock_guard lock(mu_);
  send_all(fd_, request.dump() + "\n");
  std::string line;
  if (!read_line(fd_, pending_, line)) throw BackendUnavailable("connection closed by " + address_);
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable("malformed reply from " + address_ + ": " + e.what());
  }
  if (!reply.is_object()) throw BackendUnavailable("reply from " + address_ + " is not an object");
  if (reply.contains("error")) {
    throw BackendUnavailable("remote error from " + address_ + ": " + reply.at("error").dump());
  }
  return reply;
}

Distribution RemoteLm::do_next_distribution(std::span<const TokenId> context) const {
  const auto reply = round_trip({{"op", "logprobs"}, {"context", std::vector<TokenId>(context.begin(), context.end())}});
  std::vector<double> logprobs;
  try {
    const auto& field = reply.at("logprobs");
    if (!field.is_array()) throw BackendUnavailable("logprobs is not an array");
    logprobs.reserve(field.size());
    for (const auto& v : field) {
      if (v.is_null()) {
        logprobs.push_back(-std::numeric_limits<double>::infinity());
      } else {
        logprobs.push_back(v.get<double>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable("malformed logprobs reply: " + std::string(e.what()));
  }
  if (logprobs.size() != vocab_size_) {
    throw BackendUnavailable("logprobs length " + std::to_string(logprobs.size()) + " != vocab_size " +
                             std::to_string(vocab_size_));
  }
  try {
    return Distribution::from_logprobs(logprobs);
  } catch (const std::invalid_argument& e) {
    throw BackendUnavailable(std::string("unusable logprobs: ") + e.what());
  }
}

std::shared_ptr<const RemoteLm> remote_logit_client(const std::string& address,
                                                    std::chrono::milliseconds timeout) {
  return std::make_shared<const RemoteLm>(address, timeout);
}

// ---------------------------------------------------------------------------
// Server side

nlohmann::json handle_wire_request(const LmBackend& backend, const nlohmann::json& request) {
  try {
    if (!request.is_object() || !request.contains("op")) return {{"error", "request needs an \"op\""}};
    const auto op = request.at("op").get<std::string>();
    if (op == "hello") {
      nlohmann::json reply{{"vocab_size", backend.vocab_size()}};
      if (auto eos = backend.eos_token()) {
        reply["eos"] = *eos;
      } else {
        reply["eos"] = nullptr;
      }
      if (!backend.vocab_labels().empty()) reply["vocab"] = backend.vocab_labels();
      return reply;
    }
    if (op == "logprobs") {
      const auto context = request.at("context").get<TokenSeq>();
      const auto dist = backend.next_distribution(context);
      nlohmann::json logprobs = nlohmann::json::array();
      for (double p : dist.probs()) {
        if (p > 0.0) {
          logprobs.push_back(std::log(p));
        } else {
          logprobs.push_back(nullptr);  // -inf has no JSON spelling
        }
      }
      return {{"logprobs", std::move(logprobs)}};
    }
    return {{"error", "unknown op '" + op + "'"}};
  } catch (const std::exception& e) {
    return {{"error", e.what()}};
  }
}

WireServer::WireServer(Handler handler, std::uint16_t port) : handler_(std::move(handler)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

WireServer::WireServer(BackendPtr backend, std::uint16_t port)
    : WireServer(
          [backend](const std::string& line) {
            nlohmann::json request;
            try {
              request = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
              return nlohmann::json{{"error", std::string("malformed request: ") + e.what()}}.dump();
            }
            return handle_wire_request(*backend, request).dump();
          },
          port) {}

WireServer::~WireServer() { stop(); }

void WireServer::accept_loop() {
  while (!stopping_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 50);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(workers_mu_);
    if (stopping_.load()) {
      ::close(fd);
      break;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void WireServer::serve_connection(int fd) {
  std::string buffer;
  std::string line;
  try {
    while (read_line(fd, buffer, line)) {
      if (line.empty()) continue;
      send_all(fd, handler_(line) + "\n");
    }
  } catch (const std::exception&) {
    // Peer went away or the server is shutting down.
  }
}

void WireServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  for (int fd : client_fds_) ::close(fd);
  client_fds_.clear();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

void WireServer::wait() {
  while (!stopping_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace mdecode
