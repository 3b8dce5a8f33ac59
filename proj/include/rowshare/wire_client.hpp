// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rowshare/wire.hpp"

namespace rowshare::wire {

/// Blocking client for the framed request/response protocol. One connection,
/// per-connection monotonically increasing request ids, optional pipelining.
/// Not thread-safe; use one client per thread.
class WireClient {
 public:
  /// Observes every frame body this client sends or receives; used by the
  /// confidentiality audit to scan live traffic.
  using CaptureHook = std::function<void(std::string_view body, bool outgoing)>;

  struct Options {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    CaptureHook capture;  // optional
  };

  explicit WireClient(Options options);
  ~WireClient();

  WireClient(const WireClient&) = delete;
  WireClient& operator=(const WireClient&) = delete;

  /// Session token attached to every subsequent request.
  void set_token(std::string token) { token_ = std::move(token); }
  const std::string& token() const { return token_; }

  /// One request, one response. Error responses are re-thrown as Error with
  /// the wire code; transport problems surface as EnvironmentError.
  Json call(const std::string& method, Json params = Json::object());

  /// Sends every request back to back in one write, then reads the
  /// responses in order. Error responses are returned, not thrown: batch
  /// callers decide per entry.
  std::vector<Response> pipeline(const std::vector<Request>& requests);

  /// Builds a request carrying this client's token and the next id.
  Request make_request(const std::string& method, Json params = Json::object());

 private:
  void send_bytes(const Bytes& data);
  Response read_response();

  Options options_;
  int fd_ = -1;
  std::uint64_t next_id_ = 1;
  std::string token_;
  FrameReader reader_;
};

}  // namespace rowshare::wire
