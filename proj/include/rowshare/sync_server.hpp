// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rowshare/sync_state.hpp"
#include "rowshare/wire.hpp"

namespace rowshare::sync {

/// TCP front end for a SyncState: accepts connections, decodes framed
/// requests, dispatches them and writes framed responses. One thread per
/// connection; requests on a connection may be pipelined and responses are
/// written strictly in request order.
class SyncServer {
 public:
  struct Options {
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks an ephemeral port; see port()
  };

  SyncServer(SyncState& state, Options options);
  ~SyncServer();

  SyncServer(const SyncServer&) = delete;
  SyncServer& operator=(const SyncServer&) = delete;

  /// Binds, listens and starts the accept thread. Throws EnvironmentError
  /// on bind failures.
  void start();

  /// Stops accepting, shuts down live connections and joins all threads.
  /// Safe to call twice.
  void stop();

  /// The actual listening port, available after start().
  std::uint16_t port() const { return port_; }

  /// Handles one already-decoded request; exposed so tests can drive the
  /// dispatch table without a socket.
  wire::Response dispatch(const wire::Request& request);

 private:
  void accept_loop();
  void serve_connection(int fd);

  SyncState& state_;
  Options options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex connections_mutex_;
  std::vector<int> connection_fds_;
  std::vector<std::thread> connection_threads_;
};

}  // namespace rowshare::sync
