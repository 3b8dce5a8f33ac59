// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/sync_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "rowshare/errors.hpp"

namespace rowshare::sync {
namespace {

void write_all(int fd, const Bytes& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw EnvironmentError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

wire::Json pending_batch_to_json(const PendingBatch& batch) {
  wire::Json rows = wire::Json::array();
  for (const wire::PendingRow& row : batch.rows) rows.push_back(wire::pending_row_to_json(row));
  return wire::Json{{"rows", std::move(rows)}, {"more", batch.more}};
}

}  // namespace

SyncServer::SyncServer(SyncState& state, Options options)
    : state_(state), options_(std::move(options)) {}

SyncServer::~SyncServer() { stop(); }

void SyncServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw EnvironmentError("cannot create listening socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw InputError("bad bind address '" + options_.bind_address + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw EnvironmentError("cannot bind " + options_.bind_address + ":" +
                           std::to_string(options_.port) + ": " + std::strerror(errno));
  }
  if (::listen(listen_fd_, 64) != 0) {
    throw EnvironmentError(std::string("cannot listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void SyncServer::stop() {
  if (stopping_.exchange(true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(connections_mutex_);
    for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(connection_threads_);
  }
  for (std::thread& t : threads) {
    if (t.joinable()) t.join();
  }
}

void SyncServer::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;  // listener shut down
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(connections_mutex_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    connection_fds_.push_back(fd);
    connection_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void SyncServer::serve_connection(int fd) {
  wire::FrameReader reader;
  std::array<std::uint8_t, 64 * 1024> chunk;
  bool open = true;
  while (open) {
    ssize_t n = ::recv(fd, chunk.data(), chunk.size(), 0);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      break;  // closed or shut down
    }
    try {
      reader.feed(std::span(chunk.data(), static_cast<std::size_t>(n)));
      while (auto body = reader.next()) {
        wire::Response response;
        try {
          response = dispatch(wire::decode_request(*body));
        } catch (const Error& e) {
          // The request could not even be decoded; answer with id 0 and
          // drop the connection, since request/response pairing is lost.
          response = wire::Response{0, std::nullopt, wire::WireError{e.code(), e.what()}};
          open = false;
        }
        write_all(fd, wire::encode_response(response));
      }
    } catch (const Error& e) {
      // Oversized frame declared: tell the peer, then hang up.
      try {
        write_all(fd, wire::encode_response(
                          wire::Response{0, std::nullopt, wire::WireError{e.code(), e.what()}}));
      } catch (const Error&) {
      }
      break;
    }
  }
  ::close(fd);
}

wire::Response SyncServer::dispatch(const wire::Request& request) {
  wire::Response response;
  response.id = request.id;
  const wire::Json& p = request.params;
  try {
    if (request.method == "reg.register_user") {
      state_.register_user(wire::get_string(p, "user_id"), wire::get_string(p, "password"),
                           wire::get_hex(p, "enc_public"), wire::get_hex(p, "sig_public"));
      response.result = wire::Json::object();
    } else if (request.method == "reg.authenticate_user") {
      std::string token =
          state_.authenticate_user(wire::get_string(p, "user_id"), wire::get_string(p, "password"));
      response.result = wire::Json{{"token", token}};
    } else if (request.method == "key.get_public_keys") {
      PublicKeys keys = state_.get_public_keys(request.token, wire::get_string(p, "user_id"));
      response.result =
          wire::Json{{"enc_public", to_hex(keys.enc_public)}, {"sig_public", to_hex(keys.sig_public)}};
    } else if (request.method == "key.deposit_key") {
      state_.deposit_key(request.token, wire::get_int(p, "id_row"),
                         wire::get_string(p, "receiver"), wire::get_optional_int(p, "expiry"),
                         wire::get_hex(p, "wrapped_key"), wire::get_signature(p, "origin_sig"));
      response.result = wire::Json::object();
    } else if (request.method == "key.get_decrypting_key") {
      wire::WrappedKeyRecord record =
          state_.get_decrypting_key(request.token, wire::get_int(p, "id_pending_row"));
      response.result = wire::wrapped_key_to_json(record);
    } else if (request.method == "key.delete_decrypting_key") {
      state_.delete_decrypting_key(request.token, wire::get_int(p, "id_row"),
                                   wire::get_string(p, "receiver"));
      response.result = wire::Json::object();
    } else if (request.method == "syn.send_row") {
      std::int64_t id = state_.send_row(request.token, wire::get_string(p, "receiver"),
                                        wire::get_hex(p, "encrypted_row"),
                                        wire::get_signature(p, "origin_sig"));
      response.result = wire::Json{{"id_pending_row", id}};
    } else if (request.method == "syn.get_pending_rows") {
      std::optional<std::int64_t> max = wire::get_optional_int(p, "max");
      std::size_t limit = (max && *max > 0) ? static_cast<std::size_t>(*max) : 0;
      response.result = pending_batch_to_json(state_.get_pending_rows(request.token, limit));
    } else if (request.method == "syn.delete_pending_row") {
      state_.delete_pending_row(request.token, wire::get_int(p, "id"));
      response.result = wire::Json::object();
    } else if (request.method == "syn.resend_row") {
      std::int64_t id = state_.resend_row(request.token, wire::get_int(p, "id"));
      response.result = wire::Json{{"id_pending_row", id}};
    } else if (request.method == "syn.get_all_users") {
      response.result = wire::Json{{"user_ids", state_.get_all_users(request.token)}};
    } else {
      throw Error(ErrorCode::kMethodUnknown, "unknown method '" + request.method + "'");
    }
  } catch (const Error& e) {
    response.result.reset();
    response.error = wire::WireError{e.code(), e.what()};
  } catch (const std::exception& e) {
    response.result.reset();
    response.error = wire::WireError{ErrorCode::kInternal, e.what()};
  }
  return response;
}

}  // namespace rowshare::sync
