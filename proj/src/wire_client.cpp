// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/wire_client.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "rowshare/errors.hpp"

namespace rowshare::wire {

WireClient::WireClient(Options options) : options_(std::move(options)) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw EnvironmentError("cannot create socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw InputError("bad host address '" + options_.host + "'");
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int err = errno;
    ::close(fd_);
    throw EnvironmentError("cannot connect to " + options_.host + ":" +
                           std::to_string(options_.port) + ": " + std::strerror(err));
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

WireClient::~WireClient() {
  if (fd_ >= 0) ::close(fd_);
}

Request WireClient::make_request(const std::string& method, Json params) {
  Request request;
  request.id = next_id_++;
  request.method = method;
  request.token = token_;
  request.params = std::move(params);
  return request;
}

void WireClient::send_bytes(const Bytes& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw EnvironmentError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

Response WireClient::read_response() {
  while (true) {
    if (auto body = reader_.next()) {
      if (options_.capture) options_.capture(*body, /*outgoing=*/false);
      return decode_response(*body);
    }
    std::array<std::uint8_t, 64 * 1024> chunk;
    ssize_t n = ::recv(fd_, chunk.data(), chunk.size(), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      throw EnvironmentError("connection closed while awaiting a response");
    }
    reader_.feed(std::span(chunk.data(), static_cast<std::size_t>(n)));
  }
}

Json WireClient::call(const std::string& method, Json params) {
  Request request = make_request(method, std::move(params));
  std::string body = request_to_json(request).dump();
  if (options_.capture) options_.capture(body, /*outgoing=*/true);
  send_bytes(frame_body(body));
  Response response = read_response();
  if (response.id != request.id) {
    throw EnvironmentError("response id " + std::to_string(response.id) +
                           " does not match request id " + std::to_string(request.id));
  }
  if (!response.ok()) {
    throw Error(response.error->code, response.error->message);
  }
  return *response.result;
}

std::vector<Response> WireClient::pipeline(const std::vector<Request>& requests) {
  Bytes out;
  for (const Request& request : requests) {
    std::string body = request_to_json(request).dump();
    if (options_.capture) options_.capture(body, /*outgoing=*/true);
    Bytes frame = frame_body(body);
    out.insert(out.end(), frame.begin(), frame.end());
  }
  send_bytes(out);
  std::vector<Response> responses;
  responses.reserve(requests.size());
  for (const Request& request : requests) {
    Response response = read_response();
    if (response.id != request.id) {
      throw EnvironmentError("pipelined response id " + std::to_string(response.id) +
                             " does not match request id " + std::to_string(request.id));
    }
    responses.push_back(std::move(response));
  }
  return responses;
}

}  // namespace rowshare::wire
