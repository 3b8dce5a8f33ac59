// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/wire.hpp"

#include <algorithm>
#include <cstring>

namespace rowshare::wire {
namespace {

void append_u32be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_u64be(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}

void append_delimited(Bytes& out, std::string_view s) {
  append_u32be(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

Json parse_json(std::string_view body) {
  Json parsed = Json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    throw InputError("message body is not a JSON object");
  }
  return parsed;
}

std::uint64_t get_request_id(const Json& body) {
  auto it = body.find("id");
  if (it == body.end() || !it->is_number_unsigned()) {
    throw InputError("message lacks an unsigned integer 'id'");
  }
  return it->get<std::uint64_t>();
}

}  // namespace

bool is_known_method(std::string_view method) {
  return std::any_of(std::begin(kMethods), std::end(kMethods),
                     [&](const char* m) { return method == m; });
}

// --- Framing -----------------------------------------------------------------

Bytes frame_body(std::string_view body) {
  if (body.size() > kMaxFrameSize) {
    throw Error(ErrorCode::kFrameTooLarge,
                "frame of " + std::to_string(body.size()) + " bytes exceeds the " +
                    std::to_string(kMaxFrameSize) + "-byte limit");
  }
  Bytes out;
  out.reserve(4 + body.size());
  append_u32be(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

void FrameReader::feed(std::span<const std::uint8_t> data) {
  // Reclaim consumed space before appending, so long-lived connections do
  // not grow the buffer without bound.
  if (consumed_ > 0 && consumed_ == buffer_.size()) {
    buffer_.clear();
    consumed_ = 0;
  } else if (consumed_ > 4096) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_));
    consumed_ = 0;
  }
  buffer_.insert(buffer_.end(), data.begin(), data.end());
}

std::optional<std::string> FrameReader::next() {
  if (buffer_.size() - consumed_ < 4) return std::nullopt;
  const std::uint8_t* p = buffer_.data() + consumed_;
  std::uint32_t length = (static_cast<std::uint32_t>(p[0]) << 24) |
                         (static_cast<std::uint32_t>(p[1]) << 16) |
                         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
  if (length > kMaxFrameSize) {
    throw Error(ErrorCode::kFrameTooLarge, "peer declared a frame of " + std::to_string(length) +
                                               " bytes, above the " +
                                               std::to_string(kMaxFrameSize) + "-byte limit");
  }
  if (buffer_.size() - consumed_ - 4 < length) return std::nullopt;
  std::string body(reinterpret_cast<const char*>(p + 4), length);
  consumed_ += 4 + length;
  return body;
}

// --- Envelopes ---------------------------------------------------------------

Json request_to_json(const Request& request) {
  Json body = Json::object();
  body["id"] = request.id;
  body["method"] = request.method;
  if (!request.token.empty()) body["token"] = request.token;
  body["params"] = request.params;
  return body;
}

Request request_from_json(const Json& body) {
  Request request;
  request.id = get_request_id(body);
  request.method = get_string(body, "method");
  auto token = body.find("token");
  if (token != body.end()) {
    if (!token->is_string()) throw InputError("'token' must be a string");
    request.token = token->get<std::string>();
  }
  auto params = body.find("params");
  if (params != body.end()) {
    if (!params->is_object()) throw InputError("'params' must be an object");
    request.params = *params;
  }
  for (const auto& [key, value] : body.items()) {
    if (key != "id" && key != "method" && key != "token" && key != "params") {
      throw InputError("unexpected request field '" + key + "'");
    }
  }
  return request;
}

Bytes encode_request(const Request& request) { return frame_body(request_to_json(request).dump()); }

Request decode_request(std::string_view body) { return request_from_json(parse_json(body)); }

Json response_to_json(const Response& response) {
  if (response.result.has_value() == response.error.has_value()) {
    throw InputError("a response carries exactly one of result and error");
  }
  Json body = Json::object();
  body["id"] = response.id;
  if (response.result) {
    body["result"] = *response.result;
  } else {
    body["error"] = Json{{"code", error_code_name(response.error->code)},
                         {"message", response.error->message}};
  }
  return body;
}

Response response_from_json(const Json& body) {
  Response response;
  response.id = get_request_id(body);
  auto result = body.find("result");
  auto error = body.find("error");
  if ((result != body.end()) == (error != body.end())) {
    throw InputError("a response carries exactly one of 'result' and 'error'");
  }
  if (result != body.end()) {
    response.result = *result;
  } else {
    if (!error->is_object()) throw InputError("'error' must be an object");
    WireError e;
    e.code = error_code_from_name(get_string(*error, "code"));
    e.message = get_string(*error, "message");
    response.error = e;
  }
  for (const auto& [key, value] : body.items()) {
    if (key != "id" && key != "result" && key != "error") {
      throw InputError("unexpected response field '" + key + "'");
    }
  }
  return response;
}

Bytes encode_response(const Response& response) {
  return frame_body(response_to_json(response).dump());
}

Response decode_response(std::string_view body) { return response_from_json(parse_json(body)); }

// --- Shared record schemas ---------------------------------------------------

Json pending_row_to_json(const PendingRow& row) {
  Json body = Json::object();
  body["id_pending_row"] = row.id_pending_row;
  body["sender"] = row.sender;
  body["receiver"] = row.receiver;
  body["submitted_at"] = row.submitted_at;
  body["encrypted_row"] = to_hex(row.encrypted_row);
  body["origin_sig"] = to_hex(row.origin_sig.bytes);
  return body;
}

PendingRow pending_row_from_json(const Json& body) {
  PendingRow row;
  row.id_pending_row = get_int(body, "id_pending_row");
  row.sender = get_string(body, "sender");
  row.receiver = get_string(body, "receiver");
  row.submitted_at = get_int(body, "submitted_at");
  row.encrypted_row = get_hex(body, "encrypted_row");
  row.origin_sig = get_signature(body, "origin_sig");
  return row;
}

Json wrapped_key_to_json(const WrappedKeyRecord& record) {
  Json body = Json::object();
  body["id_row"] = record.id_row;
  body["sender"] = record.sender;
  body["receiver"] = record.receiver;
  if (record.expiry) body["expiry"] = *record.expiry;
  body["wrapped_key"] = to_hex(record.wrapped_key);
  body["origin_sig"] = to_hex(record.origin_sig.bytes);
  return body;
}

WrappedKeyRecord wrapped_key_from_json(const Json& body) {
  WrappedKeyRecord record;
  record.id_row = get_int(body, "id_row");
  record.sender = get_string(body, "sender");
  record.receiver = get_string(body, "receiver");
  record.expiry = get_optional_int(body, "expiry");
  record.wrapped_key = get_hex(body, "wrapped_key");
  record.origin_sig = get_signature(body, "origin_sig");
  return record;
}

// --- Origin-signature payloads -------------------------------------------------

Bytes pending_row_sig_payload(std::string_view sender, std::string_view receiver,
                              std::span<const std::uint8_t> encrypted_row) {
  Bytes payload;
  payload.reserve(8 + sender.size() + receiver.size() + encrypted_row.size());
  append_delimited(payload, sender);
  append_delimited(payload, receiver);
  payload.insert(payload.end(), encrypted_row.begin(), encrypted_row.end());
  return payload;
}

Bytes wrapped_key_sig_payload(std::string_view sender, std::string_view receiver,
                              std::int64_t id_row, std::span<const std::uint8_t> wrapped_key,
                              std::optional<std::int64_t> expiry) {
  if (id_row < 0) throw InputError("id_row must not be negative");
  if (expiry && *expiry < 0) {
    // Negative values could collide with the all-FF "no expiry" marker.
    throw InputError("expiry must not be negative");
  }
  Bytes payload;
  payload.reserve(24 + sender.size() + receiver.size() + wrapped_key.size());
  append_delimited(payload, sender);
  append_delimited(payload, receiver);
  append_u64be(payload, static_cast<std::uint64_t>(id_row));
  payload.insert(payload.end(), wrapped_key.begin(), wrapped_key.end());
  if (expiry) {
    append_u64be(payload, static_cast<std::uint64_t>(*expiry));
  } else {
    payload.insert(payload.end(), 8, 0xFF);
  }
  return payload;
}

// --- JSON field helpers --------------------------------------------------------

std::string get_string(const Json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string()) {
    throw InputError(std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::int64_t get_int(const Json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_number_integer()) {
    throw InputError(std::string("missing or non-integer field '") + key + "'");
  }
  return it->get<std::int64_t>();
}

std::optional<std::int64_t> get_optional_int(const Json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end()) return std::nullopt;
  if (!it->is_number_integer()) {
    throw InputError(std::string("field '") + key + "' must be an integer");
  }
  return it->get<std::int64_t>();
}

Bytes get_hex(const Json& body, const char* key) {
  std::string hex = get_string(body, key);
  try {
    return from_hex(hex);
  } catch (const InputError&) {
    throw InputError(std::string("field '") + key + "' is not uppercase hex");
  }
}

crypto::Signature get_signature(const Json& body, const char* key) {
  Bytes raw = get_hex(body, key);
  if (raw.size() != crypto::kSignatureSize) {
    throw InputError(std::string("field '") + key + "' is not a " +
                     std::to_string(crypto::kSignatureSize) + "-byte signature");
  }
  crypto::Signature sig;
  std::copy(raw.begin(), raw.end(), sig.bytes.begin());
  return sig;
}

const Json& get_object(const Json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_object()) {
    throw InputError(std::string("missing or non-object field '") + key + "'");
  }
  return *it;
}

}  // namespace rowshare::wire
