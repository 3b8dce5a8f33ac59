// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rowshare/bytes.hpp"
#include "rowshare/crypto.hpp"
#include "rowshare/errors.hpp"

namespace rowshare::wire {

/// nlohmann's default object type keeps keys in lexicographic order, so
/// dumping the same envelope always yields the same bytes; golden capture
/// tests rely on that.
using Json = nlohmann::json;

/// Frames are a 4-byte big-endian length followed by that many bytes of
/// JSON text. Rows in practice are a few hundred bytes; 1 MiB is generous
/// headroom, and anything larger is refused outright.
inline constexpr std::size_t kMaxFrameSize = 1 << 20;

/// The eleven service methods, grouped in three namespaces:
/// registration (reg.*), key storage (key.*) and row relay (syn.*).
inline constexpr const char* kMethods[] = {
    "reg.register_user",
    "reg.authenticate_user",
    "key.get_public_keys",
    "key.deposit_key",
    "key.get_decrypting_key",
    "key.delete_decrypting_key",
    "syn.send_row",
    "syn.get_pending_rows",
    "syn.delete_pending_row",
    "syn.resend_row",
    "syn.get_all_users",
};

bool is_known_method(std::string_view method);

struct Request {
  std::uint64_t id = 0;
  std::string method;
  std::string token;  // empty when the method needs no session
  Json params = Json::object();

  bool operator==(const Request&) const = default;
};

struct WireError {
  ErrorCode code = ErrorCode::kInternal;
  std::string message;

  bool operator==(const WireError&) const = default;
};

struct Response {
  std::uint64_t id = 0;
  std::optional<Json> result;     // exactly one of result / error is set
  std::optional<WireError> error;

  bool ok() const { return result.has_value(); }
  bool operator==(const Response&) const = default;
};

// --- Framing -----------------------------------------------------------------

/// Length-prefixes `body`. Throws Error(kFrameTooLarge) if body exceeds
/// kMaxFrameSize.
Bytes frame_body(std::string_view body);

/// Incremental frame extractor for a byte stream. Feed whatever arrived,
/// then drain complete frames with next(). A declared length above
/// kMaxFrameSize throws Error(kFrameTooLarge); the stream is poisoned at
/// that point and the connection should be closed.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> data);
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size() - consumed_; }

 private:
  Bytes buffer_;
  std::size_t consumed_ = 0;
};

// --- Envelopes ---------------------------------------------------------------

Json request_to_json(const Request& request);
Request request_from_json(const Json& body);
Bytes encode_request(const Request& request);
Request decode_request(std::string_view body);  // throws InputError on schema violations

Json response_to_json(const Response& response);
Response response_from_json(const Json& body);
Bytes encode_response(const Response& response);
Response decode_response(std::string_view body);

// --- Shared record schemas ---------------------------------------------------

/// A row in flight: ciphertext plus routing and origin proof. The service
/// stores and relays it without ever being able to open it.
struct PendingRow {
  std::int64_t id_pending_row = 0;
  std::string sender;
  std::string receiver;
  std::int64_t submitted_at = 0;  // unix milliseconds, assigned by the service
  Bytes encrypted_row;
  crypto::Signature origin_sig;

  bool operator==(const PendingRow&) const = default;
};

/// A wrapped decrypting key for one pending row and one receiver.
struct WrappedKeyRecord {
  std::int64_t id_row = 0;
  std::string sender;
  std::string receiver;
  std::optional<std::int64_t> expiry;  // unix milliseconds; absent = no expiry
  Bytes wrapped_key;
  crypto::Signature origin_sig;

  bool operator==(const WrappedKeyRecord&) const = default;
};

Json pending_row_to_json(const PendingRow& row);
PendingRow pending_row_from_json(const Json& body);
Json wrapped_key_to_json(const WrappedKeyRecord& record);
WrappedKeyRecord wrapped_key_from_json(const Json& body);

// --- Origin-signature payloads -------------------------------------------------

/// Byte string a sender signs when submitting a row: sender, receiver and
/// ciphertext, each length-delimited. The pending id is deliberately not
/// covered — the service assigns it after signing, and a resend re-queues
/// the same signed bytes under a fresh id.
Bytes pending_row_sig_payload(std::string_view sender, std::string_view receiver,
                              std::span<const std::uint8_t> encrypted_row);

/// Byte string a sender signs when depositing a key: parties, the pending
/// row id it unlocks, the wrapped key bytes and the expiry (eight 0xFF
/// bytes when absent, so "no expiry" cannot be confused with any timestamp).
Bytes wrapped_key_sig_payload(std::string_view sender, std::string_view receiver,
                              std::int64_t id_row, std::span<const std::uint8_t> wrapped_key,
                              std::optional<std::int64_t> expiry);

// --- JSON field helpers --------------------------------------------------------

/// Typed field access that reports SCHEMA_ERROR-grade failures as
/// InputError with the offending key in the message.
std::string get_string(const Json& body, const char* key);
std::int64_t get_int(const Json& body, const char* key);
std::optional<std::int64_t> get_optional_int(const Json& body, const char* key);
Bytes get_hex(const Json& body, const char* key);
crypto::Signature get_signature(const Json& body, const char* key);
const Json& get_object(const Json& body, const char* key);

}  // namespace rowshare::wire
