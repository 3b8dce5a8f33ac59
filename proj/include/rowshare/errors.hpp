// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rowshare {

/// Closed error taxonomy shared by the wire protocol and the libraries
/// behind it. Clients must be able to tell an affirmative "no such key"
/// answer apart from a transport failure, so the two never share a code.
enum class ErrorCode {
  kAuthFailed,
  kNotFound,
  kAffirmativelyAbsent,
  kSignatureInvalid,
  kMethodUnknown,
  kSchemaError,
  kFrameTooLarge,
  kInternal,
};

std::string_view error_code_name(ErrorCode code);
ErrorCode error_code_from_name(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Authenticated decryption failed: wrong key or tampered bytes.
/// Distinct from "key missing" by type.
class AuthenticityError : public Error {
 public:
  explicit AuthenticityError(const std::string& message)
      : Error(ErrorCode::kSignatureInvalid, message) {}
};

/// Malformed caller input (bad key length, bad literal, bad schema).
class InputError : public Error {
 public:
  explicit InputError(const std::string& message)
      : Error(ErrorCode::kSchemaError, message) {}
};

/// The process environment failed us (randomness source, sockets, disk).
class EnvironmentError : public Error {
 public:
  explicit EnvironmentError(const std::string& message)
      : Error(ErrorCode::kInternal, message) {}
};

}  // namespace rowshare
