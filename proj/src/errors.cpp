// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/errors.hpp"

namespace rowshare {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAuthFailed: return "AUTH_FAILED";
    case ErrorCode::kNotFound: return "NOT_FOUND";
    case ErrorCode::kAffirmativelyAbsent: return "AFFIRMATIVELY_ABSENT";
    case ErrorCode::kSignatureInvalid: return "SIGNATURE_INVALID";
    case ErrorCode::kMethodUnknown: return "METHOD_UNKNOWN";
    case ErrorCode::kSchemaError: return "SCHEMA_ERROR";
    case ErrorCode::kFrameTooLarge: return "FRAME_TOO_LARGE";
    case ErrorCode::kInternal: return "INTERNAL";
  }
  return "INTERNAL";
}

ErrorCode error_code_from_name(std::string_view name) {
  if (name == "AUTH_FAILED") return ErrorCode::kAuthFailed;
  if (name == "NOT_FOUND") return ErrorCode::kNotFound;
  if (name == "AFFIRMATIVELY_ABSENT") return ErrorCode::kAffirmativelyAbsent;
  if (name == "SIGNATURE_INVALID") return ErrorCode::kSignatureInvalid;
  if (name == "METHOD_UNKNOWN") return ErrorCode::kMethodUnknown;
  if (name == "SCHEMA_ERROR") return ErrorCode::kSchemaError;
  if (name == "FRAME_TOO_LARGE") return ErrorCode::kFrameTooLarge;
  if (name == "INTERNAL") return ErrorCode::kInternal;
  throw InputError("unknown error code '" + std::string(name) + "'");
}

}  // namespace rowshare
