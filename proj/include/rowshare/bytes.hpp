// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rowshare {

using Bytes = std::vector<std::uint8_t>;

/// Uppercase hexadecimal without separators. All binary material that
/// crosses a file or wire boundary travels in this form.
std::string to_hex(std::span<const std::uint8_t> bytes);

/// Strict inverse of to_hex: even length, digits 0-9A-F only.
/// Lowercase digits are rejected so journal and wire forms stay canonical.
Bytes from_hex(std::string_view hex);

bool is_hex(std::string_view s);

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string to_string(std::span<const std::uint8_t> b) {
  return std::string(b.begin(), b.end());
}

}  // namespace rowshare
