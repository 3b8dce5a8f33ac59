// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/bytes.hpp"

#include "rowshare/errors.hpp"

namespace rowshare {

namespace {

constexpr char kHexDigits[] = "0123456789ABCDEF";

// 0-15 for valid uppercase hex digits, 0xFF otherwise.
constexpr std::array<std::uint8_t, 256> make_hex_table() {
  std::array<std::uint8_t, 256> t{};
  for (auto& v : t) v = 0xFF;
  for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>('0') + i] = static_cast<std::uint8_t>(i);
  for (int i = 0; i < 6; ++i) t[static_cast<std::size_t>('A') + i] = static_cast<std::uint8_t>(10 + i);
  return t;
}

constexpr auto kHexTable = make_hex_table();

}  // namespace

std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.resize(bytes.size() * 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[2 * i] = kHexDigits[bytes[i] >> 4];
    out[2 * i + 1] = kHexDigits[bytes[i] & 0x0F];
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    throw InputError("hex string has odd length");
  }
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint8_t hi = kHexTable[static_cast<std::uint8_t>(hex[2 * i])];
    std::uint8_t lo = kHexTable[static_cast<std::uint8_t>(hex[2 * i + 1])];
    if (hi == 0xFF || lo == 0xFF) {
      throw InputError("invalid hex digit");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

bool is_hex(std::string_view s) {
  if (s.size() % 2 != 0) return false;
  for (char c : s) {
    if (kHexTable[static_cast<std::uint8_t>(c)] == 0xFF) return false;
  }
  return true;
}

}  // namespace rowshare
