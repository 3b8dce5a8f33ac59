// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include "rowshare/bytes.hpp"
#include "rowshare/errors.hpp"

namespace rowshare::crypto {

// Per-row symmetric keys are AES-128-GCM keys. The row ciphertext layout is
// nonce(12) || body || tag(16); decryption is authenticated, so a wrong key
// or a flipped bit fails loudly instead of yielding garbage.
inline constexpr std::size_t kRowKeySize = 16;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kPublicKeySize = 32;   // X25519 and Ed25519 raw keys
inline constexpr std::size_t kPrivateKeySize = 32;
inline constexpr std::size_t kSignatureSize = 64;   // Ed25519 detached

/// sender_pub(32) || nonce(12) || sealed row key(16) || tag(16)
inline constexpr std::size_t kWrappedKeySize =
    kPublicKeySize + kNonceSize + kRowKeySize + kTagSize;

struct RowKey {
  std::array<std::uint8_t, kRowKeySize> bytes{};

  bool operator==(const RowKey&) const = default;
};

struct Ciphertext {
  Bytes bytes;  // nonce || body || tag

  bool operator==(const Ciphertext&) const = default;
};

struct Signature {
  std::array<std::uint8_t, kSignatureSize> bytes{};

  bool operator==(const Signature&) const = default;
};

/// Raw 32-byte asymmetric key pair. Two independent pairs exist per user:
/// an X25519 pair for key wrapping and an Ed25519 pair for signatures.
struct KeyPair {
  std::array<std::uint8_t, kPublicKeySize> public_part{};
  std::array<std::uint8_t, kPrivateKeySize> private_part{};
};

/// Fills `out` from the process CSPRNG. Throws EnvironmentError if the
/// randomness source is unavailable.
void random_bytes(std::span<std::uint8_t> out);

RowKey generate_row_key();

KeyPair generate_wrap_keypair();  // X25519
KeyPair generate_sign_keypair();  // Ed25519

Ciphertext encrypt_row(std::span<const std::uint8_t> plaintext, const RowKey& key);

/// Throws AuthenticityError on wrong key or tampered ciphertext.
Bytes decrypt_row(const Ciphertext& cipher, const RowKey& key);

/// Wraps row keys to a receiver's public wrap key and recovers them with the
/// matching private key. The construction is hybrid: a key-encryption key is
/// derived from the X25519 agreement between the sender's static pair and the
/// receiver's public key, then the row key is sealed under it with
/// AES-128-GCM. Wrapped layout: sender_pub(32) || nonce(12) || body || tag(16).
/// The embedded sender key is bound into the seal as associated data, so
/// every bit of the blob is authenticated — including public-key bits the
/// X25519 agreement itself would ignore.
///
/// Agreements are cached per peer, so wrapping or unwrapping a stream of keys
/// for the same peer costs one scalar multiplication total.
class KeyWrapper {
 public:
  explicit KeyWrapper(KeyPair self);

  Bytes wrap(const RowKey& row_key,
             std::span<const std::uint8_t> receiver_public) const;

  /// Inverse of wrap under the matching private key. Throws
  /// AuthenticityError when this identity is not the intended receiver or
  /// the blob was tampered with; InputError on malformed blobs.
  RowKey unwrap(std::span<const std::uint8_t> wrapped) const;

  const KeyPair& self() const { return self_; }

 private:
  std::array<std::uint8_t, kRowKeySize> kek_for_peer(
      std::span<const std::uint8_t> peer_public) const;

  KeyPair self_;
  mutable std::mutex mutex_;
  mutable std::map<std::array<std::uint8_t, kPublicKeySize>,
                   std::array<std::uint8_t, kRowKeySize>>
      kek_cache_;
};

Signature sign_payload(std::span<const std::uint8_t> payload,
                       std::span<const std::uint8_t> signer_private);

/// True iff `sig` was produced by the private half of `signer_public` over
/// exactly `payload`. Malformed inputs verify false, they never throw.
bool verify_payload(std::span<const std::uint8_t> payload, const Signature& sig,
                    std::span<const std::uint8_t> signer_public);

/// Plain SHA-256; used to fingerprint serialized rows for change detection.
Bytes sha256(std::span<const std::uint8_t> data);

/// Salted SHA-256 password digest, stored server side, never reversible.
/// Encoded as hex(salt) ':' hex(digest).
std::string password_digest(std::string_view password);
bool password_matches(std::string_view password, std::string_view digest);

}  // namespace rowshare::crypto
