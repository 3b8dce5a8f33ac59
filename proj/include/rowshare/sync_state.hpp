// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "rowshare/crypto.hpp"
#include "rowshare/wire.hpp"

namespace rowshare::sync {

/// A registered user as the service knows it: identity, a salted password
/// digest and the two public keys. No private material ever reaches the
/// service.
struct UserRecord {
  std::string user_id;
  std::string auth_digest;
  std::array<std::uint8_t, crypto::kPublicKeySize> enc_public{};
  std::array<std::uint8_t, crypto::kPublicKeySize> sig_public{};
  std::int64_t registered_at = 0;  // unix milliseconds

  bool operator==(const UserRecord&) const = default;
};

struct PublicKeys {
  std::array<std::uint8_t, crypto::kPublicKeySize> enc_public{};
  std::array<std::uint8_t, crypto::kPublicKeySize> sig_public{};
};

struct PendingBatch {
  std::vector<wire::PendingRow> rows;
  bool more = false;  // true when the mailbox holds further rows beyond this batch
};

/// Mailbox batches are capped so a full mailbox can always be drained with
/// frames below the wire size limit; callers loop fetch/store/delete until
/// `more` is false.
inline constexpr std::size_t kDefaultPendingBatch = 500;
inline constexpr std::size_t kMaxPendingBatch = 1000;

/// The synchronizer's entire trusted-to-store-but-not-to-read state: users,
/// encrypted pending rows and wrapped decrypting keys. All operations are
/// serialized under one lock; each mutation is appended to a JSONL record
/// log (when configured) and the log replays to an identical state at
/// startup.
///
/// Every operation that takes a `token` resolves it to the calling user and
/// throws Error(kAuthFailed) for unknown tokens. Domain failures surface as
/// Error with the matching wire code, so a server front end can relay them
/// without translation.
class SyncState {
 public:
  struct Options {
    std::filesystem::path log_path;       // empty: in-memory only, nothing persisted
    std::function<std::int64_t()> now_ms; // injectable clock; default system time
  };

  SyncState() : SyncState(Options{}) {}
  explicit SyncState(Options options);
  ~SyncState();

  SyncState(const SyncState&) = delete;
  SyncState& operator=(const SyncState&) = delete;

  // --- registration interface (reg.*) ---
  void register_user(const std::string& user_id, const std::string& password,
                     std::span<const std::uint8_t> enc_public,
                     std::span<const std::uint8_t> sig_public);
  std::string authenticate_user(const std::string& user_id, const std::string& password);

  // --- key storage interface (key.*) ---
  PublicKeys get_public_keys(const std::string& token, const std::string& user_id) const;
  void deposit_key(const std::string& token, std::int64_t id_row, const std::string& receiver,
                   std::optional<std::int64_t> expiry, const Bytes& wrapped_key,
                   const crypto::Signature& origin_sig);
  /// Returns the record for (id_pending_row, caller). Throws
  /// Error(kAffirmativelyAbsent) when no live record exists — revoked,
  /// expired or never granted — which callers must treat differently from a
  /// transport failure.
  wire::WrappedKeyRecord get_decrypting_key(const std::string& token,
                                            std::int64_t id_pending_row) const;
  /// Sender-only removal; deleting an absent record succeeds (idempotent).
  void delete_decrypting_key(const std::string& token, std::int64_t id_row,
                             const std::string& receiver);

  // --- row relay interface (syn.*) ---
  std::int64_t send_row(const std::string& token, const std::string& receiver,
                        const Bytes& encrypted_row, const crypto::Signature& origin_sig);
  PendingBatch get_pending_rows(const std::string& token, std::size_t max = 0) const;
  /// Receiver-only removal; idempotent.
  void delete_pending_row(const std::string& token, std::int64_t id);
  /// Re-queues a previously sent row (delivered and deleted or not) for its
  /// original receiver under a fresh id, which is returned so the sender can
  /// deposit a key for it.
  std::int64_t resend_row(const std::string& token, std::int64_t id);
  std::vector<std::string> get_all_users(const std::string& token) const;

  // --- in-process inspection (tests, audits, replay comparison) ---
  std::vector<UserRecord> users_snapshot() const;
  std::vector<wire::PendingRow> pending_snapshot() const;     // live mailbox rows
  std::vector<wire::PendingRow> archive_snapshot() const;     // every row ever accepted
  std::vector<wire::WrappedKeyRecord> keys_snapshot() const;  // live key records

  /// Deep equality over users, pending rows, archive, key records and the
  /// id counter. Session tokens are deliberately excluded: they do not
  /// survive a restart.
  bool deep_equals(const SyncState& other) const;

 private:
  std::string user_for_token(const std::string& token) const;
  const UserRecord& user_or_not_found(const std::string& user_id) const;
  void append_event(const wire::Json& event);
  void apply_event(const wire::Json& event);
  void replay_log();

  Options options_;
  mutable std::mutex mutex_;
  std::map<std::string, UserRecord> users_;
  std::vector<std::string> user_order_;  // registration order for get_all_users
  std::map<std::int64_t, wire::PendingRow> pending_;
  std::map<std::int64_t, wire::PendingRow> archive_;
  std::map<std::pair<std::int64_t, std::string>, wire::WrappedKeyRecord> keys_;
  std::map<std::string, std::string> tokens_;  // session token -> user_id
  std::int64_t next_id_ = 1;
  std::FILE* log_ = nullptr;
};

}  // namespace rowshare::sync
