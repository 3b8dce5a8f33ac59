// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rowshare/crypto.hpp"
#include "rowshare/journal.hpp"
#include "rowshare/store.hpp"
#include "rowshare/wire_client.hpp"

namespace rowshare::agent {

/// A user's long-lived key material: one key pair for wrapping row keys and
/// one for signing. Persisted as a mode-0600 JSON file; the private halves
/// never appear in the journal or on the wire.
struct Identity {
  std::string user_id;
  crypto::KeyPair enc;
  crypto::KeyPair sig;

  static Identity create(std::string user_id);
  static Identity load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Names one dossier: a row of a table, identified by primary key.
struct DossierRef {
  std::string table;
  store::Value primary_key;

  bool operator==(const DossierRef&) const = default;
  bool operator<(const DossierRef& other) const {
    if (table != other.table) return table < other.table;
    return store::value_less(primary_key, other.primary_key);
  }
};

enum class UseStatus {
  kOk,           // key available, row decrypted (or already decrypted)
  kRevoked,      // the synchronizer affirmatively has no key: access is gone
  kUnavailable,  // synchronizer unreachable and key not cached; try later
};

struct UseResult {
  UseStatus status = UseStatus::kUnavailable;
  std::optional<store::Row> row;  // set iff status == kOk
};

struct AgentConfig {
  std::string user_id;
  std::string password;
  std::filesystem::path identity_path;
  std::filesystem::path journal_path;
  std::string server_host = "127.0.0.1";
  std::uint16_t server_port = 0;  // 0 = work offline, queue outbound ops
  journal::RevokedLinePolicy on_revoked = journal::RevokedLinePolicy::kDrop;
  wire::WireClient::CaptureHook capture;  // observes every frame, both ways
};

/// The trusted client side of the protocol. Owns an in-memory table store
/// checkpointed to a journal, a per-session key cache, per-dossier access
/// lists, and a durable retry queue for operations attempted while offline.
/// All sequences (grant, send, receive, use, revoke) run against a
/// synchronizer that only ever sees ciphertext and wrapped keys.
///
/// Sequential use only: one agent instance per user identity, one operation
/// at a time.
class Agent {
 public:
  explicit Agent(AgentConfig config);
  ~Agent();

  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  // --- Account lifecycle -------------------------------------------------

  /// Registers this identity's user id and public keys with the
  /// synchronizer, then logs in.
  void register_account();

  /// Connects (if needed) and authenticates; also drains the retry queue,
  /// since reconnecting is the natural moment for deferred synchronization.
  void login();

  bool online() const { return client_ != nullptr; }
  const std::string& user_id() const { return identity_.user_id; }

  // --- Local store -------------------------------------------------------

  void create_table(const std::string& name, const std::vector<std::string>& columns);

  /// Inserts or updates an owned row, then re-sends it to every receiver
  /// currently on the dossier's access list (fresh key per receiver, new
  /// pending id each). Returns receiver -> pending id for rows actually
  /// sent; queued (offline) receivers are absent from the map.
  /// Refuses to overwrite a received row: only the owner changes a dossier.
  std::map<std::string, std::int64_t> put(const store::Row& row);

  std::vector<store::Row> query(const std::string& table, std::string_view column,
                                const store::Value& equals) const;
  std::vector<store::Row> list(const std::string& table) const;
  const store::ScriptStore& store() const { return store_; }
  store::ScriptStore& store() { return store_; }

  // --- Protocol sequences ------------------------------------------------

  /// Grants `receiver` access to the named fields of an owned dossier (the
  /// primary key is always included) and delivers it: the current row
  /// version is filtered, encrypted under a fresh key, sent, and the
  /// wrapped key deposited under the returned pending id. If this exact row
  /// version was already delivered to this receiver with these fields, only
  /// the key is re-deposited (re-grant after revoke needs no re-send).
  /// Returns the pending id used, or nullopt when queued for retry.
  std::optional<std::int64_t> grant(const DossierRef& ref, const std::string& receiver,
                                    std::vector<std::string> fields);

  /// Sends the current version of an owned dossier to every receiver on its
  /// access list. Returns receiver -> pending id for completed deliveries;
  /// unreachable receivers are queued and omitted. Empty access list is a
  /// no-op with no network traffic.
  std::map<std::string, std::int64_t> send(const DossierRef& ref);

  /// Fetches every pending row addressed to this user, appends each new one
  /// to the journal as an encrypted line (durably, before acknowledging),
  /// then deletes it from the synchronizer. Rows already integrated are
  /// acknowledged without being duplicated. Returns the number of new rows.
  std::size_t receive();

  /// Makes a received row readable: resolves its key (cache, then
  /// synchronizer), decrypts the stored line and loads the row. An
  /// affirmative "no key" answer means revocation: the local line is
  /// dropped or kept per policy and kRevoked is returned. Transport failure
  /// leaves the line untouched and returns kUnavailable. A line that fails
  /// authentication with a served key is quarantined (kept, never loaded)
  /// and the failure is rethrown.
  UseResult use(std::int64_t id_pending_row);

  /// Deletes the receiver's wrapped keys for every pending id this dossier
  /// was ever sent under, and removes the receiver from the access list so
  /// later sends exclude it. Unreachable synchronizer queues the deletion;
  /// revocation is complete only once acknowledged. Revoking a receiver
  /// that was never granted is a no-op.
  void revoke(const DossierRef& ref, const std::string& receiver);

  /// Re-attempts queued sends and revocations (oldest first). Returns how
  /// many queue entries completed. Entries that fail with a transport error
  /// stay queued; entries the server rejects outright are dropped, since
  /// retrying cannot fix them.
  std::size_t retry_pending();

  std::size_t retry_queue_size() const { return retry_.size(); }

  /// Receivers currently granted on a dossier, with their permitted fields.
  std::map<std::string, std::vector<std::string>> access_list(const DossierRef& ref) const;

  // --- Persistence -------------------------------------------------------

  /// Checkpoints the store to the journal (owned rows as statements, shared
  /// rows re-encrypted under their cached keys) and writes the agent state
  /// sidecar (access lists, sent log, retry queue). Both writes are atomic.
  void save();

  /// Loads the journal (if it exists), resolving shared-line keys through
  /// the cache and then the synchronizer, and reloads the sidecar.
  journal::LoadReport load();

  /// The sender-side delivery log for one dossier/receiver pair: every
  /// pending id it was sent under, newest last. Drives revoke and re-grant.
  std::vector<std::int64_t> sent_ids(const DossierRef& ref, const std::string& receiver) const;

  /// Test hook, run after a received batch is durably on disk but before
  /// the synchronizer-side deletes. Crash tests terminate the process here
  /// to prove replay cannot duplicate rows.
  std::function<void()> after_store_hook;

 private:
  struct AccessEntry {
    DossierRef ref;
    std::string receiver;
    std::vector<std::string> fields;  // permitted, primary key included
  };

  /// One completed delivery, remembered by the sender. Holds the row key so
  /// revocation can be undone (re-grant re-wraps the same key under the
  /// same pending id) and the payload fingerprint so an unchanged row is
  /// never re-sent.
  struct SentRecord {
    DossierRef ref;
    std::string receiver;
    std::int64_t id_pending_row = 0;
    crypto::RowKey row_key;
    std::vector<std::string> fields;
    std::string fingerprint;  // hex sha-256 of the filtered serialized row
  };

  struct RetryOp {
    std::string kind;  // "send" or "revoke"
    DossierRef ref;
    std::string receiver;
  };

  struct PeerKeys {
    std::array<std::uint8_t, crypto::kPublicKeySize> enc{};
    std::array<std::uint8_t, crypto::kPublicKeySize> sig{};
  };

  void require_online(const char* op) const;
  const store::Row& owned_row(const DossierRef& ref) const;
  const PeerKeys& peer_keys(const std::string& user);
  AccessEntry* find_access(const DossierRef& ref, const std::string& receiver);
  SentRecord* latest_sent(const DossierRef& ref, const std::string& receiver);
  store::Row filtered_copy(const store::Row& row, const std::vector<std::string>& fields) const;

  /// The grant/send workhorse: delivers the current row version to one
  /// receiver, re-depositing the old key when nothing changed. Throws
  /// EnvironmentError on transport failure (callers queue).
  std::int64_t deliver(const DossierRef& ref, const std::string& receiver);

  /// Unwraps a fetched key record after proving it really comes from the
  /// sender it names: the wrapped blob embeds the wrapping public key, and
  /// only the holder of its private half can produce a blob that opens
  /// here, so matching it against the sender's directory key authenticates
  /// the key -- and every row it decrypts -- without a signature check.
  crypto::RowKey unwrap_verified(const wire::WrappedKeyRecord& record);

  void deposit_key_for(const SentRecord& record, const PeerKeys& keys);
  void queue_retry(const std::string& kind, const DossierRef& ref, const std::string& receiver);
  bool perform_revoke(const DossierRef& ref, const std::string& receiver);
  journal::KeyResolver resolver();

  /// Resolves the keys for all given pending ids in pipelined chunks,
  /// priming the key cache (and the affirmative-absence hints the resolver
  /// consults) so a journal load makes a few round trips, not one per line.
  void prefetch_keys(const std::vector<std::int64_t>& ids);
  void save_state() const;
  void load_state();
  std::filesystem::path state_path() const;

  AgentConfig config_;
  Identity identity_;
  std::unique_ptr<wire::WireClient> client_;
  std::unique_ptr<crypto::KeyWrapper> wrapper_;
  store::ScriptStore store_;

  std::vector<AccessEntry> access_;
  std::vector<SentRecord> sent_;
  std::vector<RetryOp> retry_;

  std::map<std::int64_t, crypto::RowKey> key_cache_;  // session-only, never persisted
  std::set<std::int64_t> absent_hints_;               // ids a prefetch saw revoked
  std::map<std::string, PeerKeys> peer_keys_;         // directory lookups, cached
};

}  // namespace rowshare::agent
