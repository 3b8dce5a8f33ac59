// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/sync_state.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "rowshare/errors.hpp"

namespace rowshare::sync {
namespace {

std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string fresh_token() {
  std::array<std::uint8_t, 16> raw{};
  crypto::random_bytes(raw);
  return to_hex(raw);
}

void check_user_id(const std::string& user_id) {
  if (user_id.empty() || user_id.size() > 256) {
    throw InputError("user_id must be 1..256 characters");
  }
}

std::array<std::uint8_t, crypto::kPublicKeySize> to_key_array(
    std::span<const std::uint8_t> bytes, const char* what) {
  if (bytes.size() != crypto::kPublicKeySize) {
    throw InputError(std::string(what) + " must be " + std::to_string(crypto::kPublicKeySize) +
                     " bytes");
  }
  std::array<std::uint8_t, crypto::kPublicKeySize> out{};
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

wire::Json user_to_json(const UserRecord& user) {
  wire::Json body = wire::Json::object();
  body["user_id"] = user.user_id;
  body["auth_digest"] = user.auth_digest;
  body["enc_public"] = to_hex(user.enc_public);
  body["sig_public"] = to_hex(user.sig_public);
  body["registered_at"] = user.registered_at;
  return body;
}

UserRecord user_from_json(const wire::Json& body) {
  UserRecord user;
  user.user_id = wire::get_string(body, "user_id");
  user.auth_digest = wire::get_string(body, "auth_digest");
  user.enc_public = to_key_array(wire::get_hex(body, "enc_public"), "enc_public");
  user.sig_public = to_key_array(wire::get_hex(body, "sig_public"), "sig_public");
  user.registered_at = wire::get_int(body, "registered_at");
  return user;
}

}  // namespace

SyncState::SyncState(Options options) : options_(std::move(options)) {
  if (!options_.now_ms) options_.now_ms = system_now_ms;
  if (!options_.log_path.empty()) {
    replay_log();
    log_ = std::fopen(options_.log_path.c_str(), "ab");
    if (log_ == nullptr) {
      throw EnvironmentError("cannot open record log '" + options_.log_path.string() +
                             "' for appending");
    }
  }
}

SyncState::~SyncState() {
  if (log_ != nullptr) std::fclose(log_);
}

void SyncState::replay_log() {
  std::ifstream in(options_.log_path, std::ios::binary);
  if (!in) return;  // nothing persisted yet
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = std::move(buf).str();

  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::size_t end = (eol == std::string::npos) ? content.size() : eol;
    if (end > pos) lines.emplace_back(content.data() + pos, end - pos);
    pos = (eol == std::string::npos) ? content.size() : eol + 1;
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    wire::Json event = wire::Json::parse(lines[i], nullptr, /*allow_exceptions=*/false);
    bool valid = !event.is_discarded() && event.is_object();
    if (valid) {
      try {
        apply_event(event);
      } catch (const Error&) {
        valid = false;
      }
    }
    if (!valid) {
      // A torn final line is what a crash mid-append leaves behind; anything
      // earlier means real corruption.
      if (i + 1 == lines.size()) break;
      throw EnvironmentError("record log '" + options_.log_path.string() +
                             "' is corrupt at line " + std::to_string(i + 1));
    }
  }
}

void SyncState::append_event(const wire::Json& event) {
  if (log_ == nullptr) return;
  std::string line = event.dump();
  line += '\n';
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0) {
    throw EnvironmentError("cannot append to record log '" + options_.log_path.string() + "'");
  }
}

void SyncState::apply_event(const wire::Json& event) {
  std::string kind = wire::get_string(event, "ev");
  if (kind == "user") {
    UserRecord user = user_from_json(wire::get_object(event, "user"));
    user_order_.push_back(user.user_id);
    users_[user.user_id] = std::move(user);
  } else if (kind == "send") {
    wire::PendingRow row = wire::pending_row_from_json(wire::get_object(event, "row"));
    next_id_ = std::max(next_id_, row.id_pending_row + 1);
    archive_[row.id_pending_row] = row;
    pending_[row.id_pending_row] = std::move(row);
  } else if (kind == "del_row") {
    pending_.erase(wire::get_int(event, "id"));
  } else if (kind == "key") {
    wire::WrappedKeyRecord record = wire::wrapped_key_from_json(wire::get_object(event, "rec"));
    keys_[{record.id_row, record.receiver}] = std::move(record);
  } else if (kind == "del_key") {
    keys_.erase({wire::get_int(event, "id_row"), wire::get_string(event, "receiver")});
  } else {
    throw InputError("unknown record-log event '" + kind + "'");
  }
}

std::string SyncState::user_for_token(const std::string& token) const {
  auto it = tokens_.find(token);
  if (it == tokens_.end()) {
    throw Error(ErrorCode::kAuthFailed, "unknown or expired session token");
  }
  return it->second;
}

const UserRecord& SyncState::user_or_not_found(const std::string& user_id) const {
  auto it = users_.find(user_id);
  if (it == users_.end()) {
    throw Error(ErrorCode::kNotFound, "no user '" + user_id + "'");
  }
  return it->second;
}

void SyncState::register_user(const std::string& user_id, const std::string& password,
                              std::span<const std::uint8_t> enc_public,
                              std::span<const std::uint8_t> sig_public) {
  check_user_id(user_id);
  UserRecord user;
  user.user_id = user_id;
  user.auth_digest = crypto::password_digest(password);
  user.enc_public = to_key_array(enc_public, "enc_public");
  user.sig_public = to_key_array(sig_public, "sig_public");

  std::lock_guard lock(mutex_);
  if (users_.contains(user_id)) {
    throw InputError("user '" + user_id + "' is already registered");
  }
  user.registered_at = options_.now_ms();
  wire::Json event{{"ev", "user"}, {"user", user_to_json(user)}};
  apply_event(event);
  append_event(event);
}

std::string SyncState::authenticate_user(const std::string& user_id, const std::string& password) {
  std::lock_guard lock(mutex_);
  auto it = users_.find(user_id);
  // Unknown user and wrong password fail identically: the directory is not
  // enumerable through authentication probes.
  if (it == users_.end() || !crypto::password_matches(password, it->second.auth_digest)) {
    throw Error(ErrorCode::kAuthFailed, "unknown user or wrong password");
  }
  std::string token = fresh_token();
  tokens_[token] = user_id;
  return token;
}

PublicKeys SyncState::get_public_keys(const std::string& token, const std::string& user_id) const {
  std::lock_guard lock(mutex_);
  user_for_token(token);
  const UserRecord& user = user_or_not_found(user_id);
  return PublicKeys{user.enc_public, user.sig_public};
}

void SyncState::deposit_key(const std::string& token, std::int64_t id_row,
                            const std::string& receiver, std::optional<std::int64_t> expiry,
                            const Bytes& wrapped_key, const crypto::Signature& origin_sig) {
  if (wrapped_key.empty() || wrapped_key.size() > 4096) {
    throw InputError("wrapped_key must be 1..4096 bytes");
  }
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  const UserRecord& sender = users_.at(caller);
  user_or_not_found(receiver);
  Bytes payload = wire::wrapped_key_sig_payload(caller, receiver, id_row, wrapped_key, expiry);
  if (!crypto::verify_payload(payload, origin_sig, sender.sig_public)) {
    throw Error(ErrorCode::kSignatureInvalid,
                "wrapped-key origin signature does not verify for '" + caller + "'");
  }
  wire::WrappedKeyRecord record{id_row, caller, receiver, expiry, wrapped_key, origin_sig};
  wire::Json event{{"ev", "key"}, {"rec", wire::wrapped_key_to_json(record)}};
  apply_event(event);
  append_event(event);
}

wire::WrappedKeyRecord SyncState::get_decrypting_key(const std::string& token,
                                                     std::int64_t id_pending_row) const {
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  auto it = keys_.find({id_pending_row, caller});
  if (it == keys_.end()) {
    throw Error(ErrorCode::kAffirmativelyAbsent,
                "no decrypting key for row " + std::to_string(id_pending_row));
  }
  if (it->second.expiry && *it->second.expiry <= options_.now_ms()) {
    throw Error(ErrorCode::kAffirmativelyAbsent,
                "the decrypting key for row " + std::to_string(id_pending_row) + " has expired");
  }
  return it->second;
}

void SyncState::delete_decrypting_key(const std::string& token, std::int64_t id_row,
                                      const std::string& receiver) {
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  auto it = keys_.find({id_row, receiver});
  if (it == keys_.end()) return;  // idempotent: already gone
  if (it->second.sender != caller) {
    throw Error(ErrorCode::kAuthFailed, "only the key's sender may delete it");
  }
  wire::Json event{{"ev", "del_key"}, {"id_row", id_row}, {"receiver", receiver}};
  apply_event(event);
  append_event(event);
}

std::int64_t SyncState::send_row(const std::string& token, const std::string& receiver,
                                 const Bytes& encrypted_row, const crypto::Signature& origin_sig) {
  if (encrypted_row.size() < crypto::kNonceSize + crypto::kTagSize) {
    throw InputError("encrypted_row is shorter than a nonce and tag");
  }
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  const UserRecord& sender = users_.at(caller);
  user_or_not_found(receiver);
  Bytes payload = wire::pending_row_sig_payload(caller, receiver, encrypted_row);
  if (!crypto::verify_payload(payload, origin_sig, sender.sig_public)) {
    throw Error(ErrorCode::kSignatureInvalid,
                "pending-row origin signature does not verify for '" + caller + "'");
  }
  wire::PendingRow row{next_id_, caller, receiver, options_.now_ms(), encrypted_row, origin_sig};
  wire::Json event{{"ev", "send"}, {"row", wire::pending_row_to_json(row)}};
  apply_event(event);
  append_event(event);
  return row.id_pending_row;
}

PendingBatch SyncState::get_pending_rows(const std::string& token, std::size_t max) const {
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  std::size_t limit = (max == 0) ? kDefaultPendingBatch : std::min(max, kMaxPendingBatch);
  PendingBatch batch;
  for (const auto& [id, row] : pending_) {
    if (row.receiver != caller) continue;
    if (batch.rows.size() == limit) {
      batch.more = true;
      break;
    }
    batch.rows.push_back(row);
  }
  return batch;
}

void SyncState::delete_pending_row(const std::string& token, std::int64_t id) {
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  auto it = pending_.find(id);
  if (it == pending_.end()) return;  // idempotent: already removed
  if (it->second.receiver != caller) {
    throw Error(ErrorCode::kAuthFailed, "only the row's receiver may remove it");
  }
  wire::Json event{{"ev", "del_row"}, {"id", id}};
  apply_event(event);
  append_event(event);
}

std::int64_t SyncState::resend_row(const std::string& token, std::int64_t id) {
  std::lock_guard lock(mutex_);
  std::string caller = user_for_token(token);
  auto it = archive_.find(id);
  if (it == archive_.end()) {
    throw Error(ErrorCode::kNotFound, "no sent row " + std::to_string(id));
  }
  if (it->second.sender != caller) {
    throw Error(ErrorCode::kAuthFailed, "only the row's sender may resend it");
  }
  // The original origin signature stays valid: it covers sender, receiver
  // and ciphertext but never the service-assigned id.
  wire::PendingRow copy = it->second;
  copy.id_pending_row = next_id_;
  copy.submitted_at = options_.now_ms();
  wire::Json event{{"ev", "send"}, {"row", wire::pending_row_to_json(copy)}};
  apply_event(event);
  append_event(event);
  return copy.id_pending_row;
}

std::vector<std::string> SyncState::get_all_users(const std::string& token) const {
  std::lock_guard lock(mutex_);
  user_for_token(token);
  return user_order_;
}

std::vector<UserRecord> SyncState::users_snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<UserRecord> out;
  out.reserve(user_order_.size());
  for (const std::string& id : user_order_) out.push_back(users_.at(id));
  return out;
}

std::vector<wire::PendingRow> SyncState::pending_snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<wire::PendingRow> out;
  out.reserve(pending_.size());
  for (const auto& [id, row] : pending_) out.push_back(row);
  return out;
}

std::vector<wire::PendingRow> SyncState::archive_snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<wire::PendingRow> out;
  out.reserve(archive_.size());
  for (const auto& [id, row] : archive_) out.push_back(row);
  return out;
}

std::vector<wire::WrappedKeyRecord> SyncState::keys_snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<wire::WrappedKeyRecord> out;
  out.reserve(keys_.size());
  for (const auto& [key, record] : keys_) out.push_back(record);
  return out;
}

bool SyncState::deep_equals(const SyncState& other) const {
  std::scoped_lock lock(mutex_, other.mutex_);
  return users_ == other.users_ && user_order_ == other.user_order_ &&
         pending_ == other.pending_ && archive_ == other.archive_ && keys_ == other.keys_ &&
         next_id_ == other.next_id_;
}

}  // namespace rowshare::sync
