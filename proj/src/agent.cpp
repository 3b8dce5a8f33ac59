// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/agent.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "rowshare/errors.hpp"

namespace rowshare::agent {

using wire::Json;

namespace {

std::array<std::uint8_t, crypto::kPublicKeySize> key_array(const Bytes& bytes,
                                                           const char* what) {
  if (bytes.size() != crypto::kPublicKeySize) {
    throw InputError(std::string(what) + " must be " +
                     std::to_string(crypto::kPublicKeySize) + " bytes");
  }
  std::array<std::uint8_t, crypto::kPublicKeySize> out{};
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

std::array<std::uint8_t, crypto::kPrivateKeySize> private_array(const Bytes& bytes,
                                                                const char* what) {
  if (bytes.size() != crypto::kPrivateKeySize) {
    throw InputError(std::string(what) + " must be " +
                     std::to_string(crypto::kPrivateKeySize) + " bytes");
  }
  std::array<std::uint8_t, crypto::kPrivateKeySize> out{};
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

std::string read_file_or_throw(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw EnvironmentError(std::string("cannot open ") + what + " '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

Json parse_json_file(const std::filesystem::path& path, const char* what) {
  Json body = Json::parse(read_file_or_throw(path, what), nullptr, false);
  if (body.is_discarded()) {
    throw EnvironmentError(std::string(what) + " '" + path.string() + "' is not valid JSON");
  }
  return body;
}

}  // namespace

// --- Identity ----------------------------------------------------------------

Identity Identity::create(std::string user_id) {
  if (user_id.empty()) throw InputError("user id must not be empty");
  return Identity{std::move(user_id), crypto::generate_wrap_keypair(),
                  crypto::generate_sign_keypair()};
}

void Identity::save(const std::filesystem::path& path) const {
  Json body{{"user_id", user_id},
            {"enc_public", to_hex(enc.public_part)},
            {"enc_private", to_hex(enc.private_part)},
            {"sig_public", to_hex(sig.public_part)},
            {"sig_private", to_hex(sig.private_part)}};
  journal::write_text_atomically(path, body.dump(2) + "\n");
}

Identity Identity::load(const std::filesystem::path& path) {
  Json body = parse_json_file(path, "identity file");
  Identity identity;
  try {
    identity.user_id = body.at("user_id").get<std::string>();
    identity.enc.public_part = key_array(from_hex(body.at("enc_public").get<std::string>()),
                                         "enc_public");
    identity.enc.private_part = private_array(
        from_hex(body.at("enc_private").get<std::string>()), "enc_private");
    identity.sig.public_part = key_array(from_hex(body.at("sig_public").get<std::string>()),
                                         "sig_public");
    identity.sig.private_part = private_array(
        from_hex(body.at("sig_private").get<std::string>()), "sig_private");
  } catch (const Json::exception& e) {
    throw InputError("identity file '" + path.string() + "': " + e.what());
  }
  if (identity.user_id.empty()) throw InputError("identity file has an empty user id");
  return identity;
}

// --- Agent: construction and account lifecycle --------------------------------

Agent::Agent(AgentConfig config)
    : config_(std::move(config)), identity_(Identity::load(config_.identity_path)) {
  if (!config_.user_id.empty() && config_.user_id != identity_.user_id) {
    throw InputError("configured user id '" + config_.user_id +
                     "' does not match identity '" + identity_.user_id + "'");
  }
  wrapper_ = std::make_unique<crypto::KeyWrapper>(identity_.enc);
  load_state();
}

Agent::~Agent() = default;

void Agent::require_online(const char* op) const {
  if (!client_) {
    throw EnvironmentError(std::string(op) + " needs a synchronizer connection; log in first");
  }
}

void Agent::register_account() {
  if (config_.server_port == 0) throw EnvironmentError("no synchronizer address configured");
  client_ = std::make_unique<wire::WireClient>(
      wire::WireClient::Options{config_.server_host, config_.server_port, config_.capture});
  client_->call("reg.register_user", Json{{"user_id", identity_.user_id},
                                          {"password", config_.password},
                                          {"enc_public", to_hex(identity_.enc.public_part)},
                                          {"sig_public", to_hex(identity_.sig.public_part)}});
  Json session = client_->call(
      "reg.authenticate_user",
      Json{{"user_id", identity_.user_id}, {"password", config_.password}});
  client_->set_token(session.at("token").get<std::string>());
}

void Agent::login() {
  if (config_.server_port == 0) throw EnvironmentError("no synchronizer address configured");
  // Always dial afresh: a login is also how a stale connection (server
  // restart, network blip) gets replaced.
  client_ = std::make_unique<wire::WireClient>(
      wire::WireClient::Options{config_.server_host, config_.server_port, config_.capture});
  Json session = client_->call(
      "reg.authenticate_user",
      Json{{"user_id", identity_.user_id}, {"password", config_.password}});
  client_->set_token(session.at("token").get<std::string>());
  retry_pending();  // reconnecting is the moment for deferred synchronization
}

// --- Local store ---------------------------------------------------------------

void Agent::create_table(const std::string& name, const std::vector<std::string>& columns) {
  if (columns.empty()) throw InputError("a table needs at least one column");
  store_.create_table(name, columns, columns.front());
}

std::map<std::string, std::int64_t> Agent::put(const store::Row& row) {
  if (row.id_pending_row_received.has_value()) {
    throw InputError("put expects an owned row, not a received one");
  }
  if (const store::Row* existing = store_.find_row(row.table_name, row.primary_key)) {
    if (!existing->owned()) {
      throw InputError("row is owned by another user; only the owner can change it");
    }
  }
  // The store widens tables for rows arriving from elsewhere; local writes
  // against a declared schema deserve typo protection instead.
  if (const store::Table* table = store_.find_table(row.table_name)) {
    for (const store::Field& field : row.fields) {
      if (!table->has_column(field.name)) {
        throw InputError("table '" + row.table_name + "' has no column '" + field.name + "'");
      }
    }
  }
  store_.upsert_row(row);
  return send(DossierRef{row.table_name, row.primary_key});
}

std::vector<store::Row> Agent::query(const std::string& table, std::string_view column,
                                     const store::Value& equals) const {
  // A table a receiver has not materialized yet simply has no rows; that is
  // an answer, not an error.
  if (store_.find_table(table) == nullptr) return {};
  return store_.query(table, column, equals);
}

std::vector<store::Row> Agent::list(const std::string& table) const {
  if (store_.find_table(table) == nullptr) return {};
  return store_.scan(table);
}

// --- Internal lookups ----------------------------------------------------------

const store::Row& Agent::owned_row(const DossierRef& ref) const {
  const store::Row* row = store_.find_row(ref.table, ref.primary_key);
  if (!row) {
    throw InputError("no dossier " + ref.table + ":" + store::value_to_literal(ref.primary_key));
  }
  if (!row->owned()) {
    throw InputError("dossier " + ref.table + ":" + store::value_to_literal(ref.primary_key) +
                     " belongs to another user");
  }
  return *row;
}

const Agent::PeerKeys& Agent::peer_keys(const std::string& user) {
  auto it = peer_keys_.find(user);
  if (it != peer_keys_.end()) return it->second;
  require_online("directory lookup");
  Json body = client_->call("key.get_public_keys", Json{{"user_id", user}});
  PeerKeys keys;
  keys.enc = key_array(from_hex(body.at("enc_public").get<std::string>()), "enc_public");
  keys.sig = key_array(from_hex(body.at("sig_public").get<std::string>()), "sig_public");
  return peer_keys_.emplace(user, keys).first->second;
}

Agent::AccessEntry* Agent::find_access(const DossierRef& ref, const std::string& receiver) {
  for (AccessEntry& entry : access_) {
    if (entry.ref == ref && entry.receiver == receiver) return &entry;
  }
  return nullptr;
}

Agent::SentRecord* Agent::latest_sent(const DossierRef& ref, const std::string& receiver) {
  for (auto it = sent_.rbegin(); it != sent_.rend(); ++it) {
    if (it->ref == ref && it->receiver == receiver) return &*it;
  }
  return nullptr;
}

store::Row Agent::filtered_copy(const store::Row& row,
                                const std::vector<std::string>& fields) const {
  store::Row filtered;
  filtered.table_name = row.table_name;
  filtered.primary_key = row.primary_key;
  for (const std::string& name : fields) {
    if (const store::Value* value = row.field_value(name)) {
      filtered.fields.push_back({name, *value});
    }
  }
  return filtered;
}

// --- Grant / send --------------------------------------------------------------

std::optional<std::int64_t> Agent::grant(const DossierRef& ref, const std::string& receiver,
                                         std::vector<std::string> fields) {
  const store::Row& row = owned_row(ref);
  if (receiver == identity_.user_id) throw InputError("cannot grant a dossier to its owner");
  const store::Table& table = store_.table(row.table_name);
  for (const std::string& field : fields) {
    if (!table.has_column(field)) {
      throw InputError("granted field '" + field + "' is not a column of " + table.name());
    }
  }
  // Normalize: table column order, primary key always present.
  std::vector<std::string> normalized;
  for (const std::string& column : table.columns()) {
    bool wanted = column == table.pk_column() ||
                  std::find(fields.begin(), fields.end(), column) != fields.end();
    if (wanted) normalized.push_back(column);
  }

  std::optional<std::vector<std::string>> previous_fields;
  if (AccessEntry* entry = find_access(ref, receiver)) {
    previous_fields = entry->fields;
    entry->fields = normalized;
  } else {
    access_.push_back({ref, receiver, normalized});
  }

  if (!client_) {
    queue_retry("send", ref, receiver);
    return std::nullopt;
  }
  try {
    return deliver(ref, receiver);
  } catch (const EnvironmentError&) {
    queue_retry("send", ref, receiver);
    return std::nullopt;
  } catch (...) {
    // A permanent rejection (unknown receiver, malformed request) must not
    // leave an access entry behind that would poison every later send.
    if (previous_fields) {
      find_access(ref, receiver)->fields = std::move(*previous_fields);
    } else {
      access_.erase(std::remove_if(access_.begin(), access_.end(),
                                   [&](const AccessEntry& e) {
                                     return e.ref == ref && e.receiver == receiver;
                                   }),
                    access_.end());
    }
    throw;
  }
}

std::map<std::string, std::int64_t> Agent::send(const DossierRef& ref) {
  std::vector<std::string> receivers;
  for (const AccessEntry& entry : access_) {
    if (entry.ref == ref) receivers.push_back(entry.receiver);
  }
  std::map<std::string, std::int64_t> delivered;
  if (receivers.empty()) return delivered;  // nothing granted: no traffic at all

  owned_row(ref);  // only the owner sends
  for (const std::string& receiver : receivers) {
    if (!client_) {
      queue_retry("send", ref, receiver);
      continue;
    }
    try {
      delivered[receiver] = deliver(ref, receiver);
    } catch (const EnvironmentError&) {
      queue_retry("send", ref, receiver);
    }
  }
  return delivered;
}

std::int64_t Agent::deliver(const DossierRef& ref, const std::string& receiver) {
  require_online("send");
  const store::Row& row = owned_row(ref);
  AccessEntry* entry = find_access(ref, receiver);
  if (!entry) throw InputError("no grant for receiver '" + receiver + "'");

  store::Row filtered = filtered_copy(row, entry->fields);
  Bytes payload = store::serialize_row(filtered);
  std::string fingerprint = to_hex(crypto::sha256(payload));
  const PeerKeys& keys = peer_keys(receiver);

  // Unchanged content already delivered with these fields: depositing the
  // old key again is enough. This is what makes re-grant after revoke work
  // without re-sending the row.
  if (SentRecord* previous = latest_sent(ref, receiver)) {
    if (previous->fields == entry->fields && previous->fingerprint == fingerprint) {
      deposit_key_for(*previous, keys);
      return previous->id_pending_row;
    }
  }

  crypto::RowKey key = crypto::generate_row_key();
  crypto::Ciphertext sealed = crypto::encrypt_row(payload, key);
  crypto::Signature sig = crypto::sign_payload(
      wire::pending_row_sig_payload(identity_.user_id, receiver, sealed.bytes),
      identity_.sig.private_part);
  Json result = client_->call("syn.send_row", Json{{"receiver", receiver},
                                                   {"encrypted_row", to_hex(sealed.bytes)},
                                                   {"origin_sig", to_hex(sig.bytes)}});
  std::int64_t id = result.at("id_pending_row").get<std::int64_t>();

  // Record before depositing: if the deposit fails on transport, the retry
  // path finds this record and re-deposits under the same id.
  sent_.push_back({ref, receiver, id, key, entry->fields, fingerprint});
  deposit_key_for(sent_.back(), keys);
  return id;
}

crypto::RowKey Agent::unwrap_verified(const wire::WrappedKeyRecord& record) {
  const PeerKeys& sender = peer_keys(record.sender);
  if (record.wrapped_key.size() < sender.enc.size() ||
      !std::equal(sender.enc.begin(), sender.enc.end(), record.wrapped_key.begin())) {
    throw AuthenticityError("wrapped key for row " + std::to_string(record.id_row) +
                            " was not produced by '" + record.sender + "'");
  }
  return wrapper_->unwrap(record.wrapped_key);
}

void Agent::deposit_key_for(const SentRecord& record, const PeerKeys& keys) {
  Bytes wrapped = wrapper_->wrap(record.row_key, keys.enc);
  crypto::Signature sig = crypto::sign_payload(
      wire::wrapped_key_sig_payload(identity_.user_id, record.receiver, record.id_pending_row,
                                    wrapped, std::nullopt),
      identity_.sig.private_part);
  client_->call("key.deposit_key", Json{{"id_row", record.id_pending_row},
                                        {"receiver", record.receiver},
                                        {"wrapped_key", to_hex(wrapped)},
                                        {"origin_sig", to_hex(sig.bytes)}});
}

// --- Receive -------------------------------------------------------------------

std::size_t Agent::receive() {
  require_online("receive");
  std::size_t integrated = 0;

  // One pass over the store builds the dedupe set; per-row lookups would
  // make a large drain quadratic.
  std::unordered_set<std::int64_t> seen;
  for (const store::EncryptedLine& line : store_.pending_lines()) {
    seen.insert(line.id_pending_row);
  }
  for (const std::string& name : store_.table_order()) {
    for (const auto& [pk, row] : store_.table(name).rows()) {
      if (row.id_pending_row_received) seen.insert(*row.id_pending_row_received);
    }
  }

  while (true) {
    Json batch = client_->call("syn.get_pending_rows");
    const Json& rows = batch.at("rows");
    bool more = batch.at("more").get<bool>();
    if (rows.empty()) break;

    std::vector<std::string> new_lines;
    std::vector<std::int64_t> acknowledge;
    for (const Json& row_json : rows) {
      wire::PendingRow row = wire::pending_row_from_json(row_json);
      if (!seen.insert(row.id_pending_row).second) {
        // Already integrated by an earlier (possibly interrupted) receive;
        // just finish the handoff.
        acknowledge.push_back(row.id_pending_row);
        continue;
      }
      // The service verified the origin signature before accepting the row;
      // content authenticity is enforced end to end when the row is
      // decrypted (a wrong or substituted key cannot pass authentication).
      new_lines.push_back(journal::format_shared_line(row.id_pending_row, row.encrypted_row));
      store_.pending_lines().push_back({row.id_pending_row, to_hex(row.encrypted_row)});
      acknowledge.push_back(row.id_pending_row);
      ++integrated;
    }

    // Durability point: the rows are on disk before the synchronizer is
    // allowed to forget them. A crash after this line cannot lose data, and
    // the dedupe above keeps a replay from doubling it.
    journal::append_lines_durably(config_.journal_path, new_lines);
    if (after_store_hook) after_store_hook();

    if (acknowledge.empty()) break;  // nothing actionable left (all rejected)
    std::vector<wire::Request> deletes;
    deletes.reserve(acknowledge.size());
    for (std::int64_t id : acknowledge) {
      deletes.push_back(client_->make_request("syn.delete_pending_row", Json{{"id", id}}));
    }
    for (const wire::Response& response : client_->pipeline(deletes)) {
      if (!response.ok()) {
        throw Error(response.error->code, "acknowledging a received row: " +
                                              response.error->message);
      }
    }
    if (!more) break;
  }
  return integrated;
}

// --- Use -----------------------------------------------------------------------

UseResult Agent::use(std::int64_t id_pending_row) {
  if (const store::Row* row = store_.find_row_by_pending_id(id_pending_row)) {
    // Already decrypted this session; its key was validated when fetched.
    return {UseStatus::kOk, *row};
  }
  const store::EncryptedLine* line = store_.find_pending_line(id_pending_row);
  if (!line) {
    throw InputError("no shared row with pending id " + std::to_string(id_pending_row));
  }

  std::optional<crypto::RowKey> key;
  if (auto cached = key_cache_.find(id_pending_row); cached != key_cache_.end()) {
    key = cached->second;
  } else {
    if (!client_) return {UseStatus::kUnavailable, std::nullopt};
    try {
      Json body = client_->call("key.get_decrypting_key",
                                Json{{"id_pending_row", id_pending_row}});
      key = unwrap_verified(wire::wrapped_key_from_json(body));
    } catch (const EnvironmentError&) {
      return {UseStatus::kUnavailable, std::nullopt};  // line kept for later
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kAffirmativelyAbsent) {
        // Revoked (or never granted): no key will come. Default policy
        // deletes the unreadable line; retention keeps it in case access
        // is granted again.
        key_cache_.erase(id_pending_row);
        if (config_.on_revoked == journal::RevokedLinePolicy::kDrop) {
          store_.erase_pending_line(id_pending_row);
        }
        return {UseStatus::kRevoked, std::nullopt};
      }
      throw;
    }
  }

  Bytes ciphertext = from_hex(line->hex);
  try {
    Bytes plaintext = crypto::decrypt_row(crypto::Ciphertext{ciphertext}, *key);
    store::Row row = store::deserialize_row(plaintext);
    row.id_pending_row_received = id_pending_row;
    store_.upsert_row(row);
    store_.erase_pending_line(id_pending_row);
    key_cache_[id_pending_row] = *key;
    return {UseStatus::kOk, std::move(row)};
  } catch (const Error&) {
    // Quarantine: the line stays on disk untouched, the key is not cached,
    // and the integrity failure surfaces to the caller.
    key_cache_.erase(id_pending_row);
    throw;
  }
}

// --- Revoke --------------------------------------------------------------------

void Agent::revoke(const DossierRef& ref, const std::string& receiver) {
  std::erase_if(access_, [&](const AccessEntry& entry) {
    return entry.ref == ref && entry.receiver == receiver;
  });
  bool ever_sent = std::any_of(sent_.begin(), sent_.end(), [&](const SentRecord& record) {
    return record.ref == ref && record.receiver == receiver;
  });
  if (!ever_sent) return;  // never granted: nothing to delete anywhere

  if (!client_) {
    queue_retry("revoke", ref, receiver);
    return;
  }
  try {
    perform_revoke(ref, receiver);
  } catch (const EnvironmentError&) {
    queue_retry("revoke", ref, receiver);
  }
}

bool Agent::perform_revoke(const DossierRef& ref, const std::string& receiver) {
  require_online("revoke");
  std::set<std::int64_t> ids;
  for (const SentRecord& record : sent_) {
    if (record.ref == ref && record.receiver == receiver) ids.insert(record.id_pending_row);
  }
  std::vector<wire::Request> deletes;
  for (std::int64_t id : ids) {
    deletes.push_back(client_->make_request("key.delete_decrypting_key",
                                            Json{{"id_row", id}, {"receiver", receiver}}));
  }
  for (const wire::Response& response : client_->pipeline(deletes)) {
    if (!response.ok()) {
      throw Error(response.error->code, "revoking a key: " + response.error->message);
    }
  }
  return true;
}

// --- Retry queue ---------------------------------------------------------------

void Agent::queue_retry(const std::string& kind, const DossierRef& ref,
                        const std::string& receiver) {
  for (RetryOp& op : retry_) {
    if (op.kind == kind && op.ref == ref && op.receiver == receiver) return;  // queued once
  }
  retry_.push_back({kind, ref, receiver});
  save_state();  // the queue is durable: a crash must not lose deferred work
}

std::size_t Agent::retry_pending() {
  if (!client_ || retry_.empty()) return 0;
  std::size_t completed = 0;
  std::vector<RetryOp> keep;
  for (const RetryOp& op : retry_) {
    try {
      if (op.kind == "send") {
        // The grant may have been revoked while queued; then there is
        // nothing to deliver any more.
        if (find_access(op.ref, op.receiver)) deliver(op.ref, op.receiver);
      } else {
        perform_revoke(op.ref, op.receiver);
      }
      ++completed;
    } catch (const EnvironmentError&) {
      keep.push_back(op);  // still unreachable: try again later
    } catch (const Error&) {
      // The server rejected it outright; retrying cannot change that.
    }
  }
  retry_ = std::move(keep);
  save_state();
  return completed;
}

std::map<std::string, std::vector<std::string>> Agent::access_list(const DossierRef& ref) const {
  std::map<std::string, std::vector<std::string>> out;
  for (const AccessEntry& entry : access_) {
    if (entry.ref == ref) out[entry.receiver] = entry.fields;
  }
  return out;
}

std::vector<std::int64_t> Agent::sent_ids(const DossierRef& ref,
                                          const std::string& receiver) const {
  std::vector<std::int64_t> ids;
  for (const SentRecord& record : sent_) {
    if (record.ref == ref && record.receiver == receiver) ids.push_back(record.id_pending_row);
  }
  return ids;
}

// --- Persistence ---------------------------------------------------------------

journal::KeyResolver Agent::resolver() {
  return [this](std::int64_t id) -> journal::KeyLookup {
    if (auto cached = key_cache_.find(id); cached != key_cache_.end()) {
      return journal::KeyLookup::found(cached->second);
    }
    if (absent_hints_.count(id) != 0) return journal::KeyLookup::absent();
    if (!client_) return journal::KeyLookup::unreachable();
    try {
      Json body = client_->call("key.get_decrypting_key", Json{{"id_pending_row", id}});
      crypto::RowKey key = unwrap_verified(wire::wrapped_key_from_json(body));
      key_cache_[id] = key;
      return journal::KeyLookup::found(key);
    } catch (const EnvironmentError&) {
      return journal::KeyLookup::unreachable();
    } catch (const Error& e) {
      return e.code() == ErrorCode::kAffirmativelyAbsent
                 ? journal::KeyLookup::absent()
                 : journal::KeyLookup::unreachable();
    }
  };
}

void Agent::save() {
  journal::save_script(store_, config_.journal_path, resolver());
  save_state();
}

journal::LoadReport Agent::load() {
  if (!std::filesystem::exists(config_.journal_path)) {
    store_ = store::ScriptStore();
    return {};
  }
  prefetch_keys(journal::shared_line_ids(config_.journal_path));
  journal::LoadOptions options{resolver(), config_.on_revoked};
  journal::LoadResult result = journal::load_script(config_.journal_path, options);
  store_ = std::move(result.store);
  return result.report;
}

void Agent::prefetch_keys(const std::vector<std::int64_t>& ids) {
  if (!client_) return;
  absent_hints_.clear();
  std::vector<std::int64_t> wanted;
  for (std::int64_t id : ids) {
    if (key_cache_.find(id) == key_cache_.end()) wanted.push_back(id);
  }
  // Pipelined in chunks so a journal with many shared lines costs a handful
  // of round trips instead of one per line.
  constexpr std::size_t kChunk = 500;
  for (std::size_t begin = 0; begin < wanted.size(); begin += kChunk) {
    std::size_t end = std::min(begin + kChunk, wanted.size());
    std::vector<wire::Request> requests;
    requests.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      requests.push_back(client_->make_request("key.get_decrypting_key",
                                               Json{{"id_pending_row", wanted[i]}}));
    }
    std::vector<wire::Response> responses;
    try {
      responses = client_->pipeline(requests);
    } catch (const EnvironmentError&) {
      return;  // transport is down; the resolver reports lines unreachable
    }
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const wire::Response& response = responses[i];
      std::int64_t id = wanted[begin + i];
      if (response.ok()) {
        try {
          key_cache_[id] = unwrap_verified(wire::wrapped_key_from_json(*response.result));
        } catch (const Error&) {
          // Leave it out of the cache; the per-line resolver retries and
          // classifies the failure.
        }
      } else if (response.error->code == ErrorCode::kAffirmativelyAbsent) {
        absent_hints_.insert(id);
      }
    }
  }
}

std::filesystem::path Agent::state_path() const {
  std::filesystem::path path = config_.journal_path;
  path += ".state";
  return path;
}

void Agent::save_state() const {
  Json access = Json::array();
  for (const AccessEntry& entry : access_) {
    access.push_back(Json{{"table", entry.ref.table},
                          {"pk", store::value_to_literal(entry.ref.primary_key)},
                          {"receiver", entry.receiver},
                          {"fields", entry.fields}});
  }
  Json sent = Json::array();
  for (const SentRecord& record : sent_) {
    sent.push_back(Json{{"table", record.ref.table},
                        {"pk", store::value_to_literal(record.ref.primary_key)},
                        {"receiver", record.receiver},
                        {"id_pending_row", record.id_pending_row},
                        {"row_key", to_hex(record.row_key.bytes)},
                        {"fields", record.fields},
                        {"fingerprint", record.fingerprint}});
  }
  Json retry = Json::array();
  for (const RetryOp& op : retry_) {
    retry.push_back(Json{{"kind", op.kind},
                         {"table", op.ref.table},
                         {"pk", store::value_to_literal(op.ref.primary_key)},
                         {"receiver", op.receiver}});
  }
  Json body{{"access", access}, {"sent", sent}, {"retry", retry}};
  journal::write_text_atomically(state_path(), body.dump() + "\n");
}

void Agent::load_state() {
  access_.clear();
  sent_.clear();
  retry_.clear();
  if (!std::filesystem::exists(state_path())) return;
  Json body = parse_json_file(state_path(), "agent state file");
  try {
    for (const Json& item : body.at("access")) {
      AccessEntry entry;
      entry.ref.table = item.at("table").get<std::string>();
      entry.ref.primary_key = store::value_from_literal(item.at("pk").get<std::string>());
      entry.receiver = item.at("receiver").get<std::string>();
      entry.fields = item.at("fields").get<std::vector<std::string>>();
      access_.push_back(std::move(entry));
    }
    for (const Json& item : body.at("sent")) {
      SentRecord record;
      record.ref.table = item.at("table").get<std::string>();
      record.ref.primary_key = store::value_from_literal(item.at("pk").get<std::string>());
      record.receiver = item.at("receiver").get<std::string>();
      record.id_pending_row = item.at("id_pending_row").get<std::int64_t>();
      Bytes key_bytes = from_hex(item.at("row_key").get<std::string>());
      if (key_bytes.size() != crypto::kRowKeySize) {
        throw InputError("agent state file holds a malformed row key");
      }
      std::copy(key_bytes.begin(), key_bytes.end(), record.row_key.bytes.begin());
      record.fields = item.at("fields").get<std::vector<std::string>>();
      record.fingerprint = item.at("fingerprint").get<std::string>();
      sent_.push_back(std::move(record));
    }
    for (const Json& item : body.at("retry")) {
      RetryOp op;
      op.kind = item.at("kind").get<std::string>();
      op.ref.table = item.at("table").get<std::string>();
      op.ref.primary_key = store::value_from_literal(item.at("pk").get<std::string>());
      op.receiver = item.at("receiver").get<std::string>();
      retry_.push_back(std::move(op));
    }
  } catch (const Json::exception& e) {
    throw InputError("agent state file '" + state_path().string() + "': " + e.what());
  }
}

}  // namespace rowshare::agent
