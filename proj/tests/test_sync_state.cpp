// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "rowshare/errors.hpp"
#include "rowshare/store.hpp"
#include "rowshare/sync_state.hpp"

using namespace rowshare;
using namespace rowshare::sync;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "rowshare-sync-XXXXXX").string();
    char* made = mkdtemp(tmpl.data());
    REQUIRE(made != nullptr);
    path = made;
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error to be thrown");
  return ErrorCode::kInternal;
}

struct TestUser {
  std::string id;
  std::string password;
  crypto::KeyPair enc;
  crypto::KeyPair sig;
  std::string token;
};

TestUser enroll(SyncState& state, const std::string& id) {
  TestUser user{id, "pw-" + id, crypto::generate_wrap_keypair(), crypto::generate_sign_keypair(),
                ""};
  state.register_user(id, user.password, user.enc.public_part, user.sig.public_part);
  user.token = state.authenticate_user(id, user.password);
  return user;
}

Bytes fake_ciphertext(std::size_t body = 32) {
  Bytes ct(crypto::kNonceSize + body + crypto::kTagSize);
  crypto::random_bytes(ct);
  return ct;
}

std::int64_t send(SyncState& state, const TestUser& from, const TestUser& to, const Bytes& ct) {
  crypto::Signature sig = crypto::sign_payload(
      wire::pending_row_sig_payload(from.id, to.id, ct), from.sig.private_part);
  return state.send_row(from.token, to.id, ct, sig);
}

void deposit(SyncState& state, const TestUser& from, const TestUser& to, std::int64_t id_row,
             const crypto::RowKey& key, std::optional<std::int64_t> expiry = std::nullopt) {
  crypto::KeyWrapper wrapper(from.enc);
  Bytes wrapped = wrapper.wrap(key, to.enc.public_part);
  crypto::Signature sig = crypto::sign_payload(
      wire::wrapped_key_sig_payload(from.id, to.id, id_row, wrapped, expiry),
      from.sig.private_part);
  state.deposit_key(from.token, id_row, to.id, expiry, wrapped, sig);
}

}  // namespace

TEST_CASE("registration stores keys and refuses duplicates") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  PublicKeys keys = state.get_public_keys(u1.token, "u1");
  CHECK(keys.enc_public == u1.enc.public_part);
  CHECK(keys.sig_public == u1.sig.public_part);

  CHECK(code_of([&] {
          state.register_user("u1", "other", u1.enc.public_part, u1.sig.public_part);
        }) == ErrorCode::kSchemaError);
  CHECK(code_of([&] { state.get_public_keys(u1.token, "ghost"); }) == ErrorCode::kNotFound);
  CHECK_THROWS_AS(state.register_user("", "pw", u1.enc.public_part, u1.sig.public_part),
                  InputError);
  Bytes short_key(16, 1);
  CHECK_THROWS_AS(state.register_user("u9", "pw", short_key, u1.sig.public_part), InputError);

  for (int i = 2; i <= 5; ++i) enroll(state, "u" + std::to_string(i));
  CHECK(state.get_all_users(u1.token) ==
        std::vector<std::string>{"u1", "u2", "u3", "u4", "u5"});
}

TEST_CASE("authentication hands out working tokens and rejects bad credentials") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  CHECK(state.get_pending_rows(u1.token).rows.empty());

  CHECK(code_of([&] { state.authenticate_user("u1", "wrong"); }) == ErrorCode::kAuthFailed);
  CHECK(code_of([&] { state.authenticate_user("nobody", "pw"); }) == ErrorCode::kAuthFailed);
  CHECK(code_of([&] { state.get_pending_rows("bogus-token"); }) == ErrorCode::kAuthFailed);

  // Two sessions for the same user coexist.
  std::string second = state.authenticate_user("u1", u1.password);
  CHECK(second != u1.token);
  CHECK(state.get_pending_rows(second).rows.empty());
}

TEST_CASE("send_row verifies origin and assigns strictly increasing ids") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");

  Bytes ct = fake_ciphertext();
  std::int64_t first = send(state, u1, u2, ct);
  std::int64_t second = send(state, u1, u2, fake_ciphertext());
  CHECK(first < second);

  // Tampering after signing breaks the origin check.
  Bytes tampered = ct;
  tampered[crypto::kNonceSize] ^= 0x01;
  crypto::Signature sig = crypto::sign_payload(
      wire::pending_row_sig_payload("u1", "u2", ct), u1.sig.private_part);
  CHECK(code_of([&] { state.send_row(u1.token, "u2", tampered, sig); }) ==
        ErrorCode::kSignatureInvalid);

  // A signature by someone else's key does not verify either.
  crypto::Signature forged = crypto::sign_payload(
      wire::pending_row_sig_payload("u1", "u2", ct), u2.sig.private_part);
  CHECK(code_of([&] { state.send_row(u1.token, "u2", ct, forged); }) ==
        ErrorCode::kSignatureInvalid);

  CHECK(code_of([&] { state.send_row(u1.token, "ghost", ct, sig); }) == ErrorCode::kNotFound);
  CHECK_THROWS_AS(state.send_row(u1.token, "u2", Bytes(4, 0), sig), InputError);

  // Nothing from the failed attempts leaked into the mailbox.
  CHECK(state.get_pending_rows(u2.token).rows.size() == 2);
}

TEST_CASE("mailboxes are isolated across a three-user fixture") {
  SyncState state;
  TestUser a = enroll(state, "a");
  TestUser b = enroll(state, "b");
  TestUser c = enroll(state, "c");
  const std::vector<const TestUser*> users = {&a, &b, &c};

  // Everyone sends one row to everyone else, with one key each.
  std::map<std::pair<std::string, std::string>, std::int64_t> sent;
  for (const TestUser* from : users) {
    for (const TestUser* to : users) {
      if (from == to) continue;
      std::int64_t id = send(state, *from, *to, fake_ciphertext());
      deposit(state, *from, *to, id, crypto::generate_row_key());
      sent[{from->id, to->id}] = id;
    }
  }

  for (const TestUser* receiver : users) {
    PendingBatch batch = state.get_pending_rows(receiver->token);
    CHECK(batch.rows.size() == 2);  // one from each other user, nothing else
    for (const wire::PendingRow& row : batch.rows) {
      CHECK(row.receiver == receiver->id);
      CHECK(state.get_decrypting_key(receiver->token, row.id_pending_row).receiver ==
            receiver->id);
    }
    // Another user's rows and keys are unreachable: fetches cannot name a
    // victim, deletes and key lookups fail for foreign ids.
    for (const TestUser* other : users) {
      if (other == receiver) continue;
      for (const auto& [route, id] : sent) {
        if (route.second != other->id) continue;
        CHECK(code_of([&] { state.delete_pending_row(receiver->token, id); }) ==
              ErrorCode::kAuthFailed);
        CHECK(code_of([&] { state.get_decrypting_key(receiver->token, id); }) ==
              ErrorCode::kAffirmativelyAbsent);
      }
    }
  }
}

TEST_CASE("pending rows are delivered once deleted by their receiver") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  Bytes ct = fake_ciphertext();
  std::int64_t id = send(state, u1, u2, ct);

  PendingBatch batch = state.get_pending_rows(u2.token);
  REQUIRE(batch.rows.size() == 1);
  CHECK(batch.rows[0].id_pending_row == id);
  CHECK(batch.rows[0].sender == "u1");
  CHECK(batch.rows[0].encrypted_row == ct);
  CHECK_FALSE(batch.more);

  state.delete_pending_row(u2.token, id);
  CHECK(state.get_pending_rows(u2.token).rows.empty());
  CHECK_NOTHROW(state.delete_pending_row(u2.token, id));  // idempotent
}

TEST_CASE("large mailboxes drain in bounded batches") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  constexpr int kRows = 1203;
  for (int i = 0; i < kRows; ++i) send(state, u1, u2, fake_ciphertext(8));

  PendingBatch first = state.get_pending_rows(u2.token);
  CHECK(first.rows.size() == kDefaultPendingBatch);
  CHECK(first.more);
  CHECK(state.get_pending_rows(u2.token, 5000).rows.size() == kMaxPendingBatch);

  std::size_t drained = 0;
  while (true) {
    PendingBatch batch = state.get_pending_rows(u2.token);
    for (const wire::PendingRow& row : batch.rows) {
      state.delete_pending_row(u2.token, row.id_pending_row);
      ++drained;
    }
    if (!batch.more) break;
  }
  CHECK(drained == kRows);
  CHECK(state.get_pending_rows(u2.token).rows.empty());
}

TEST_CASE("deposited keys come back to their receiver and unwrap") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  std::int64_t id = send(state, u1, u2, fake_ciphertext());

  crypto::RowKey key = crypto::generate_row_key();
  deposit(state, u1, u2, id, key);

  wire::WrappedKeyRecord record = state.get_decrypting_key(u2.token, id);
  CHECK(record.id_row == id);
  CHECK(record.sender == "u1");
  CHECK(record.receiver == "u2");
  CHECK_FALSE(record.expiry.has_value());
  crypto::KeyWrapper unwrapper(u2.enc);
  CHECK(unwrapper.unwrap(record.wrapped_key).bytes == key.bytes);

  // The sender cannot fetch the receiver's key record.
  CHECK(code_of([&] { state.get_decrypting_key(u1.token, id); }) ==
        ErrorCode::kAffirmativelyAbsent);
}

TEST_CASE("deposit_key rejects tampering and unknown receivers but allows dangling ids") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  crypto::RowKey key = crypto::generate_row_key();
  crypto::KeyWrapper wrapper(u1.enc);
  Bytes wrapped = wrapper.wrap(key, u2.enc.public_part);
  crypto::Signature sig = crypto::sign_payload(
      wire::wrapped_key_sig_payload("u1", "u2", 7, wrapped, std::nullopt), u1.sig.private_part);

  Bytes tampered = wrapped;
  tampered[10] ^= 0x01;
  CHECK(code_of([&] { state.deposit_key(u1.token, 7, "u2", std::nullopt, tampered, sig); }) ==
        ErrorCode::kSignatureInvalid);
  CHECK(code_of([&] { state.deposit_key(u1.token, 7, "ghost", std::nullopt, wrapped, sig); }) ==
        ErrorCode::kNotFound);
  CHECK(state.keys_snapshot().empty());  // nothing stored by failed deposits

  // A key may arrive before its row: the id is not required to exist yet.
  CHECK_NOTHROW(state.deposit_key(u1.token, 7, "u2", std::nullopt, wrapped, sig));
  CHECK(state.keys_snapshot().size() == 1);
}

TEST_CASE("re-depositing for the same row and receiver replaces the record") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  std::int64_t id = send(state, u1, u2, fake_ciphertext());

  crypto::RowKey first = crypto::generate_row_key();
  crypto::RowKey second = crypto::generate_row_key();
  deposit(state, u1, u2, id, first);
  deposit(state, u1, u2, id, second);

  CHECK(state.keys_snapshot().size() == 1);
  crypto::KeyWrapper unwrapper(u2.enc);
  CHECK(unwrapper.unwrap(state.get_decrypting_key(u2.token, id).wrapped_key).bytes ==
        second.bytes);
}

TEST_CASE("revocation removes exactly the targeted key record") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  TestUser u3 = enroll(state, "u3");
  std::int64_t id_a = send(state, u1, u2, fake_ciphertext());
  std::int64_t id_b = send(state, u1, u2, fake_ciphertext());
  std::int64_t id_c = send(state, u1, u3, fake_ciphertext());
  deposit(state, u1, u2, id_a, crypto::generate_row_key());
  deposit(state, u1, u2, id_b, crypto::generate_row_key());
  deposit(state, u1, u3, id_c, crypto::generate_row_key());

  // Only the sender may revoke.
  CHECK(code_of([&] { state.delete_decrypting_key(u2.token, id_a, "u2"); }) ==
        ErrorCode::kAuthFailed);

  state.delete_decrypting_key(u1.token, id_a, "u2");
  CHECK(code_of([&] { state.get_decrypting_key(u2.token, id_a); }) ==
        ErrorCode::kAffirmativelyAbsent);
  // Unrelated records survive, and revoking again is harmless.
  CHECK_NOTHROW(state.get_decrypting_key(u2.token, id_b));
  CHECK_NOTHROW(state.get_decrypting_key(u3.token, id_c));
  CHECK_NOTHROW(state.delete_decrypting_key(u1.token, id_a, "u2"));
}

TEST_CASE("expired keys are affirmatively absent") {
  std::int64_t fake_now = 1'000'000;
  SyncState state(SyncState::Options{{}, [&fake_now] { return fake_now; }});
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  std::int64_t id = send(state, u1, u2, fake_ciphertext());
  deposit(state, u1, u2, id, crypto::generate_row_key(), std::int64_t{2'000'000});

  CHECK_NOTHROW(state.get_decrypting_key(u2.token, id));
  fake_now = 1'999'999;
  CHECK_NOTHROW(state.get_decrypting_key(u2.token, id));
  fake_now = 2'000'000;  // expiry is exclusive: valid strictly before it
  CHECK(code_of([&] { state.get_decrypting_key(u2.token, id); }) ==
        ErrorCode::kAffirmativelyAbsent);
}

TEST_CASE("resend re-queues an already delivered row under a fresh id") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  Bytes ct = fake_ciphertext();
  std::int64_t original = send(state, u1, u2, ct);

  // Deliver and acknowledge, emptying the mailbox.
  state.delete_pending_row(u2.token, original);
  CHECK(state.get_pending_rows(u2.token).rows.empty());

  std::int64_t replay = state.resend_row(u1.token, original);
  CHECK(replay > original);
  PendingBatch batch = state.get_pending_rows(u2.token);
  REQUIRE(batch.rows.size() == 1);
  CHECK(batch.rows[0].id_pending_row == replay);
  CHECK(batch.rows[0].encrypted_row == ct);
  CHECK(batch.rows[0].sender == "u1");

  // A key deposited under the new id unlocks it for the receiver.
  crypto::RowKey key = crypto::generate_row_key();
  deposit(state, u1, u2, replay, key);
  CHECK_NOTHROW(state.get_decrypting_key(u2.token, replay));

  CHECK(code_of([&] { state.resend_row(u2.token, original); }) == ErrorCode::kAuthFailed);
  CHECK(code_of([&] { state.resend_row(u1.token, 999'999); }) == ErrorCode::kNotFound);
}

TEST_CASE("ids stay strictly monotonic under concurrent senders") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  constexpr int kThreads = 8;
  constexpr int kPerThread = 25;

  std::vector<std::vector<std::int64_t>> ids(kThreads);
  {
    std::vector<std::jthread> workers;
    for (int t = 0; t < kThreads; ++t) {
      workers.emplace_back([&, t] {
        for (int i = 0; i < kPerThread; ++i) {
          ids[t].push_back(send(state, u1, u2, fake_ciphertext(8)));
        }
      });
    }
  }

  std::set<std::int64_t> all;
  for (const auto& batch : ids) {
    for (std::int64_t id : batch) all.insert(id);
    CHECK(std::is_sorted(batch.begin(), batch.end()));  // per-thread order preserved
  }
  CHECK(all.size() == kThreads * kPerThread);  // no id handed out twice
  CHECK(*all.rbegin() - *all.begin() + 1 == kThreads * kPerThread);  // no gaps
}

TEST_CASE("every stored row and key record passes the origin audit") {
  SyncState state;
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");
  TestUser u3 = enroll(state, "u3");
  std::map<std::string, const TestUser*> by_id{{"u1", &u1}, {"u2", &u2}, {"u3", &u3}};

  for (int i = 0; i < 10; ++i) {
    const TestUser& from = i % 2 == 0 ? u1 : u3;
    std::int64_t id = send(state, from, u2, fake_ciphertext());
    deposit(state, from, u2, id, crypto::generate_row_key());
  }
  std::int64_t resent = state.resend_row(u1.token, state.archive_snapshot().front().id_pending_row);
  CHECK(resent > 0);

  for (const wire::PendingRow& row : state.archive_snapshot()) {
    const TestUser* sender = by_id.at(row.sender);
    Bytes payload = wire::pending_row_sig_payload(row.sender, row.receiver, row.encrypted_row);
    CHECK(crypto::verify_payload(payload, row.origin_sig, sender->sig.public_part));
  }
  for (const wire::WrappedKeyRecord& record : state.keys_snapshot()) {
    const TestUser* sender = by_id.at(record.sender);
    Bytes payload = wire::wrapped_key_sig_payload(record.sender, record.receiver, record.id_row,
                                                  record.wrapped_key, record.expiry);
    CHECK(crypto::verify_payload(payload, record.origin_sig, sender->sig.public_part));
  }
}

TEST_CASE("the record log replays to a deeply equal state") {
  TempDir dir;
  fs::path log = dir.path / "sync.log";
  auto scenario = [&](SyncState& state) {
    TestUser u1 = enroll(state, "u1");
    TestUser u2 = enroll(state, "u2");
    TestUser u3 = enroll(state, "u3");
    std::int64_t a = send(state, u1, u2, fake_ciphertext());
    std::int64_t b = send(state, u1, u3, fake_ciphertext());
    std::int64_t c = send(state, u2, u3, fake_ciphertext());
    deposit(state, u1, u2, a, crypto::generate_row_key());
    deposit(state, u1, u3, b, crypto::generate_row_key(), std::int64_t{4'000'000'000'000});
    deposit(state, u2, u3, c, crypto::generate_row_key());
    state.delete_pending_row(u2.token, a);                // delivered
    state.delete_decrypting_key(u1.token, b, "u3");       // revoked
    std::int64_t r = state.resend_row(u1.token, a);       // replayed
    deposit(state, u1, u2, r, crypto::generate_row_key());
  };

  SyncState original(SyncState::Options{log, nullptr});
  scenario(original);

  SyncState replayed(SyncState::Options{log, nullptr});
  CHECK(replayed.deep_equals(original));
  CHECK(original.deep_equals(replayed));

  // Sessions do not survive: tokens must be re-established after restart.
  CHECK(code_of([&] { replayed.get_pending_rows("stale"); }) == ErrorCode::kAuthFailed);

  // And the replayed instance continues numbering where the original left off.
  TestUser u9 = [&] {
    TestUser user{"u9", "pw-u9", crypto::generate_wrap_keypair(), crypto::generate_sign_keypair(),
                  ""};
    replayed.register_user("u9", user.password, user.enc.public_part, user.sig.public_part);
    user.token = replayed.authenticate_user("u9", user.password);
    return user;
  }();
  std::int64_t max_before = replayed.archive_snapshot().back().id_pending_row;
  std::int64_t next = send(replayed, u9, u9, fake_ciphertext());
  CHECK(next == max_before + 1);
}

TEST_CASE("a torn final log line is tolerated, earlier corruption is not") {
  TempDir dir;
  fs::path log = dir.path / "sync.log";
  {
    SyncState state(SyncState::Options{log, nullptr});
    TestUser u1 = enroll(state, "u1");
    TestUser u2 = enroll(state, "u2");
    send(state, u1, u2, fake_ciphertext());
  }
  std::string intact = read_all(log);

  {  // A crash mid-append leaves half a line; replay must survive it.
    std::ofstream out(log, std::ios::binary | std::ios::app);
    out << R"({"ev":"send","row":{"id_pend)";
  }
  SyncState tolerant(SyncState::Options{log, nullptr});
  CHECK(tolerant.archive_snapshot().size() == 1);

  {  // Corruption in the middle is a hard error.
    std::ofstream out(log, std::ios::binary | std::ios::trunc);
    std::size_t first_eol = intact.find('\n');
    out << intact.substr(0, first_eol + 1) << "garbage\n"
        << intact.substr(first_eol + 1);
  }
  CHECK_THROWS_AS(SyncState(SyncState::Options{log, nullptr}), EnvironmentError);
}

TEST_CASE("the persisted log never contains plaintext of a properly sent row") {
  TempDir dir;
  fs::path log = dir.path / "sync.log";
  SyncState state(SyncState::Options{log, nullptr});
  TestUser u1 = enroll(state, "u1");
  TestUser u2 = enroll(state, "u2");

  // A realistic flow: serialize a row, encrypt it, send ciphertext only.
  store::Row row;
  row.table_name = "dossiers";
  row.fields = {{"id", std::int64_t{1}}, {"note", std::string("probe_zkqv_secret")}};
  row.primary_key = std::int64_t{1};
  crypto::RowKey key = crypto::generate_row_key();
  crypto::Ciphertext sealed = crypto::encrypt_row(store::serialize_row(row), key);
  std::int64_t id = send(state, u1, u2, sealed.bytes);
  deposit(state, u1, u2, id, key);

  std::string log_content = read_all(log);
  CHECK(log_content.find("probe_zkqv_secret") == std::string::npos);
  CHECK(log_content.find("dossiers") == std::string::npos);
  // The raw row key (hex) must not appear either: only the wrapped form.
  CHECK(log_content.find(to_hex(key.bytes)) == std::string::npos);
}
