// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rowshare/crypto.hpp"
#include "rowshare/store.hpp"

namespace rowshare::journal {

/// Outcome of asking for the decryption key of one shared row. The three
/// cases drive three different load behaviours, so "no key" is never a
/// single undifferentiated answer:
///   kFound        -- key at hand, the line can be decrypted
///   kAbsent       -- authoritatively gone (access revoked or never granted)
///   kUnreachable  -- unknown right now (offline, server error); retry later
enum class KeyOutcome { kFound, kAbsent, kUnreachable };

struct KeyLookup {
  KeyOutcome outcome = KeyOutcome::kUnreachable;
  crypto::RowKey key{};  // meaningful only when outcome == kFound

  static KeyLookup found(const crypto::RowKey& k) { return {KeyOutcome::kFound, k}; }
  static KeyLookup absent() { return {KeyOutcome::kAbsent, {}}; }
  static KeyLookup unreachable() { return {KeyOutcome::kUnreachable, {}}; }
};

/// Supplies the row key for a given pending-row id. Implementations
/// typically consult a local key cache first and fall back to the
/// synchronizer.
using KeyResolver = std::function<KeyLookup(std::int64_t id_pending_row)>;

/// What to do with a line whose key is authoritatively absent (revoked).
///   kDrop    -- delete the line; the data is unrecoverable here (default)
///   kRetain  -- keep the encrypted line on disk; it stays unreadable but
///               survives in case access is granted again
enum class RevokedLinePolicy { kDrop, kRetain };

struct LoadOptions {
  KeyResolver resolver;
  RevokedLinePolicy on_revoked = RevokedLinePolicy::kDrop;
};

struct LoadReport {
  std::size_t lines_total = 0;
  std::size_t plain_loaded = 0;
  std::size_t shared_loaded = 0;
  std::size_t shared_dropped_revoked = 0;
  std::size_t shared_retained_revoked = 0;
  std::size_t shared_retained_unreachable = 0;
  std::size_t quarantined = 0;   // key present but the line failed to verify or parse
  std::size_t parse_errors = 0;  // lines that are neither statements nor shared lines
  std::size_t key_lookups = 0;   // resolver calls; one per shared line
  std::size_t decrypt_count = 0; // decrypt attempts; at most one per shared line
  std::vector<std::int64_t> revoked_ids;
  std::vector<std::int64_t> quarantined_ids;
  std::vector<std::size_t> parse_error_lines;  // 1-based line numbers
};

struct LoadResult {
  store::ScriptStore store;
  LoadReport report;
};

struct SaveReport {
  std::size_t plain_lines = 0;
  std::size_t encrypted_lines = 0;  // freshly re-encrypted in-memory rows
  std::size_t retained_lines = 0;   // undecrypted lines copied verbatim
};

/// One persisted shared row: `$<id>@<uppercase hex>`.
struct SharedLine {
  std::int64_t id = 0;
  std::string hex;
};

std::string format_shared_line(std::int64_t id, std::span<const std::uint8_t> ciphertext);

/// Returns the parsed line if it is `$`-prefixed, std::nullopt for ordinary
/// statement lines. A `$`-prefixed line that does not match the format
/// throws InputError.
std::optional<SharedLine> parse_shared_line(std::string_view line);

/// Writes the store to `path` atomically (temp file + rename). Line order is
/// deterministic: tables in creation order, each table's rows in primary-key
/// order. An owned row becomes a plain insert statement; a row received from
/// another owner is re-encrypted under its original row key (fresh nonce
/// each save) and written as a shared line. Lines never decrypted are copied
/// verbatim at the end, in id order. If the resolver cannot produce a key
/// for an in-memory shared row the save aborts and the previous file is
/// left untouched.
SaveReport save_script(const store::ScriptStore& store, const std::filesystem::path& path,
                       const KeyResolver& resolver);

/// Reads a journal written by save_script. Each shared line triggers exactly
/// one key lookup: kFound lines are decrypted and loaded (carrying their
/// pending-row id as provenance), kAbsent lines are dropped or retained per
/// LoadOptions, kUnreachable lines are kept encrypted for a later attempt.
/// A shared line whose key is found but whose bytes fail to authenticate or
/// parse is quarantined: kept on disk, reported, never loaded. Any other
/// malformed line is recorded as a parse error and skipped; the load itself
/// always continues. Without a resolver every shared line counts as
/// unreachable.
LoadResult load_script(const std::filesystem::path& path, const LoadOptions& options);

/// The ids of every well-formed shared line in the file, in order. Lets a
/// caller resolve all keys in one batched exchange before load_script walks
/// the file line by line. Malformed lines are skipped here; load_script
/// reports them.
std::vector<std::int64_t> shared_line_ids(const std::filesystem::path& path);

/// Crash-safe full-file write: temp file, fsync, rename. A reader sees the
/// old content or the new, never a mix. Files are created mode 0600.
void write_text_atomically(const std::filesystem::path& path, const std::string& content);

/// Appends lines to a journal (creating it if needed) and fsyncs before
/// returning, so the lines survive an immediate crash. Used by receive(),
/// which must make a fetched row durable before acknowledging it.
void append_lines_durably(const std::filesystem::path& path,
                          const std::vector<std::string>& lines);

}  // namespace rowshare::journal
