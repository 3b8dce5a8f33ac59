// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rowshare/errors.hpp"

namespace rowshare::journal {
namespace {

[[noreturn]] void throw_errno(const std::string& action, const std::filesystem::path& path) {
  throw EnvironmentError(action + " '" + path.string() + "': " + std::strerror(errno));
}

}  // namespace

void write_text_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  if (fd < 0) throw_errno("cannot create", tmp);
  std::size_t written = 0;
  while (written < content.size()) {
    ssize_t n = ::write(fd, content.data() + written, content.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      ::unlink(tmp.c_str());
      throw_errno("cannot write", tmp);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    throw_errno("cannot flush", tmp);
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    throw_errno("cannot replace", path);
  }
  // Persist the rename itself; failure here is not worth failing the save.
  int dir_fd = ::open(path.parent_path().empty() ? "." : path.parent_path().c_str(),
                      O_RDONLY | O_DIRECTORY);
  if (dir_fd >= 0) {
    ::fsync(dir_fd);
    ::close(dir_fd);
  }
}

void append_lines_durably(const std::filesystem::path& path,
                          const std::vector<std::string>& lines) {
  if (lines.empty()) return;
  std::string content;
  for (const std::string& line : lines) {
    content += line;
    content += '\n';
  }
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0600);
  if (fd < 0) throw_errno("cannot open for append", path);
  std::size_t written = 0;
  while (written < content.size()) {
    ssize_t n = ::write(fd, content.data() + written, content.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw_errno("cannot append to", path);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) throw_errno("cannot flush", path);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw_errno("cannot read", path);
  return std::move(buf).str();
}

constexpr std::size_t kMinCiphertextHexChars = 2 * (crypto::kNonceSize + crypto::kTagSize);

}  // namespace

std::string format_shared_line(std::int64_t id, std::span<const std::uint8_t> ciphertext) {
  if (id <= 0) throw InputError("shared line id must be positive");
  return "$" + std::to_string(id) + "@" + to_hex(ciphertext);
}

std::optional<SharedLine> parse_shared_line(std::string_view line) {
  if (line.empty() || line[0] != '$') return std::nullopt;
  std::size_t at = line.find('@');
  if (at == std::string_view::npos || at < 2) {
    throw InputError("malformed shared line: missing '@' separator");
  }
  std::string_view digits = line.substr(1, at - 1);
  std::int64_t id = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || id <= 0) {
    throw InputError("malformed shared line: bad id '" + std::string(digits) + "'");
  }
  std::string_view hex = line.substr(at + 1);
  if (hex.size() < kMinCiphertextHexChars || hex.size() % 2 != 0 || !is_hex(hex)) {
    throw InputError("malformed shared line: bad ciphertext hex for id " + std::to_string(id));
  }
  return SharedLine{id, std::string(hex)};
}

SaveReport save_script(const store::ScriptStore& store, const std::filesystem::path& path,
                       const KeyResolver& resolver) {
  SaveReport report;
  std::string content;

  // Tables in creation order, rows in primary-key order; ownership decides
  // whether a row leaves as plaintext or as ciphertext.
  for (const std::string& table_name : store.table_order()) {
    for (const auto& [pk, row] : store.table(table_name).rows()) {
      if (row.owned()) {
        content += store::statement_for_row(row);
        content += '\n';
        ++report.plain_lines;
        continue;
      }
      std::int64_t id = *row.id_pending_row_received;
      KeyLookup lookup = resolver ? resolver(id) : KeyLookup::unreachable();
      if (lookup.outcome != KeyOutcome::kFound) {
        throw EnvironmentError("cannot persist shared row " + std::to_string(id) +
                               ": its key is not available");
      }
      crypto::Ciphertext sealed = crypto::encrypt_row(store::serialize_row(row), lookup.key);
      content += format_shared_line(id, sealed.bytes);
      content += '\n';
      ++report.encrypted_lines;
    }
  }

  // Lines that were never decrypted are carried over byte for byte.
  std::vector<store::EncryptedLine> retained = store.pending_lines();
  std::sort(retained.begin(), retained.end(),
            [](const store::EncryptedLine& a, const store::EncryptedLine& b) {
              return a.id_pending_row < b.id_pending_row;
            });
  for (const store::EncryptedLine& line : retained) {
    content += "$" + std::to_string(line.id_pending_row) + "@" + line.hex;
    content += '\n';
    ++report.retained_lines;
  }

  write_text_atomically(path, content);
  return report;
}

LoadResult load_script(const std::filesystem::path& path, const LoadOptions& options) {
  std::string content = read_file(path);
  LoadResult result;
  LoadReport& report = result.report;

  std::size_t pos = 0;
  std::size_t line_number = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::string_view line(content.data() + pos,
                          (eol == std::string::npos ? content.size() : eol) - pos);
    pos = (eol == std::string::npos) ? content.size() : eol + 1;
    ++line_number;
    if (line.empty()) continue;
    ++report.lines_total;

    std::optional<SharedLine> shared;
    try {
      shared = parse_shared_line(line);
      if (!shared) {
        result.store.upsert_row(store::row_from_statement(line));
        ++report.plain_loaded;
        continue;
      }
    } catch (const InputError&) {
      ++report.parse_errors;
      report.parse_error_lines.push_back(line_number);
      continue;
    }

    KeyLookup lookup = KeyLookup::unreachable();
    if (options.resolver) {
      ++report.key_lookups;
      lookup = options.resolver(shared->id);
    }
    switch (lookup.outcome) {
      case KeyOutcome::kFound:
        ++report.decrypt_count;
        try {
          Bytes plain = crypto::decrypt_row(crypto::Ciphertext{from_hex(shared->hex)}, lookup.key);
          store::Row row = store::deserialize_row(plain);
          row.id_pending_row_received = shared->id;
          result.store.upsert_row(row);
          ++report.shared_loaded;
        } catch (const Error&) {
          // Key in hand but the bytes do not verify (or decrypt to
          // something unusable): never load, never delete; leave the
          // evidence in place and report it.
          ++report.quarantined;
          report.quarantined_ids.push_back(shared->id);
          result.store.pending_lines().push_back({shared->id, std::move(shared->hex)});
        }
        break;
      case KeyOutcome::kAbsent:
        report.revoked_ids.push_back(shared->id);
        if (options.on_revoked == RevokedLinePolicy::kRetain) {
          ++report.shared_retained_revoked;
          result.store.pending_lines().push_back({shared->id, std::move(shared->hex)});
        } else {
          ++report.shared_dropped_revoked;
        }
        break;
      case KeyOutcome::kUnreachable:
        ++report.shared_retained_unreachable;
        result.store.pending_lines().push_back({shared->id, std::move(shared->hex)});
        break;
    }
  }
  return result;
}

std::vector<std::int64_t> shared_line_ids(const std::filesystem::path& path) {
  std::string content = read_file(path);
  std::vector<std::int64_t> ids;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::string_view line(content.data() + pos,
                          (eol == std::string::npos ? content.size() : eol) - pos);
    pos = (eol == std::string::npos) ? content.size() : eol + 1;
    try {
      if (std::optional<SharedLine> shared = parse_shared_line(line)) ids.push_back(shared->id);
    } catch (const InputError&) {
      // load_script owns malformed-line reporting.
    }
  }
  return ids;
}

}  // namespace rowshare::journal
