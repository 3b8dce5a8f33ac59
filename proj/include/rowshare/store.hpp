// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rowshare/bytes.hpp"
#include "rowshare/errors.hpp"

namespace rowshare::store {

/// Column values in the supported statement dialect: integers and
/// single-quoted strings (embedded quotes doubled).
using Value = std::variant<std::int64_t, std::string>;

std::string value_to_literal(const Value& v);
Value value_from_literal(std::string_view literal);

/// Total order used to keep persisted row order deterministic:
/// integers before strings, then natural order.
bool value_less(const Value& a, const Value& b);

struct ValueLess {
  bool operator()(const Value& a, const Value& b) const { return value_less(a, b); }
};

struct Field {
  std::string name;
  Value value;

  bool operator==(const Field&) const = default;
};

/// A single record, the unit of sharing. Rows that arrived from another
/// owner carry the pending-row id they were delivered under; locally owned
/// rows have no provenance id.
struct Row {
  std::string table_name;
  Value primary_key;
  std::vector<Field> fields;  // includes the primary key field
  std::optional<std::int64_t> id_pending_row_received;

  bool owned() const { return !id_pending_row_received.has_value(); }
  const Value* field_value(std::string_view name) const;

  bool operator==(const Row&) const = default;
};

/// Canonical insert-statement text for a row:
///   INSERT INTO t(c1,c2) VALUES(v1,v2);
/// Columns appear in the row's field order.
std::string statement_for_row(const Row& row);

/// Parses the dialect emitted by statement_for_row. The first listed column
/// is the primary key. Throws InputError on malformed statements.
Row row_from_statement(std::string_view statement);

/// Serialized-row bytes are the encryption plaintext for shared rows:
/// a one-byte format version followed by the insert-statement text.
Bytes serialize_row(const Row& row);
Row deserialize_row(std::span<const std::uint8_t> bytes);

class Table {
 public:
  Table(std::string name, std::vector<std::string> columns, std::string pk_column);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::string& pk_column() const { return pk_column_; }
  bool has_column(std::string_view c) const;

  /// Appends the column if it is not already present. Rows shared with a
  /// narrow field filter materialize a narrow table; a later row with more
  /// fields widens it.
  void add_column(const std::string& c);

  const std::map<Value, Row, ValueLess>& rows() const { return rows_; }
  std::map<Value, Row, ValueLess>& rows() { return rows_; }

 private:
  std::string name_;
  std::vector<std::string> columns_;
  std::string pk_column_;
  std::map<Value, Row, ValueLess> rows_;
};

/// A journal line that could not be (or has not yet been) decrypted:
/// the persisted form of a shared row whose key is not at hand.
struct EncryptedLine {
  std::int64_t id_pending_row = 0;
  std::string hex;  // uppercase ciphertext hex, kept verbatim

  bool operator==(const EncryptedLine&) const = default;
};

/// The in-memory table store. Single-owner: one writer at a time.
class ScriptStore {
 public:
  Table& create_table(const std::string& name, const std::vector<std::string>& columns,
                      const std::string& pk_column);

  /// Inserts or replaces by primary key; the row must include the table's
  /// primary key column. Unknown tables are created on the fly with the
  /// row's columns (primary key first) and unseen columns widen the table,
  /// which is how journal loads and received rows materialize schemas
  /// incrementally.
  void upsert_row(const Row& row);

  bool erase_row(const std::string& table, const Value& pk);

  Table* find_table(const std::string& name);
  const Table* find_table(const std::string& name) const;
  Table& table(const std::string& name);
  const Table& table(const std::string& name) const;

  /// Tables in creation order.
  const std::vector<std::string>& table_order() const { return order_; }

  const Row* find_row(const std::string& table, const Value& pk) const;
  const Row* find_row_by_pending_id(std::int64_t id) const;
  bool erase_row_by_pending_id(std::int64_t id);

  /// Equality match on one column; empty column name scans everything.
  std::vector<Row> query(const std::string& table, std::string_view column,
                         const Value& equals) const;
  std::vector<Row> scan(const std::string& table) const;
  std::size_t row_count() const;

  /// Journal lines whose keys were unavailable, in arrival order.
  std::vector<EncryptedLine>& pending_lines() { return pending_lines_; }
  const std::vector<EncryptedLine>& pending_lines() const { return pending_lines_; }
  const EncryptedLine* find_pending_line(std::int64_t id) const;
  bool erase_pending_line(std::int64_t id);

  /// Tables, rows, provenance ids and undecrypted lines all equal.
  /// Column order within a table is not part of logical equality; the
  /// persisted form reorders the primary key first.
  bool logically_equal(const ScriptStore& other) const;

 private:
  std::map<std::string, Table> tables_;
  std::vector<std::string> order_;
  std::vector<EncryptedLine> pending_lines_;
};

}  // namespace rowshare::store
