// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/store.hpp"

#include <algorithm>
#include <charconv>
#include <map>

namespace rowshare::store {
namespace {

bool is_identifier_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

bool is_identifier(std::string_view s) {
  if (s.empty() || (s[0] >= '0' && s[0] <= '9')) return false;
  return std::all_of(s.begin(), s.end(), is_identifier_char);
}

void require_identifier(std::string_view s, const char* what) {
  if (!is_identifier(s)) {
    throw InputError(std::string(what) + " is not a valid identifier: '" + std::string(s) + "'");
  }
}

/// Cursor over a statement body; all failures throw InputError.
class StatementCursor {
 public:
  explicit StatementCursor(std::string_view text) : text_(text) {}

  void expect(std::string_view token) {
    if (text_.substr(pos_, token.size()) != token) {
      throw InputError("malformed insert statement: expected '" + std::string(token) +
                       "' at offset " + std::to_string(pos_));
    }
    pos_ += token.size();
  }

  bool consume(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_identifier_char(text_[pos_])) ++pos_;
    std::string_view id = text_.substr(start, pos_ - start);
    require_identifier(id, "name");
    return id;
  }

  Value literal() {
    if (pos_ >= text_.size()) throw InputError("malformed insert statement: missing value");
    if (text_[pos_] == '\'') return string_literal();
    return integer_literal();
  }

  void expect_end() {
    if (pos_ != text_.size()) {
      throw InputError("malformed insert statement: trailing content at offset " +
                       std::to_string(pos_));
    }
  }

 private:
  Value string_literal() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < text_.size()) {
      char c = text_[pos_++];
      if (c != '\'') {
        out.push_back(c);
        continue;
      }
      if (pos_ < text_.size() && text_[pos_] == '\'') {
        out.push_back('\'');  // doubled quote -> literal quote
        ++pos_;
        continue;
      }
      return Value(std::move(out));
    }
    throw InputError("malformed insert statement: unterminated string literal");
  }

  Value integer_literal() {
    std::size_t start = pos_;
    if (pos_ < text_.size() && text_[pos_] == '-') ++pos_;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_;
    std::string_view digits = text_.substr(start, pos_ - start);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty() ||
        digits == "-") {
      throw InputError("malformed insert statement: bad integer literal at offset " +
                       std::to_string(start));
    }
    return Value(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string value_to_literal(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  const auto& s = std::get<std::string>(v);
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('\'');
  for (char c : s) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

Value value_from_literal(std::string_view literal) {
  StatementCursor cursor(literal);
  Value v = cursor.literal();
  cursor.expect_end();
  return v;
}

bool value_less(const Value& a, const Value& b) {
  if (a.index() != b.index()) return a.index() < b.index();  // integers sort before strings
  if (a.index() == 0) return std::get<std::int64_t>(a) < std::get<std::int64_t>(b);
  return std::get<std::string>(a) < std::get<std::string>(b);
}

const Value* Row::field_value(std::string_view name) const {
  for (const Field& f : fields) {
    if (f.name == name) return &f.value;
  }
  return nullptr;
}

std::string statement_for_row(const Row& row) {
  require_identifier(row.table_name, "table name");
  if (row.fields.empty()) throw InputError("row has no fields");
  std::string stmt = "INSERT INTO ";
  stmt += row.table_name;
  stmt.push_back('(');
  for (std::size_t i = 0; i < row.fields.size(); ++i) {
    require_identifier(row.fields[i].name, "column name");
    if (i > 0) stmt.push_back(',');
    stmt += row.fields[i].name;
  }
  stmt += ") VALUES(";
  for (std::size_t i = 0; i < row.fields.size(); ++i) {
    if (i > 0) stmt.push_back(',');
    stmt += value_to_literal(row.fields[i].value);
  }
  stmt += ");";
  return stmt;
}

Row row_from_statement(std::string_view statement) {
  StatementCursor cursor(statement);
  cursor.expect("INSERT INTO ");
  Row row;
  row.table_name = std::string(cursor.identifier());
  cursor.expect("(");
  std::vector<std::string> columns;
  do {
    columns.emplace_back(cursor.identifier());
  } while (cursor.consume(','));
  cursor.expect(") VALUES(");
  std::vector<Value> values;
  do {
    values.push_back(cursor.literal());
  } while (cursor.consume(','));
  cursor.expect(");");
  cursor.expect_end();

  if (values.size() != columns.size()) {
    throw InputError("malformed insert statement: " + std::to_string(columns.size()) +
                     " columns but " + std::to_string(values.size()) + " values");
  }
  for (std::size_t i = 0; i < columns.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (columns[j] == columns[i]) {
        throw InputError("malformed insert statement: duplicate column '" + columns[i] + "'");
      }
    }
  }
  row.fields.reserve(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    row.fields.push_back(Field{std::move(columns[i]), std::move(values[i])});
  }
  row.primary_key = row.fields.front().value;  // first listed column keys the row
  return row;
}

Bytes serialize_row(const Row& row) {
  constexpr std::uint8_t kFormatVersion = 0x01;
  std::string stmt = statement_for_row(row);
  Bytes out;
  out.reserve(stmt.size() + 1);
  out.push_back(kFormatVersion);
  out.insert(out.end(), stmt.begin(), stmt.end());
  return out;
}

Row deserialize_row(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw InputError("serialized row is empty");
  if (bytes[0] != 0x01) {
    throw InputError("unsupported serialized-row version " + std::to_string(bytes[0]));
  }
  std::string_view stmt(reinterpret_cast<const char*>(bytes.data()) + 1, bytes.size() - 1);
  return row_from_statement(stmt);
}

Table::Table(std::string name, std::vector<std::string> columns, std::string pk_column)
    : name_(std::move(name)), columns_(std::move(columns)), pk_column_(std::move(pk_column)) {
  require_identifier(name_, "table name");
  if (columns_.empty()) throw InputError("table '" + name_ + "' needs at least one column");
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    require_identifier(columns_[i], "column name");
    for (std::size_t j = 0; j < i; ++j) {
      if (columns_[j] == columns_[i]) {
        throw InputError("table '" + name_ + "' repeats column '" + columns_[i] + "'");
      }
    }
  }
  if (!has_column(pk_column_)) {
    throw InputError("table '" + name_ + "' has no column '" + pk_column_ +
                     "' to use as primary key");
  }
}

bool Table::has_column(std::string_view c) const {
  return std::find(columns_.begin(), columns_.end(), c) != columns_.end();
}

void Table::add_column(const std::string& c) {
  if (!has_column(c)) columns_.push_back(c);
}

Table& ScriptStore::create_table(const std::string& name, const std::vector<std::string>& columns,
                                 const std::string& pk_column) {
  if (tables_.contains(name)) throw InputError("table '" + name + "' already exists");
  auto [it, inserted] = tables_.emplace(name, Table(name, columns, pk_column));
  order_.push_back(name);
  return it->second;
}

void ScriptStore::upsert_row(const Row& row) {
  if (row.fields.empty()) throw InputError("row has no fields");
  Table* table = find_table(row.table_name);
  if (table == nullptr) {
    std::vector<std::string> columns;
    columns.reserve(row.fields.size());
    for (const Field& f : row.fields) columns.push_back(f.name);
    table = &create_table(row.table_name, columns, columns.front());
  }
  const Value* pk_field = row.field_value(table->pk_column());
  if (pk_field == nullptr) {
    throw InputError("row for table '" + row.table_name + "' lacks primary key column '" +
                     table->pk_column() + "'");
  }
  for (const Field& f : row.fields) table->add_column(f.name);
  Row stored = row;
  stored.primary_key = *pk_field;
  table->rows().insert_or_assign(stored.primary_key, std::move(stored));
}

bool ScriptStore::erase_row(const std::string& table, const Value& pk) {
  Table* t = find_table(table);
  if (t == nullptr) return false;
  return t->rows().erase(pk) > 0;
}

Table* ScriptStore::find_table(const std::string& name) {
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : &it->second;
}

const Table* ScriptStore::find_table(const std::string& name) const {
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : &it->second;
}

Table& ScriptStore::table(const std::string& name) {
  Table* t = find_table(name);
  if (t == nullptr) throw InputError("no such table '" + name + "'");
  return *t;
}

const Table& ScriptStore::table(const std::string& name) const {
  const Table* t = find_table(name);
  if (t == nullptr) throw InputError("no such table '" + name + "'");
  return *t;
}

const Row* ScriptStore::find_row(const std::string& table, const Value& pk) const {
  const Table* t = find_table(table);
  if (t == nullptr) return nullptr;
  auto it = t->rows().find(pk);
  return it == t->rows().end() ? nullptr : &it->second;
}

const Row* ScriptStore::find_row_by_pending_id(std::int64_t id) const {
  for (const auto& [name, table] : tables_) {
    for (const auto& [pk, row] : table.rows()) {
      if (row.id_pending_row_received == id) return &row;
    }
  }
  return nullptr;
}

bool ScriptStore::erase_row_by_pending_id(std::int64_t id) {
  for (auto& [name, table] : tables_) {
    for (auto it = table.rows().begin(); it != table.rows().end(); ++it) {
      if (it->second.id_pending_row_received == id) {
        table.rows().erase(it);
        return true;
      }
    }
  }
  return false;
}

std::vector<Row> ScriptStore::query(const std::string& table, std::string_view column,
                                    const Value& equals) const {
  const Table& t = this->table(table);
  if (!column.empty() && !t.has_column(column)) {
    throw InputError("table '" + table + "' has no column '" + std::string(column) + "'");
  }
  std::vector<Row> out;
  for (const auto& [pk, row] : t.rows()) {
    if (column.empty()) {
      out.push_back(row);
      continue;
    }
    const Value* v = row.field_value(column);
    if (v != nullptr && *v == equals) out.push_back(row);
  }
  return out;
}

std::vector<Row> ScriptStore::scan(const std::string& table) const {
  const Table& t = this->table(table);
  std::vector<Row> out;
  out.reserve(t.rows().size());
  for (const auto& [pk, row] : t.rows()) out.push_back(row);
  return out;
}

std::size_t ScriptStore::row_count() const {
  std::size_t n = 0;
  for (const auto& [name, table] : tables_) n += table.rows().size();
  return n;
}

const EncryptedLine* ScriptStore::find_pending_line(std::int64_t id) const {
  for (const EncryptedLine& line : pending_lines_) {
    if (line.id_pending_row == id) return &line;
  }
  return nullptr;
}

bool ScriptStore::erase_pending_line(std::int64_t id) {
  auto it = std::find_if(pending_lines_.begin(), pending_lines_.end(),
                         [&](const EncryptedLine& l) { return l.id_pending_row == id; });
  if (it == pending_lines_.end()) return false;
  pending_lines_.erase(it);
  return true;
}

namespace {

/// Field order is presentation, not identity: compare rows as column->value
/// maps so a reloaded store (primary key reordered first) still matches.
bool rows_logically_equal(const Row& a, const Row& b) {
  if (a.table_name != b.table_name || !(a.primary_key == b.primary_key) ||
      a.id_pending_row_received != b.id_pending_row_received ||
      a.fields.size() != b.fields.size()) {
    return false;
  }
  for (const Field& f : a.fields) {
    const Value* v = b.field_value(f.name);
    if (v == nullptr || !(*v == f.value)) return false;
  }
  return true;
}

}  // namespace

bool ScriptStore::logically_equal(const ScriptStore& other) const {
  if (tables_.size() != other.tables_.size()) return false;
  for (const auto& [name, table] : tables_) {
    const Table* peer = other.find_table(name);
    if (peer == nullptr || peer->rows().size() != table.rows().size()) return false;
    for (const auto& [pk, row] : table.rows()) {
      auto it = peer->rows().find(pk);
      if (it == peer->rows().end() || !rows_logically_equal(row, it->second)) return false;
    }
  }
  auto sorted_lines = [](std::vector<EncryptedLine> lines) {
    std::sort(lines.begin(), lines.end(), [](const EncryptedLine& a, const EncryptedLine& b) {
      return a.id_pending_row < b.id_pending_row;
    });
    return lines;
  };
  return sorted_lines(pending_lines_) == sorted_lines(other.pending_lines_);
}

}  // namespace rowshare::store
