#ifndef T2SQL_SQL_EXEC_H_
#define T2SQL_SQL_EXEC_H_

#include <span>
#include <string>
#include <vector>

#include "t2sql/dataset.h"
#include "t2sql/sql_ast.h"

namespace t2sql {

struct Datum {
  enum class Kind { kNull, kNumber, kString };
  Kind kind = Kind::kNull;
  double number = 0;
  std::string text;

  static Datum Null() { return {}; }
  static Datum Number(double v) { return {Kind::kNumber, v, {}}; }
  static Datum String(std::string s) { return {Kind::kString, 0, std::move(s)}; }

  bool is_null() const { return kind == Kind::kNull; }
  // Normalized text used by denotation comparison. Null flattens to "".
  std::string ToString() const;
  bool operator==(const Datum &) const = default;
};

struct Denotation {
  std::vector<std::vector<Datum>> rows;
  bool ordered = false;  // produced by a query with ORDER BY

  bool is_scalar() const { return rows.size() == 1 && rows[0].size() == 1; }
  std::vector<std::string> Flatten() const;
};

// Evaluates `tree` over the single table. Throws UnknownColumn, TypeMismatch
// or NonScalarSubquery.
Denotation Execute(const SqlTree &tree, const TableData &table);

// Compares a denotation with gold answer strings. Numbers on both sides are
// normalized; strings compare exactly. Ordered denotations compare as
// sequences, others as multisets.
bool DenotationEqual(const Denotation &a, std::span<const std::string> gold);

// Canonical form of an answer string (numbers normalized, else verbatim).
std::string NormalizeAnswer(const std::string &s);

}  // namespace t2sql

#endif  // T2SQL_SQL_EXEC_H_
