#ifndef T2SQL_ERRORS_H_
#define T2SQL_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace t2sql {

// Base of every error raised by the toolkit. Each stage throws a subclass so
// callers can report the failing stage without string matching.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

// ---- data_model -----------------------------------------------------------

class MissingFile : public Error {
 public:
  explicit MissingFile(const std::string &path)
      : Error("missing file: " + path), path_(path) {}
  const std::string &path() const { return path_; }

 private:
  std::string path_;
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(size_t line, const std::string &field,
                  const std::string &detail = "")
      : Error("schema violation at line " + std::to_string(line) +
              ", field '" + field + "'" +
              (detail.empty() ? "" : ": " + detail)),
        line_(line),
        field_(field) {}
  size_t line() const { return line_; }
  const std::string &field() const { return field_; }

 private:
  size_t line_;
  std::string field_;
};

// Alignment index outside the query or SQL token range.
class IndexOutOfRange : public SchemaViolation {
 public:
  IndexOutOfRange(size_t line, const std::string &field,
                  const std::string &detail)
      : SchemaViolation(line, field, "index out of range: " + detail) {}
};

class RaggedRow : public Error {
 public:
  RaggedRow(size_t row, size_t got, size_t want)
      : Error("ragged row " + std::to_string(row) + ": " +
              std::to_string(got) + " cells, expected " +
              std::to_string(want)),
        row_(row) {}
  size_t row() const { return row_; }

 private:
  size_t row_;
};

class TypeCoercionFailure : public Error {
 public:
  TypeCoercionFailure(size_t row, size_t column, const std::string &cell)
      : Error("cannot coerce cell '" + cell + "' at row " +
              std::to_string(row) + ", column " + std::to_string(column)),
        row_(row),
        column_(column) {}
  size_t row() const { return row_; }
  size_t column() const { return column_; }

 private:
  size_t row_, column_;
};

// ---- sql_core -------------------------------------------------------------

class SyntaxError : public Error {
 public:
  SyntaxError(size_t position, std::vector<std::string> expected,
              const std::string &found)
      : Error(Format(position, expected, found)),
        position_(position),
        expected_(std::move(expected)) {}
  size_t position() const { return position_; }
  const std::vector<std::string> &expected() const { return expected_; }

 private:
  static std::string Format(size_t position,
                            const std::vector<std::string> &expected,
                            const std::string &found) {
    std::string s = "syntax error at token " + std::to_string(position) +
                    " (found '" + found + "'), expected one of:";
    for (const auto &e : expected) s += " " + e;
    return s;
  }
  size_t position_;
  std::vector<std::string> expected_;
};

class UnsupportedConstruct : public Error {
 public:
  explicit UnsupportedConstruct(const std::string &name)
      : Error("unsupported SQL construct: " + name), name_(name) {}
  const std::string &name() const { return name_; }

 private:
  std::string name_;
};

class UnknownColumn : public Error {
 public:
  explicit UnknownColumn(const std::string &id)
      : Error("unknown column: " + id) {}
};

class TypeMismatch : public Error {
 public:
  explicit TypeMismatch(const std::string &what)
      : Error("type mismatch: " + what) {}
};

class NonScalarSubquery : public Error {
 public:
  explicit NonScalarSubquery(const std::string &what)
      : Error("subquery is not scalar: " + what) {}
};

// ---- grammar_induction ----------------------------------------------------

class RuleNotInGrammar : public Error {
 public:
  explicit RuleNotInGrammar(const std::string &rule)
      : Error("rule not in grammar: " + rule), rule_(rule) {}
  const std::string &rule() const { return rule_; }

 private:
  std::string rule_;
};

class LhsMismatch : public Error {
 public:
  LhsMismatch(const std::string &target, const std::string &lhs)
      : Error("cannot apply rule with lhs " + lhs + " to target " + target) {}
};

// ---- learners / decoder ---------------------------------------------------

class EmptyTrainingSet : public Error {
 public:
  explicit EmptyTrainingSet(const std::string &stage)
      : Error("empty training set for " + stage) {}
};

class EmptyTable : public Error {
 public:
  explicit EmptyTable(const std::string &table_id)
      : Error("table has no linkable content: " + table_id) {}
};

class DeadEnd : public Error {
 public:
  explicit DeadEnd(const std::string &target)
      : Error("no legal action for frontier " + target) {}
};

class NoCompleteDerivation : public Error {
 public:
  explicit NoCompleteDerivation(size_t max_steps)
      : Error("no complete derivation within " + std::to_string(max_steps) +
              " steps") {}
};

}  // namespace t2sql

#endif  // T2SQL_ERRORS_H_
