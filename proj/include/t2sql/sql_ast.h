#ifndef T2SQL_SQL_AST_H_
#define T2SQL_SQL_AST_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace t2sql {

// Token kinds used by dataset files for gold SQL.
enum class SqlTokenKind { kKeyword, kColumn, kLiteral };

struct SqlToken {
  SqlTokenKind kind = SqlTokenKind::kKeyword;
  std::string text;

  bool operator==(const SqlToken &) const = default;
};

std::string_view SqlTokenKindName(SqlTokenKind kind);
std::optional<SqlTokenKind> SqlTokenKindFromName(std::string_view name);

// Deep-copying owning pointer, used for the recursive Subquery edge so the
// AST keeps value semantics.
template <typename T>
class Box {
 public:
  Box() : ptr_(std::make_unique<T>()) {}
  Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}  // NOLINT
  Box(const Box &other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
  Box(Box &&) noexcept = default;
  Box &operator=(const Box &other) {
    if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
    return *this;
  }
  Box &operator=(Box &&) noexcept = default;

  T &operator*() { return *ptr_; }
  const T &operator*() const { return *ptr_; }
  T *operator->() { return ptr_.get(); }
  const T *operator->() const { return ptr_.get(); }

  friend bool operator==(const Box &a, const Box &b) { return *a.ptr_ == *b.ptr_; }

 private:
  std::unique_ptr<T> ptr_;
};

enum class AggOp { kCount, kSum, kAvg, kMin, kMax };
enum class CompOp { kEq, kNe, kLt, kLe, kGt, kGe, kIn, kNotIn };
enum class SortDir { kAsc, kDesc };

std::string_view AggName(AggOp op);
std::optional<AggOp> AggFromName(std::string_view name);

// True for the column id pattern ^c[0-9]+(_[a-z0-9]+)*$.
bool IsColumnId(std::string_view s);

struct ColRef {
  std::string id;
  bool operator==(const ColRef &) const = default;
};

struct Star {
  bool operator==(const Star &) const = default;
};

// A literal. Typed at construction: numeric iff the text is a finite decimal.
class Value {
 public:
  Value() = default;
  explicit Value(std::string text);

  const std::string &text() const { return text_; }
  bool is_number() const { return number_.has_value(); }
  double number() const { return *number_; }

  bool operator==(const Value &other) const { return text_ == other.text_; }

 private:
  std::string text_;
  std::optional<double> number_;
};

struct SelectItem {
  std::optional<AggOp> agg;
  std::variant<Star, ColRef> target;

  bool is_star() const { return std::holds_alternative<Star>(target); }
  const ColRef &column() const { return std::get<ColRef>(target); }
  bool operator==(const SelectItem &) const = default;
};

struct Stmt;
using Subquery = Box<Stmt>;
using ValueList = std::vector<Value>;

struct Cond {
  ColRef column;
  CompOp op = CompOp::kEq;
  std::variant<Value, Subquery, ValueList> rhs;

  bool operator==(const Cond &) const = default;
};

struct WhereClause {
  std::vector<Cond> conds;
  bool operator==(const WhereClause &) const = default;
};

struct GroupClause {
  ColRef column;
  bool operator==(const GroupClause &) const = default;
};

struct OrderClause {
  SelectItem key;
  SortDir dir = SortDir::kAsc;
  std::optional<int64_t> limit;
  bool operator==(const OrderClause &) const = default;
};

struct Stmt {
  std::vector<SelectItem> select;
  std::string table = "w";
  std::optional<WhereClause> where;
  std::optional<GroupClause> group;
  std::optional<OrderClause> order;

  bool operator==(const Stmt &) const = default;
};

struct SqlTree {
  Stmt root;
  bool operator==(const SqlTree &) const = default;
};

// Canonical serialization: lowercase keywords, one token per syntactic unit,
// parenthesized subqueries, string literals single-quoted.
std::vector<std::string> Serialize(const SqlTree &tree);
std::string SerializeText(const SqlTree &tree);

// Same content as typed tokens (columns and literals tagged).
std::vector<SqlToken> SerializeTyped(const SqlTree &tree);

// Quotes a string literal for raw SQL text ('' escapes).
std::string QuoteLiteral(std::string_view s);

// True if the tree contains a Subquery node.
bool ContainsSubquery(const SqlTree &tree);

// Checks structural invariants (column id pattern, limit >= 1, non-empty
// select and where lists). Returns an error message or nullopt.
std::optional<std::string> ValidateTree(const SqlTree &tree);

}  // namespace t2sql

#endif  // T2SQL_SQL_AST_H_
