#include "t2sql/sql_ast.h"

#include <array>
#include <regex>

#include "t2sql/text.h"

namespace t2sql {

namespace {

constexpr std::array<std::string_view, 3> kTokenKindNames = {"Keyword", "Column", "Literal"};
constexpr std::array<std::string_view, 5> kAggNames = {"count", "sum", "avg", "min", "max"};

class TypedWriter {
 public:
  void Keyword(std::string_view k) { out_.push_back({SqlTokenKind::kKeyword, std::string(k)}); }
  void Column(const ColRef &c) { out_.push_back({SqlTokenKind::kColumn, c.id}); }
  void Literal(const Value &v) { out_.push_back({SqlTokenKind::kLiteral, v.text()}); }

  void WriteStmt(const Stmt &s) {
    Keyword("select");
    for (size_t i = 0; i < s.select.size(); ++i) {
      if (i) Keyword(",");
      WriteItem(s.select[i]);
    }
    Keyword("from");
    Keyword(s.table);
    if (s.where) {
      Keyword("where");
      for (size_t i = 0; i < s.where->conds.size(); ++i) {
        if (i) Keyword("and");
        WriteCond(s.where->conds[i]);
      }
    }
    if (s.group) {
      Keyword("group");
      Keyword("by");
      Column(s.group->column);
    }
    if (s.order) {
      Keyword("order");
      Keyword("by");
      WriteItem(s.order->key);
      Keyword(s.order->dir == SortDir::kAsc ? "asc" : "desc");
      if (s.order->limit) {
        Keyword("limit");
        Keyword(std::to_string(*s.order->limit));
      }
    }
  }

  std::vector<SqlToken> Take() { return std::move(out_); }

 private:
  void WriteItem(const SelectItem &item) {
    if (item.agg) {
      Keyword(AggName(*item.agg));
      Keyword("(");
    }
    if (item.is_star()) {
      Keyword("*");
    } else {
      Column(item.column());
    }
    if (item.agg) Keyword(")");
  }

  void WriteCond(const Cond &c) {
    Column(c.column);
    switch (c.op) {
      case CompOp::kEq: Keyword("="); break;
      case CompOp::kNe: Keyword("!="); break;
      case CompOp::kLt: Keyword("<"); break;
      case CompOp::kLe: Keyword("<="); break;
      case CompOp::kGt: Keyword(">"); break;
      case CompOp::kGe: Keyword(">="); break;
      case CompOp::kIn: Keyword("in"); break;
      case CompOp::kNotIn:
        Keyword("not");
        Keyword("in");
        break;
    }
    if (const auto *v = std::get_if<Value>(&c.rhs)) {
      Literal(*v);
    } else if (const auto *sub = std::get_if<Subquery>(&c.rhs)) {
      Keyword("(");
      WriteStmt(**sub);
      Keyword(")");
    } else {
      const auto &list = std::get<ValueList>(c.rhs);
      Keyword("(");
      for (size_t i = 0; i < list.size(); ++i) {
        if (i) Keyword(",");
        Literal(list[i]);
      }
      Keyword(")");
    }
  }

  std::vector<SqlToken> out_;
};

bool StmtHasSubquery(const Stmt &s) {
  if (!s.where) return false;
  for (const auto &c : s.where->conds) {
    if (std::holds_alternative<Subquery>(c.rhs)) return true;
  }
  return false;
}

std::optional<std::string> ValidateStmt(const Stmt &s) {
  if (s.select.empty()) return "empty select list";
  auto check_item = [](const SelectItem &item) -> std::optional<std::string> {
    if (!item.is_star() && !IsColumnId(item.column().id)) return "bad column id " + item.column().id;
    if (item.is_star() && item.agg && *item.agg != AggOp::kCount) return "only count accepts *";
    return std::nullopt;
  };
  for (const auto &item : s.select) {
    if (auto e = check_item(item)) return e;
  }
  if (s.where) {
    if (s.where->conds.empty()) return "empty where clause";
    for (const auto &c : s.where->conds) {
      if (!IsColumnId(c.column.id)) return "bad column id " + c.column.id;
      if (const auto *sub = std::get_if<Subquery>(&c.rhs)) {
        if (auto e = ValidateStmt(**sub)) return e;
      } else if (const auto *list = std::get_if<ValueList>(&c.rhs)) {
        if (list->empty()) return "empty value list";
      }
    }
  }
  if (s.group && !IsColumnId(s.group->column.id)) return "bad column id " + s.group->column.id;
  if (s.order) {
    if (auto e = check_item(s.order->key)) return e;
    if (s.order->limit && *s.order->limit < 1) return "limit must be >= 1";
  }
  return std::nullopt;
}

}  // namespace

std::string_view SqlTokenKindName(SqlTokenKind kind) {
  return kTokenKindNames[static_cast<int>(kind)];
}

std::optional<SqlTokenKind> SqlTokenKindFromName(std::string_view name) {
  for (size_t i = 0; i < kTokenKindNames.size(); ++i) {
    if (kTokenKindNames[i] == name) return static_cast<SqlTokenKind>(i);
  }
  return std::nullopt;
}

std::string_view AggName(AggOp op) { return kAggNames[static_cast<int>(op)]; }

std::optional<AggOp> AggFromName(std::string_view name) {
  for (size_t i = 0; i < kAggNames.size(); ++i) {
    if (kAggNames[i] == name) return static_cast<AggOp>(i);
  }
  return std::nullopt;
}

bool IsColumnId(std::string_view s) {
  static const std::regex kPattern("^c[0-9]+(_[a-z0-9]+)*$");
  return std::regex_match(s.begin(), s.end(), kPattern);
}

Value::Value(std::string text) : text_(std::move(text)), number_(ParseDecimal(text_)) {}

std::vector<SqlToken> SerializeTyped(const SqlTree &tree) {
  TypedWriter w;
  w.WriteStmt(tree.root);
  return w.Take();
}

std::vector<std::string> Serialize(const SqlTree &tree) {
  std::vector<std::string> out;
  for (auto &tok : SerializeTyped(tree)) {
    if (tok.kind == SqlTokenKind::kLiteral && !ParseDecimal(tok.text)) {
      out.push_back(QuoteLiteral(tok.text));
    } else {
      out.push_back(std::move(tok.text));
    }
  }
  return out;
}

std::string SerializeText(const SqlTree &tree) {
  auto tokens = Serialize(tree);
  return Join(tokens, " ");
}

std::string QuoteLiteral(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "''";
    else out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

bool ContainsSubquery(const SqlTree &tree) { return StmtHasSubquery(tree.root); }

std::optional<std::string> ValidateTree(const SqlTree &tree) { return ValidateStmt(tree.root); }

}  // namespace t2sql
