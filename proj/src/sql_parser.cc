#include "t2sql/sql_parser.h"

#include <cctype>
#include <set>

#include "t2sql/errors.h"
#include "t2sql/text.h"

namespace t2sql {

namespace {

enum class LexKind { kWord, kNumber, kString, kPunct, kColumn, kLiteral, kEnd };

struct Lexeme {
  LexKind kind;
  std::string text;
  size_t origin;  // index of the input token this lexeme came from
};

const std::set<std::string> &UnsupportedWords() {
  static const std::set<std::string> kWords = {
      "or",      "join",     "having", "union",  "intersect", "except",
      "distinct", "like",    "between", "is",    "null",      "case",
      "when",    "then",     "else",   "end",    "as",        "offset",
      "exists",  "cast",     "on",     "inner",  "left",      "right",
      "outer",   "natural",  "cross",  "glob",   "not_null",  "+",
      "-",       "/",        "||",     "%"};
  return kWords;
}

const std::set<std::string> &Keywords() {
  static const std::set<std::string> kWords = {
      "select", "from", "where", "and", "group", "by",  "order", "asc",
      "desc",   "limit", "in",   "not", "count", "sum", "avg",   "min", "max"};
  return kWords;
}

bool IsWordChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

void LexText(std::string_view s, size_t origin, std::vector<Lexeme> &out) {
  size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '\'' || c == '"') {
      std::string body;
      size_t j = i + 1;
      bool closed = false;
      while (j < s.size()) {
        if (s[j] == c) {
          if (j + 1 < s.size() && s[j + 1] == c) {
            body.push_back(c);
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        body.push_back(s[j++]);
      }
      if (!closed) throw SyntaxError(out.size(), {"closing quote"}, std::string(s.substr(i)));
      out.push_back({LexKind::kString, body, origin});
      i = j;
      continue;
    }
    bool signed_number = (c == '-' || c == '+') && i + 1 < s.size() &&
                         (std::isdigit(static_cast<unsigned char>(s[i + 1])) || s[i + 1] == '.');
    if (std::isdigit(static_cast<unsigned char>(c)) || signed_number ||
        (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      size_t j = i + 1;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      // Identifiers such as "1st" are words, not numbers.
      if (j < s.size() && IsWordChar(s[j])) {
        while (j < s.size() && IsWordChar(s[j])) ++j;
        out.push_back({LexKind::kWord, ToLower(s.substr(i, j - i)), origin});
      } else {
        out.push_back({LexKind::kNumber, std::string(s.substr(i, j - i)), origin});
      }
      i = j;
      continue;
    }
    if (IsWordChar(c)) {
      size_t j = i;
      while (j < s.size() && IsWordChar(s[j])) ++j;
      std::string word = ToLower(s.substr(i, j - i));
      out.push_back({IsColumnId(word) ? LexKind::kColumn : LexKind::kWord, word, origin});
      i = j;
      continue;
    }
    std::string two(s.substr(i, std::min<size_t>(2, s.size() - i)));
    if (two == "!=" || two == "<>" || two == "<=" || two == ">=" || two == "==" || two == "||") {
      std::string norm = two == "<>" ? "!=" : two == "==" ? "=" : two;
      out.push_back({LexKind::kPunct, norm, origin});
      i += 2;
      continue;
    }
    out.push_back({LexKind::kPunct, std::string(1, c), origin});
    ++i;
  }
}

class Parser {
 public:
  Parser(std::vector<Lexeme> lexemes, size_t n_inputs)
      : lex_(std::move(lexemes)), roles_(n_inputs), assigned_(n_inputs, false) {
    size_t origin = lex_.empty() ? 0 : lex_.back().origin + 1;
    lex_.push_back({LexKind::kEnd, "<end>", origin});
  }

  ParseResult Run() {
    ParseResult result;
    result.tree.root = ParseStmt();
    if (Peek().kind != LexKind::kEnd) {
      if (Peek().text == "limit") throw UnsupportedConstruct("limit without order by");
      Fail({"<end>"});
    }
    result.roles = std::move(roles_);
    return result;
  }

 private:
  const Lexeme &Peek(size_t ahead = 0) const {
    return lex_[std::min(pos_ + ahead, lex_.size() - 1)];
  }

  bool IsWord(const Lexeme &l, std::string_view w) const {
    return (l.kind == LexKind::kWord || l.kind == LexKind::kPunct) && l.text == w;
  }

  void Mark(const Lexeme &l, bool is_agg = false) {
    if (l.origin < roles_.size() && !assigned_[l.origin]) {
      roles_[l.origin] = TokenRole{clause_, is_agg, depth_};
      assigned_[l.origin] = true;
    }
  }

  const Lexeme &Consume(bool is_agg = false) {
    const Lexeme &l = lex_[pos_];
    Mark(l, is_agg);
    if (l.kind != LexKind::kEnd) ++pos_;
    return l;
  }

  bool Accept(std::string_view w) {
    if (IsWord(Peek(), w)) {
      Consume();
      return true;
    }
    return false;
  }

  void Expect(std::string_view w) {
    if (!Accept(w)) Fail({std::string(w)});
  }

  [[noreturn]] void Fail(std::vector<std::string> expected) const {
    const Lexeme &l = Peek();
    if (l.kind == LexKind::kWord || l.kind == LexKind::kPunct) {
      if (UnsupportedWords().count(l.text)) throw UnsupportedConstruct(l.text);
      if (l.kind == LexKind::kWord && !Keywords().count(l.text) && IsWord(Peek(1), "(")) {
        throw UnsupportedConstruct("function " + l.text);
      }
    }
    throw SyntaxError(pos_, std::move(expected), l.text);
  }

  Stmt ParseStmt() {
    Stmt s;
    Clause saved = clause_;
    clause_ = Clause::kSelect;
    Expect("select");
    s.select.push_back(ParseItem());
    while (Accept(",")) s.select.push_back(ParseItem());
    clause_ = Clause::kNone;
    Expect("from");
    if (Peek().kind != LexKind::kWord || Keywords().count(Peek().text)) Fail({"<table>"});
    s.table = Consume().text;
    if (IsWord(Peek(), "where")) {
      clause_ = Clause::kWhere;
      Consume();
      WhereClause where;
      where.conds.push_back(ParseCond());
      while (Accept("and")) where.conds.push_back(ParseCond());
      s.where = std::move(where);
    }
    if (IsWord(Peek(), "group")) {
      clause_ = Clause::kGroupBy;
      Consume();
      Expect("by");
      s.group = GroupClause{ParseColumn()};
      if (IsWord(Peek(), ",")) throw UnsupportedConstruct("multi-column group by");
    }
    if (IsWord(Peek(), "order")) {
      clause_ = Clause::kOrderBy;
      Consume();
      Expect("by");
      OrderClause order;
      order.key = ParseItem();
      if (Accept("desc")) {
        order.dir = SortDir::kDesc;
      } else {
        Accept("asc");
        order.dir = SortDir::kAsc;
      }
      if (IsWord(Peek(), ",")) throw UnsupportedConstruct("multi-key order by");
      if (Accept("limit")) {
        if (Peek().kind != LexKind::kNumber && Peek().kind != LexKind::kLiteral) Fail({"<int>"});
        auto v = ParseDecimal(Peek().text);
        if (!v || *v < 1 || *v != static_cast<double>(static_cast<int64_t>(*v))) {
          Fail({"<positive int>"});
        }
        Consume();
        order.limit = static_cast<int64_t>(*v);
      }
      s.order = std::move(order);
    }
    clause_ = saved;
    return s;
  }

  SelectItem ParseItem() {
    SelectItem item;
    const Lexeme &l = Peek();
    if (l.kind == LexKind::kWord) {
      if (auto agg = AggFromName(l.text)) {
        Consume(/*is_agg=*/true);
        Expect("(");
        item.agg = agg;
        if (Accept("*")) {
          if (*agg != AggOp::kCount) Fail({"<column>"});
          item.target = Star{};
        } else {
          item.target = ParseColumn();
        }
        Expect(")");
        return item;
      }
    }
    if (Accept("*")) {
      item.target = Star{};
      return item;
    }
    if (Peek().kind != LexKind::kColumn) Fail({"<column>", "*", "count", "sum", "avg", "min", "max"});
    item.target = ParseColumn();
    return item;
  }

  ColRef ParseColumn() {
    if (Peek().kind != LexKind::kColumn || !IsColumnId(Peek().text)) Fail({"<column>"});
    return ColRef{Consume().text};
  }

  bool AtValue() const {
    auto k = Peek().kind;
    return k == LexKind::kNumber || k == LexKind::kString || k == LexKind::kLiteral;
  }

  Value ParseValue() {
    if (!AtValue()) Fail({"<value>"});
    return Value(Consume().text);
  }

  Cond ParseCond() {
    Cond c;
    c.column = ParseColumn();
    const Lexeme &op = Peek();
    static const std::pair<const char *, CompOp> kOps[] = {
        {"=", CompOp::kEq}, {"!=", CompOp::kNe}, {"<", CompOp::kLt},
        {"<=", CompOp::kLe}, {">", CompOp::kGt}, {">=", CompOp::kGe},
        {"in", CompOp::kIn}};
    bool found = false;
    for (const auto &[text, kind] : kOps) {
      if (IsWord(op, text)) {
        Consume();
        c.op = kind;
        found = true;
        break;
      }
    }
    if (!found) {
      if (IsWord(op, "not") && IsWord(Peek(1), "in")) {
        Consume();
        Consume();
        c.op = CompOp::kNotIn;
      } else {
        Fail({"=", "!=", "<", "<=", ">", ">=", "in", "not in"});
      }
    }
    bool membership = c.op == CompOp::kIn || c.op == CompOp::kNotIn;
    if (IsWord(Peek(), "(")) {
      Consume();
      if (IsWord(Peek(), "select")) {
        ++depth_;
        c.rhs = Subquery(ParseStmt());
        --depth_;
      } else {
        if (!membership) Fail({"select"});
        ValueList list;
        list.push_back(ParseValue());
        while (Accept(",")) list.push_back(ParseValue());
        c.rhs = std::move(list);
      }
      Expect(")");
    } else {
      if (membership) Fail({"("});
      c.rhs = ParseValue();
    }
    return c;
  }

  std::vector<Lexeme> lex_;
  size_t pos_ = 0;
  Clause clause_ = Clause::kNone;
  int depth_ = 0;
  std::vector<TokenRole> roles_;
  std::vector<bool> assigned_;
};

}  // namespace

SqlTree ParseSql(std::string_view text) {
  std::vector<Lexeme> lex;
  LexText(text, 0, lex);
  for (size_t i = 0; i < lex.size(); ++i) lex[i].origin = i;
  size_t n = lex.size();
  return Parser(std::move(lex), n).Run().tree;
}

ParseResult ParseSqlWithRoles(std::span<const SqlToken> tokens) {
  std::vector<Lexeme> lex;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const auto &t = tokens[i];
    switch (t.kind) {
      case SqlTokenKind::kColumn:
        lex.push_back({LexKind::kColumn, t.text, i});
        break;
      case SqlTokenKind::kLiteral:
        lex.push_back({LexKind::kLiteral, t.text, i});
        break;
      case SqlTokenKind::kKeyword:
        LexText(t.text, i, lex);
        break;
    }
  }
  return Parser(std::move(lex), tokens.size()).Run();
}

SqlTree ParseSql(std::span<const SqlToken> tokens) {
  return ParseSqlWithRoles(tokens).tree;
}

}  // namespace t2sql
