#include "t2sql/grammar.h"

#include <deque>
#include <functional>
#include <set>
#include <sstream>

#include "t2sql/errors.h"
#include "t2sql/text.h"

namespace t2sql {

namespace {

constexpr std::string_view kCopyNames[] = {"COPY_COLUMN", "COPY_VALUE", "COPY_TABLE"};

const std::set<std::string, std::less<>> &TreeNonTerminals() {
  static const std::set<std::string, std::less<>> kNames = {
      "Stmt", "SelectClause", "SelectItem", "WhereClause", "Cond",
      "Subquery", "ValueList", "GroupClause", "OrderClause"};
  return kNames;
}

DerivNode Leaf(Symbol s, std::string payload = {}) {
  DerivNode n;
  n.symbol = std::move(s);
  n.payload = std::move(payload);
  return n;
}

DerivNode Term(std::string text) { return Leaf(Symbol::Terminal(std::move(text))); }

DerivNode Inner(std::string lhs, std::vector<DerivNode> children) {
  DerivNode n;
  n.symbol = Symbol::NonTerminal(lhs);
  ProductionRule rule;
  rule.lhs = std::move(lhs);
  for (const auto &c : children) rule.rhs.push_back(c.symbol);
  n.rule = std::move(rule);
  n.children = std::move(children);
  return n;
}

DerivNode ItemNode(const SelectItem &item) {
  std::vector<DerivNode> kids;
  auto target = [&]() {
    return item.is_star() ? Term("*") : Leaf(Symbol::Copy(CopyKind::kColumn), item.column().id);
  };
  if (item.agg) {
    kids.push_back(Term(std::string(AggName(*item.agg))));
    kids.push_back(Term("("));
    kids.push_back(target());
    kids.push_back(Term(")"));
  } else {
    kids.push_back(target());
  }
  return Inner("SelectItem", std::move(kids));
}

DerivNode StmtNode(const Stmt &s);

DerivNode CondNode(const Cond &c) {
  std::vector<DerivNode> kids;
  kids.push_back(Leaf(Symbol::Copy(CopyKind::kColumn), c.column.id));
  switch (c.op) {
    case CompOp::kEq: kids.push_back(Term("=")); break;
    case CompOp::kNe: kids.push_back(Term("!=")); break;
    case CompOp::kLt: kids.push_back(Term("<")); break;
    case CompOp::kLe: kids.push_back(Term("<=")); break;
    case CompOp::kGt: kids.push_back(Term(">")); break;
    case CompOp::kGe: kids.push_back(Term(">=")); break;
    case CompOp::kIn: kids.push_back(Term("in")); break;
    case CompOp::kNotIn:
      kids.push_back(Term("not"));
      kids.push_back(Term("in"));
      break;
  }
  if (const auto *v = std::get_if<Value>(&c.rhs)) {
    kids.push_back(Leaf(Symbol::Copy(CopyKind::kValue), v->text()));
  } else if (const auto *sub = std::get_if<Subquery>(&c.rhs)) {
    std::vector<DerivNode> sk;
    sk.push_back(Term("("));
    sk.push_back(StmtNode(**sub));
    sk.push_back(Term(")"));
    kids.push_back(Inner("Subquery", std::move(sk)));
  } else {
    const auto &list = std::get<ValueList>(c.rhs);
    std::vector<DerivNode> lk;
    lk.push_back(Term("("));
    for (size_t i = 0; i < list.size(); ++i) {
      if (i) lk.push_back(Term(","));
      lk.push_back(Leaf(Symbol::Copy(CopyKind::kValue), list[i].text()));
    }
    lk.push_back(Term(")"));
    kids.push_back(Inner("ValueList", std::move(lk)));
  }
  return Inner("Cond", std::move(kids));
}

DerivNode StmtNode(const Stmt &s) {
  std::vector<DerivNode> kids;
  std::vector<DerivNode> sel;
  for (size_t i = 0; i < s.select.size(); ++i) {
    if (i) sel.push_back(Term(","));
    sel.push_back(ItemNode(s.select[i]));
  }
  kids.push_back(Inner("SelectClause", std::move(sel)));
  kids.push_back(Term("from"));
  kids.push_back(Leaf(Symbol::Copy(CopyKind::kTable), s.table));
  if (s.where) {
    std::vector<DerivNode> wk;
    for (size_t i = 0; i < s.where->conds.size(); ++i) {
      if (i) wk.push_back(Term("and"));
      wk.push_back(CondNode(s.where->conds[i]));
    }
    kids.push_back(Inner("WhereClause", std::move(wk)));
  }
  if (s.group) {
    kids.push_back(Inner("GroupClause", {Term("group"), Term("by"),
                                         Leaf(Symbol::Copy(CopyKind::kColumn), s.group->column.id)}));
  }
  if (s.order) {
    std::vector<DerivNode> ok;
    ok.push_back(Term("order"));
    ok.push_back(Term("by"));
    ok.push_back(ItemNode(s.order->key));
    ok.push_back(Term(s.order->dir == SortDir::kAsc ? "asc" : "desc"));
    if (s.order->limit) {
      ok.push_back(Term("limit"));
      ok.push_back(Term(std::to_string(*s.order->limit)));
    }
    kids.push_back(Inner("OrderClause", std::move(ok)));
  }
  return Inner("Stmt", std::move(kids));
}

// Select and where clauses carry their leading keyword implicitly; their
// rules start directly with the first item or condition.
std::optional<std::string> ImpliedKeyword(std::string_view nonterminal) {
  if (nonterminal == "SelectClause") return "select";
  if (nonterminal == "WhereClause") return "where";
  return std::nullopt;
}

void YieldInto(const DerivNode &n, std::vector<SqlToken> &out) {
  switch (n.symbol.kind) {
    case SymbolKind::kTerminal:
      out.push_back({SqlTokenKind::kKeyword, n.symbol.name});
      return;
    case SymbolKind::kCopySlot:
      switch (n.symbol.copy_kind()) {
        case CopyKind::kColumn: out.push_back({SqlTokenKind::kColumn, n.payload}); break;
        case CopyKind::kValue: out.push_back({SqlTokenKind::kLiteral, n.payload}); break;
        case CopyKind::kTable: out.push_back({SqlTokenKind::kKeyword, n.payload}); break;
      }
      return;
    case SymbolKind::kNonTerminal:
      if (auto kw = ImpliedKeyword(n.symbol.name)) out.push_back({SqlTokenKind::kKeyword, *kw});
      for (const auto &c : n.children) YieldInto(c, out);
      return;
  }
}

Clause ClauseOf(std::string_view lhs, Clause inherited) {
  if (lhs == "SelectClause") return Clause::kSelect;
  if (lhs == "WhereClause") return Clause::kWhere;
  if (lhs == "GroupClause") return Clause::kGroupBy;
  if (lhs == "OrderClause") return Clause::kOrderBy;
  if (lhs == "Stmt") return Clause::kNone;
  return inherited;
}

}  // namespace

Symbol Symbol::Copy(CopyKind kind) {
  return {SymbolKind::kCopySlot, std::string(kCopyNames[static_cast<int>(kind)])};
}

CopyKind Symbol::copy_kind() const {
  for (int i = 0; i < 3; ++i) {
    if (kCopyNames[i] == name) return static_cast<CopyKind>(i);
  }
  throw Error("not a copy slot: " + name);
}

std::string Symbol::ToString() const {
  return kind == SymbolKind::kTerminal ? "\"" + name + "\"" : name;
}

bool IsTreeNonTerminal(std::string_view name) { return TreeNonTerminals().count(name) > 0; }

std::string ProductionRule::ToString() const {
  std::string s = lhs + " ->";
  for (const auto &sym : rhs) s += " " + sym.ToString();
  return s;
}

ProductionRule ProductionRule::FromString(std::string_view line) {
  auto parts = SplitWhitespace(line);
  if (parts.size() < 3 || parts[1] != "->") throw Error("malformed rule: " + std::string(line));
  ProductionRule r;
  r.lhs = parts[0];
  for (size_t i = 2; i < parts.size(); ++i) {
    const std::string &p = parts[i];
    if (p.size() >= 2 && p.front() == '"' && p.back() == '"') {
      r.rhs.push_back(Symbol::Terminal(p.substr(1, p.size() - 2)));
    } else if (p.rfind("COPY_", 0) == 0) {
      r.rhs.push_back({SymbolKind::kCopySlot, p});
      r.rhs.back().copy_kind();  // validates the marker
    } else {
      r.rhs.push_back(Symbol::NonTerminal(p));
    }
  }
  return r;
}

size_t Grammar::Add(const ProductionRule &rule) {
  auto it = ids_.find(rule);
  if (it != ids_.end()) return it->second;
  size_t id = rules_.size();
  rules_.push_back(rule);
  ids_.emplace(rule, id);
  by_lhs_[rule.lhs].push_back(id);
  return id;
}

std::optional<size_t> Grammar::Find(const ProductionRule &rule) const {
  auto it = ids_.find(rule);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::span<const size_t> Grammar::RulesFor(std::string_view lhs) const {
  auto it = by_lhs_.find(lhs);
  if (it == by_lhs_.end()) return {};
  return it->second;
}

std::string Grammar::ToText() const {
  std::string out;
  for (const auto &r : rules_) out += r.ToString() + "\n";
  return out;
}

Grammar Grammar::FromText(std::string_view text) {
  Grammar g;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    g.Add(ProductionRule::FromString(line));
  }
  if (auto err = g.CheckInvariants()) throw Error("invalid grammar: " + *err);
  return g;
}

std::optional<std::string> Grammar::CheckInvariants() const {
  if (RulesFor(kStartSymbol).empty()) return "start symbol has no rules";
  for (const auto &r : rules_) {
    if (!IsTreeNonTerminal(r.lhs)) return "unknown lhs " + r.lhs;
    if (r.rhs.empty()) return "empty rhs in " + r.ToString();
    for (const auto &s : r.rhs) {
      if (s.is_nonterminal() && RulesFor(s.name).empty()) return "no rule for " + s.name;
    }
  }
  return std::nullopt;
}

DerivNode ToDerivation(const SqlTree &tree) { return StmtNode(tree.root); }

SqlTree FromDerivation(const DerivNode &root) {
  std::vector<SqlToken> tokens;
  YieldInto(root, tokens);
  return ParseSql(tokens);
}

std::vector<ProductionRule> ExtractRules(const SqlTree &tree) {
  DerivNode root = ToDerivation(tree);
  std::vector<ProductionRule> out;
  std::deque<const DerivNode *> queue = {&root};
  while (!queue.empty()) {
    const DerivNode *n = queue.front();
    queue.pop_front();
    out.push_back(*n->rule);
    for (const auto &c : n->children) {
      if (c.symbol.is_nonterminal()) queue.push_back(&c);
    }
  }
  return out;
}

Grammar InduceGrammar(std::span<const SqlTree> trees) {
  Grammar g;
  for (const auto &t : trees) {
    for (const auto &r : ExtractRules(t)) g.Add(r);
  }
  return g;
}

DecoderAction DecoderAction::Copy(CopyKind kind, std::string payload) {
  Kind k = kind == CopyKind::kColumn ? Kind::kCopyColumn
           : kind == CopyKind::kValue ? Kind::kCopyValue
                                      : Kind::kCopyTable;
  return {k, 0, std::move(payload)};
}

std::string DecoderAction::ToString(const Grammar &grammar) const {
  switch (kind) {
    case Kind::kApplyRule: return "ApplyRule(" + grammar.rule(rule_id).ToString() + ")";
    case Kind::kCopyColumn: return "CopyColumn(" + payload + ")";
    case Kind::kCopyValue: return "CopyValue(" + payload + ")";
    case Kind::kCopyTable: return "CopyTable(" + payload + ")";
  }
  return "";
}

PartialTree::PartialTree(const Grammar &grammar) : grammar_(&grammar) {
  Node root;
  root.symbol = Symbol::NonTerminal(std::string(kStartSymbol));
  nodes_.push_back(std::move(root));
  pending_.push_back(0);
}

void PartialTree::ApplyRule(const ProductionRule &rule) {
  auto id = grammar_->Find(rule);
  if (!id) throw RuleNotInGrammar(rule.ToString());
  ApplyRule(*id);
}

void PartialTree::ApplyRule(size_t rule_id) {
  const ProductionRule &rule = grammar_->rule(rule_id);
  if (IsComplete()) throw LhsMismatch("<complete>", rule.lhs);
  int target = pending_.back();
  Node &t = nodes_[static_cast<size_t>(target)];
  if (!t.symbol.is_nonterminal() || t.symbol.name != rule.lhs) {
    throw LhsMismatch(t.symbol.ToString(), rule.lhs);
  }
  pending_.pop_back();
  t.rule = static_cast<int>(rule_id);
  Clause clause = ClauseOf(rule.lhs, t.clause);
  int nesting = t.nesting + (rule.lhs == "Subquery" ? 1 : 0);
  int depth = t.depth + 1;
  std::vector<int> kids;
  for (const auto &sym : rule.rhs) {
    Node child;
    child.symbol = sym;
    child.parent = target;
    child.depth = depth;
    child.nesting = nesting;
    child.clause = sym.is_nonterminal() ? ClauseOf(sym.name, clause) : clause;
    kids.push_back(static_cast<int>(nodes_.size()));
    nodes_.push_back(std::move(child));
  }
  nodes_[static_cast<size_t>(target)].children = kids;
  for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
    if (!nodes_[static_cast<size_t>(*it)].symbol.is_terminal()) pending_.push_back(*it);
  }
  actions_.push_back(DecoderAction::Apply(rule_id));
}

void PartialTree::ApplyCopy(CopyKind kind, const std::string &payload) {
  Symbol want = Symbol::Copy(kind);
  if (IsComplete()) throw LhsMismatch("<complete>", want.name);
  Node &t = nodes_[static_cast<size_t>(pending_.back())];
  if (t.symbol != want) throw LhsMismatch(t.symbol.ToString(), want.name);
  t.payload = payload;
  pending_.pop_back();
  actions_.push_back(DecoderAction::Copy(kind, payload));
}

void PartialTree::Apply(const DecoderAction &a) {
  switch (a.kind) {
    case DecoderAction::Kind::kApplyRule: ApplyRule(a.rule_id); break;
    case DecoderAction::Kind::kCopyColumn: ApplyCopy(CopyKind::kColumn, a.payload); break;
    case DecoderAction::Kind::kCopyValue: ApplyCopy(CopyKind::kValue, a.payload); break;
    case DecoderAction::Kind::kCopyTable: ApplyCopy(CopyKind::kTable, a.payload); break;
  }
}

std::vector<Symbol> PartialTree::Frontier() const {
  std::vector<Symbol> out;
  std::function<void(int)> walk = [&](int id) {
    const Node &n = nodes_[static_cast<size_t>(id)];
    if (n.symbol.is_nonterminal() && n.rule >= 0) {
      for (int c : n.children) walk(c);
      return;
    }
    if (n.symbol.is_copy() && std::find(pending_.begin(), pending_.end(), id) == pending_.end()) {
      return;  // filled slot
    }
    out.push_back(n.symbol);
  };
  walk(0);
  return out;
}

std::vector<SqlToken> PartialTree::Yield() const {
  std::vector<SqlToken> out;
  std::function<void(int)> walk = [&](int id) {
    const Node &n = nodes_[static_cast<size_t>(id)];
    switch (n.symbol.kind) {
      case SymbolKind::kTerminal: out.push_back({SqlTokenKind::kKeyword, n.symbol.name}); break;
      case SymbolKind::kCopySlot:
        switch (n.symbol.copy_kind()) {
          case CopyKind::kColumn: out.push_back({SqlTokenKind::kColumn, n.payload}); break;
          case CopyKind::kValue: out.push_back({SqlTokenKind::kLiteral, n.payload}); break;
          case CopyKind::kTable: out.push_back({SqlTokenKind::kKeyword, n.payload}); break;
        }
        break;
      case SymbolKind::kNonTerminal:
        if (auto kw = ImpliedKeyword(n.symbol.name)) out.push_back({SqlTokenKind::kKeyword, *kw});
        for (int c : n.children) walk(c);
        break;
    }
  };
  walk(0);
  return out;
}

SqlTree PartialTree::ToSqlTree() const {
  if (!IsComplete()) throw Error("derivation is incomplete");
  return ParseSql(Yield());
}

std::vector<DecoderAction> OracleActions(const SqlTree &tree, const Grammar &grammar) {
  DerivNode root = ToDerivation(tree);
  std::vector<DecoderAction> out;
  std::function<void(const DerivNode &)> walk = [&](const DerivNode &n) {
    switch (n.symbol.kind) {
      case SymbolKind::kTerminal: return;
      case SymbolKind::kCopySlot:
        out.push_back(DecoderAction::Copy(n.symbol.copy_kind(), n.payload));
        return;
      case SymbolKind::kNonTerminal: {
        auto id = grammar.Find(*n.rule);
        if (!id) throw RuleNotInGrammar(n.rule->ToString());
        out.push_back(DecoderAction::Apply(*id));
        for (const auto &c : n.children) walk(c);
        return;
      }
    }
  };
  walk(root);
  return out;
}

SqlTree Replay(std::span<const DecoderAction> actions, const Grammar &grammar) {
  PartialTree state(grammar);
  for (const auto &a : actions) state.Apply(a);
  return state.ToSqlTree();
}

}  // namespace t2sql
