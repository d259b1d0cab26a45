#ifndef T2SQL_GRAMMAR_H_
#define T2SQL_GRAMMAR_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "t2sql/sql_ast.h"
#include "t2sql/sql_parser.h"

namespace t2sql {

enum class SymbolKind { kNonTerminal, kTerminal, kCopySlot };
enum class CopyKind { kColumn, kValue, kTable };

struct Symbol {
  SymbolKind kind = SymbolKind::kNonTerminal;
  std::string name;  // non-terminal name, terminal text, or COPY_* marker

  static Symbol NonTerminal(std::string name) { return {SymbolKind::kNonTerminal, std::move(name)}; }
  static Symbol Terminal(std::string text) { return {SymbolKind::kTerminal, std::move(text)}; }
  static Symbol Copy(CopyKind kind);

  bool is_nonterminal() const { return kind == SymbolKind::kNonTerminal; }
  bool is_terminal() const { return kind == SymbolKind::kTerminal; }
  bool is_copy() const { return kind == SymbolKind::kCopySlot; }
  CopyKind copy_kind() const;
  // Grammar-file spelling: terminals are double-quoted.
  std::string ToString() const;

  bool operator==(const Symbol &) const = default;
  auto operator<=>(const Symbol &) const = default;
};

// Non-terminal vocabulary of the SQL tree.
inline constexpr std::string_view kStartSymbol = "Stmt";
bool IsTreeNonTerminal(std::string_view name);

struct ProductionRule {
  std::string lhs;
  std::vector<Symbol> rhs;

  std::string ToString() const;  // `LHS -> sym1 sym2 ...`
  static ProductionRule FromString(std::string_view line);
  bool operator==(const ProductionRule &) const = default;
  auto operator<=>(const ProductionRule &) const = default;
};

// Rules in first-seen order with an lhs index. Immutable once built.
class Grammar {
 public:
  Grammar() = default;

  // Adds a rule unless present; returns its id either way.
  size_t Add(const ProductionRule &rule);
  std::optional<size_t> Find(const ProductionRule &rule) const;

  const std::vector<ProductionRule> &rules() const { return rules_; }
  const ProductionRule &rule(size_t id) const { return rules_[id]; }
  size_t size() const { return rules_.size(); }
  std::span<const size_t> RulesFor(std::string_view lhs) const;
  std::string_view start_symbol() const { return kStartSymbol; }

  // One rule per line in first-seen order.
  std::string ToText() const;
  static Grammar FromText(std::string_view text);

  // Returns a description of the first violated invariant, if any.
  std::optional<std::string> CheckInvariants() const;

 private:
  std::vector<ProductionRule> rules_;
  std::map<ProductionRule, size_t> ids_;
  std::map<std::string, std::vector<size_t>, std::less<>> by_lhs_;
};

// Derivation tree: a SqlTree spelled as rule applications.
struct DerivNode {
  Symbol symbol;
  std::optional<ProductionRule> rule;  // set for non-terminals
  std::string payload;                 // copy-slot filler
  std::vector<DerivNode> children;
};

DerivNode ToDerivation(const SqlTree &tree);
SqlTree FromDerivation(const DerivNode &root);

// One rule per internal node, breadth-first from the root.
std::vector<ProductionRule> ExtractRules(const SqlTree &tree);

// Deduplicated union of ExtractRules over `trees`, first-seen order.
Grammar InduceGrammar(std::span<const SqlTree> trees);

struct DecoderAction {
  enum class Kind { kApplyRule, kCopyColumn, kCopyValue, kCopyTable };
  Kind kind = Kind::kApplyRule;
  size_t rule_id = 0;   // kApplyRule
  std::string payload;  // copy actions

  static DecoderAction Apply(size_t id) { return {Kind::kApplyRule, id, {}}; }
  static DecoderAction Copy(CopyKind kind, std::string payload);

  std::string ToString(const Grammar &grammar) const;
  bool operator==(const DecoderAction &) const = default;
};

// Partial derivation built by leftmost expansion. The target is always the
// leftmost unexpanded non-terminal or unfilled copy slot.
class PartialTree {
 public:
  struct Node {
    Symbol symbol;
    int rule = -1;  // applied rule id for expanded non-terminals
    std::string payload;
    std::vector<int> children;
    int parent = -1;
    int depth = 0;    // tree depth
    int nesting = 0;  // subquery nesting
    Clause clause = Clause::kNone;
  };

  explicit PartialTree(const Grammar &grammar);

  bool IsComplete() const { return pending_.empty(); }
  // Node id of the expansion target; requires !IsComplete().
  int TargetId() const { return pending_.back(); }
  const Node &Target() const { return nodes_[static_cast<size_t>(pending_.back())]; }
  const Node &node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  // Throws LhsMismatch when the rule's lhs is not the target non-terminal.
  void ApplyRule(size_t rule_id);
  void ApplyRule(const ProductionRule &rule);
  // Throws LhsMismatch when the target is not the matching copy slot.
  void ApplyCopy(CopyKind kind, const std::string &payload);
  void Apply(const DecoderAction &action);

  // Leaf symbols left to right (terminals, open non-terminals, open slots,
  // filled slots excluded).
  std::vector<Symbol> Frontier() const;
  // Requires IsComplete().
  SqlTree ToSqlTree() const;
  std::vector<SqlToken> Yield() const;

  const std::vector<DecoderAction> &actions() const { return actions_; }
  // Open node ids; back() is the target.
  const std::vector<int> &pending() const { return pending_; }
  size_t num_nodes() const { return nodes_.size(); }
  const Grammar &grammar() const { return *grammar_; }

 private:
  const Grammar *grammar_;
  std::vector<Node> nodes_;
  std::vector<int> pending_;  // stack; back() is the leftmost open node
  std::vector<DecoderAction> actions_;
};

// Depth-first leftmost action sequence that rebuilds `tree`. Throws
// RuleNotInGrammar for rules outside `grammar`.
std::vector<DecoderAction> OracleActions(const SqlTree &tree, const Grammar &grammar);

// Replays actions from the start symbol.
SqlTree Replay(std::span<const DecoderAction> actions, const Grammar &grammar);

}  // namespace t2sql

#endif  // T2SQL_GRAMMAR_H_
