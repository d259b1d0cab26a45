#ifndef T2SQL_SQL_PARSER_H_
#define T2SQL_SQL_PARSER_H_

#include <span>
#include <string_view>
#include <vector>

#include "t2sql/sql_ast.h"

namespace t2sql {

enum class Clause { kNone, kSelect, kWhere, kGroupBy, kOrderBy };

// Where an input token landed in the tree: its nearest clause ancestor and
// whether it is an aggregation keyword.
struct TokenRole {
  Clause clause = Clause::kNone;
  bool is_agg = false;
  int depth = 0;  // 0 = outermost statement
};

struct ParseResult {
  SqlTree tree;
  std::vector<TokenRole> roles;  // one per input token
};

// Raw SQL text in the supported subset.
SqlTree ParseSql(std::string_view text);

// Typed token sequence as stored in dataset files. Keyword tokens may hold
// several lexemes ("not in"); Column and Literal tokens are taken verbatim.
SqlTree ParseSql(std::span<const SqlToken> tokens);
ParseResult ParseSqlWithRoles(std::span<const SqlToken> tokens);

}  // namespace t2sql

#endif  // T2SQL_SQL_PARSER_H_
