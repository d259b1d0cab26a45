#include <random>

#include "doctest.h"
#include "support/random_sql.h"
#include "t2sql/errors.h"
#include "t2sql/sql_exec.h"
#include "t2sql/sql_parser.h"

using namespace t2sql;

namespace {

TableData LetterTable() {
  auto j = nlohmann::json::parse(R"({
    "name": "w",
    "columns": [{"id": "c1", "display": "name", "type": "string"},
                {"id": "c2", "display": "score", "type": "number"}],
    "rows": [["a", 1], ["b", 5], ["c", 3]]})");
  return TableFromJson(j, "letters");
}

}  // namespace

TEST_CASE("minimal query parses into a single select item") {
  SqlTree t = ParseSql("select c2 from w");
  REQUIRE(t.root.select.size() == 1);
  CHECK_FALSE(t.root.select[0].agg);
  CHECK(t.root.select[0].column().id == "c2");
  CHECK(t.root.table == "w");
  CHECK_FALSE(t.root.where);
}

TEST_CASE("missing select item is a syntax error at token 1") {
  try {
    ParseSql("select from w");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError &e) {
    CHECK(e.position() == 1);
  }
}

TEST_CASE("constructs outside the subset are reported by name") {
  CHECK_THROWS_AS(ParseSql("select c1 from w where c2 = 1 or c2 = 2"), UnsupportedConstruct);
  CHECK_THROWS_AS(ParseSql("select distinct c1 from w"), UnsupportedConstruct);
  CHECK_THROWS_AS(ParseSql("select c1 from w limit 1"), UnsupportedConstruct);
  CHECK_THROWS_AS(ParseSql("select abs(c1) from w"), UnsupportedConstruct);
  CHECK_THROWS_AS(ParseSql("select c1 from w group by c1 , c2"), UnsupportedConstruct);
}

TEST_CASE("canonical serialization") {
  CHECK(SerializeText(ParseSql("SELECT COUNT(*) FROM w")) == "select count ( * ) from w");
  CHECK(SerializeText(ParseSql("select c1 from w where c2 = (select max(c2) from w)")) ==
        "select c1 from w where c2 = ( select max ( c2 ) from w )");
  CHECK(SerializeText(ParseSql("select c1 from w where c1 not in ('a', 'it''s')")) ==
        "select c1 from w where c1 not in ( 'a' , 'it''s' )");
  CHECK(SerializeText(ParseSql("select c1 from w order by c2 limit 1")) ==
        "select c1 from w order by c2 asc limit 1");
}

TEST_CASE("literals are typed at parse time") {
  SqlTree t = ParseSql("select c1 from w where c2 = '1990' and c1 = 'x1'");
  const auto &conds = t.root.where->conds;
  CHECK(std::get<Value>(conds[0].rhs).is_number());
  CHECK_FALSE(std::get<Value>(conds[1].rhs).is_number());
}

TEST_CASE("typed tokens parse and report clause roles") {
  std::vector<SqlToken> toks = {
      {SqlTokenKind::kKeyword, "select"}, {SqlTokenKind::kColumn, "c2"},
      {SqlTokenKind::kKeyword, "from"},   {SqlTokenKind::kKeyword, "w"},
      {SqlTokenKind::kKeyword, "where"},  {SqlTokenKind::kColumn, "c1"},
      {SqlTokenKind::kKeyword, "not in"}, {SqlTokenKind::kKeyword, "("},
      {SqlTokenKind::kLiteral, "a b"},    {SqlTokenKind::kKeyword, ")"},
      {SqlTokenKind::kKeyword, "order by"}, {SqlTokenKind::kKeyword, "max"},
      {SqlTokenKind::kKeyword, "("},      {SqlTokenKind::kColumn, "c3"},
      {SqlTokenKind::kKeyword, ")"},      {SqlTokenKind::kKeyword, "desc"}};
  ParseResult r = ParseSqlWithRoles(toks);
  CHECK(r.roles[1].clause == Clause::kSelect);
  CHECK(r.roles[5].clause == Clause::kWhere);
  CHECK(r.roles[8].clause == Clause::kWhere);
  CHECK(r.roles[11].is_agg);
  CHECK(r.roles[13].clause == Clause::kOrderBy);
  CHECK(std::get<ValueList>(r.tree.root.where->conds[0].rhs)[0].text() == "a b");
}

TEST_CASE("round trip holds on random trees") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    TableData t = testing::RandomTable(rng);
    SqlTree tree = testing::RandomTreeGen(rng, t).Tree();
    REQUIRE_FALSE(ValidateTree(tree));
    SqlTree text_back = ParseSql(SerializeText(tree));
    SqlTree typed_back = ParseSql(SerializeTyped(tree));
    REQUIRE(text_back == tree);
    REQUIRE(typed_back == tree);
  }
}

TEST_CASE("execute: cardinality and max subquery") {
  TableData t = LetterTable();
  Denotation count = Execute(ParseSql("select count(*) from w"), t);
  REQUIRE(count.is_scalar());
  CHECK(count.rows[0][0].number == 3);

  Denotation d = Execute(ParseSql("select c1 from w where c2 = ( select max(c2) from w )"), t);
  REQUIRE(d.rows.size() == 1);
  CHECK(d.rows[0][0].text == "b");
}

TEST_CASE("execute: group by, order by, limit and ties") {
  auto j = nlohmann::json::parse(R"({
    "columns": [{"id": "c1", "type": "string"}, {"id": "c2", "type": "number"}],
    "rows": [["x", 2], ["y", 2], ["x", 1], [null, 7], ["z", null]]})");
  TableData t = TableFromJson(j, "g");
  auto top = Execute(ParseSql("select c1 from w group by c1 order by count(*) desc limit 1"), t);
  CHECK(top.Flatten() == std::vector<std::string>{"x"});
  // Ties keep original row order.
  auto tie = Execute(ParseSql("select c1 from w where c2 = 2 order by c2 desc limit 1"), t);
  CHECK(tie.Flatten() == std::vector<std::string>{"x"});
  CHECK(Execute(ParseSql("select count(c2) from w"), t).Flatten() == std::vector<std::string>{"4"});
  CHECK(Execute(ParseSql("select avg(c2) from w"), t).Flatten() == std::vector<std::string>{"3"});
  CHECK(Execute(ParseSql("select c1 from w where c2 > 100"), t).rows.empty());
  CHECK(Execute(ParseSql("select sum(c2) from w where c2 > 100"), t).Flatten() == std::vector<std::string>{""});
  // Nulls sort first ascending.
  CHECK(Execute(ParseSql("select c2 from w order by c2 asc limit 1"), t).rows[0][0].is_null());
}

TEST_CASE("execute: errors") {
  TableData t = LetterTable();
  CHECK_THROWS_AS(Execute(ParseSql("select c9 from w"), t), UnknownColumn);
  CHECK_THROWS_AS(Execute(ParseSql("select c1 from w where c2 = 'abc'"), t), TypeMismatch);
  CHECK_THROWS_AS(Execute(ParseSql("select sum(c1) from w"), t), TypeMismatch);
  CHECK_THROWS_AS(Execute(ParseSql("select c1 from w where c2 = ( select c2 from w )"), t),
                  NonScalarSubquery);
}

TEST_CASE("execute is pure") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    TableData t = testing::RandomTable(rng);
    TableData copy = t;
    SqlTree tree = testing::RandomTreeGen(rng, t).Tree();
    Denotation a = Execute(tree, t), b = Execute(tree, t);
    CHECK(a.rows == b.rows);
    CHECK(nlohmann::json(TableToJson(t)) == TableToJson(copy));
  }
}

TEST_CASE("adding an AND conjunct never enlarges the filtered row set") {
  std::mt19937_64 rng(13);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    TableData t = testing::RandomTable(rng);
    SqlTree tree = testing::RandomTreeGen(rng, t).Tree();
    if (!tree.root.where || tree.root.group || tree.root.order) continue;
    bool plain = true;
    for (const auto &item : tree.root.select) plain &= !item.agg;
    if (!plain) continue;
    SqlTree wider = tree;
    wider.root.where->conds.pop_back();
    if (wider.root.where->conds.empty()) wider.root.where.reset();
    CHECK(Execute(tree, t).rows.size() <= Execute(wider, t).rows.size());
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("denotation comparison") {
  Denotation scalar{{{Datum::Number(3)}}, false};
  CHECK(DenotationEqual(scalar, std::vector<std::string>{"3"}));
  Denotation two{{{Datum::String("b")}, {Datum::String("a")}}, false};
  CHECK(DenotationEqual(two, std::vector<std::string>{"a", "b"}));
  two.ordered = true;
  CHECK_FALSE(DenotationEqual(two, std::vector<std::string>{"a", "b"}));
  Denotation dec{{{Datum::String("1.50")}}, false};
  CHECK(DenotationEqual(dec, std::vector<std::string>{"1.5"}));
  CHECK_FALSE(DenotationEqual(dec, std::vector<std::string>{"1.5", "2"}));
}
