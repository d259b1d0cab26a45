#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "support/grad_check.h"
#include "support/random_sql.h"
#include "t2sql/errors.h"
#include "t2sql/optim.h"
#include "t2sql/sql_exec.h"
#include "t2sql/sql_parser.h"
#include "t2sql/structured_parser.h"

using namespace t2sql;
using nlohmann::json;

namespace {

TableData AlbumTable() {
  return TableFromJson(json::parse(R"({"columns":[
      {"id":"c1_number","display":"year","type":"number"},
      {"id":"c2","display":"album","type":"string"},
      {"id":"c3","display":"label","type":"string"},
      {"id":"c4_number","display":"sales","type":"number"}],
      "rows":[["1997","Red","Sony","5"],["1999","Blue","EMI","7"],["2001","Green","Sony","2"]]})"),
                       "t1");
}

DatasetRecord Question(std::vector<std::string> tokens) {
  DatasetRecord r;
  r.record_id = "q";
  r.table_id = "t1";
  r.query_tokens = std::move(tokens);
  return r;
}

SpanPrediction Pred(size_t b, size_t e, EntityLabel label, double p) {
  SpanPrediction s;
  s.span = {b, e};
  s.label = label;
  s.probs.fill((1 - p) / 6);
  s.probs[static_cast<size_t>(LabelIndex(label))] = p;
  return s;
}

LinkResult ColumnLink(const std::string &id) {
  LinkResult r;
  LinkCandidate c;
  c.candidate_id = id;
  c.kind = LinkCandidate::Kind::kColumn;
  r.ranked.push_back({c, 1.0});
  return r;
}

// Inputs that make every copy in `actions` available.
ParserInputs InputsFor(std::span<const DecoderAction> actions) {
  ParserInputs in;
  size_t pos = 0;
  for (const auto &a : actions) {
    if (a.kind == DecoderAction::Kind::kCopyValue) in.literals.push_back({{pos, pos + 1}, a.payload, 1.0});
    ++pos;
  }
  return in;
}

std::vector<SqlTree> Trees(std::initializer_list<const char *> sql) {
  std::vector<SqlTree> out;
  for (const char *s : sql) out.push_back(ParseSql(s));
  return out;
}

}  // namespace

TEST_CASE("column type features from linked NER spans") {
  TableData t = AlbumTable();
  std::vector<SpanPrediction> spans = {Pred(1, 2, EntityLabel::kSelectColumn, 0.9)};
  std::vector<LinkResult> links = {ColumnLink("c2")};
  auto f = BuildColumnTypeFeatures(t, spans, links);
  CHECK(f.size() == 4);
  CHECK(f["c2"] == EntityLabel::kSelectColumn);
  CHECK(f["c1_number"] == EntityLabel::kNone);

  auto empty = BuildColumnTypeFeatures(t, {}, {});
  for (const auto &[id, role] : empty) CHECK(role == EntityLabel::kNone);

  // Two spans claim c3; the more confident one wins.
  spans = {Pred(0, 1, EntityLabel::kWhereColumn, 0.9), Pred(3, 4, EntityLabel::kGroupByColumn, 0.6)};
  links = {ColumnLink("c3"), ColumnLink("c3")};
  CHECK(BuildColumnTypeFeatures(t, spans, links)["c3"] == EntityLabel::kWhereColumn);
  spans = {Pred(0, 1, EntityLabel::kWhereColumn, 0.6), Pred(3, 4, EntityLabel::kGroupByColumn, 0.6)};
  CHECK(BuildColumnTypeFeatures(t, spans, links)["c3"] == EntityLabel::kWhereColumn);
}

TEST_CASE("encoder roles depend on mode and dropout") {
  TableData t = AlbumTable();
  DatasetRecord r = Question({"what", "album", "came", "out", "in", "1999", "?"});
  std::vector<TypedSpan> spans = {{1, 2, EntityLabel::kSelectColumn, "c2"},
                                  {5, 6, EntityLabel::kLiteralValue, "1999"}};
  ParserInputs in = GoldParserInputs(t, spans);
  REQUIRE(in.literals.size() == 1);
  REQUIRE(in.columns.size() == 1);

  EncoderOutput with = Encode(r, t, in, HarnessMode::kColumnTypeFeature, false);
  CHECK(with.columns.size() == 4);
  CHECK(with.columns[1].role == EntityLabel::kSelectColumn);
  CHECK(with.columns[1].overlap_bucket == 2);
  CHECK(with.columns[0].has_literal);
  CHECK(with.literals.size() == 1);
  CHECK(with.literals[0].numeric);

  EncoderOutput dropped = Encode(r, t, in, HarnessMode::kColumnTypeFeature, true);
  ParserInputs no_roles = in;
  for (auto &[id, role] : no_roles.features) role = EntityLabel::kNone;
  CHECK(dropped == Encode(r, t, no_roles, HarnessMode::kColumnTypeFeature, false));
  CHECK(dropped.roles_mask == 0);
  CHECK(Encode(r, t, in, HarnessMode::kBaseline, false) == dropped);

  EncoderOutput linked = Encode(r, t, in, HarnessMode::kLinkedColumnsOnly, false);
  REQUIRE(linked.columns.size() == 1);
  CHECK(linked.columns[0].id == "c2");
  CHECK(linked.columns[0].role == EntityLabel::kNone);
}

TEST_CASE("legal actions follow the grammar and the encoder") {
  std::vector<SqlTree> train = Trees({"select c2 from w", "select c2 from w where c1_number = 1999"});
  Grammar g = InduceGrammar(train);
  TableData t = AlbumTable();
  DatasetRecord r = Question({"what", "album"});
  EncoderOutput enc = Encode(r, t, ParserInputs{}, HarnessMode::kBaseline, false);
  DecodeContext ctx(g, enc);
  PartialTree state(g);

  // Without literals the WHERE production cannot complete.
  auto legal = ctx.LegalActions(state);
  REQUIRE(legal.size() == 1);
  CHECK(g.rule(legal[0].rule_id).ToString() == "Stmt -> SelectClause \"from\" COPY_TABLE");
  CHECK(g.RulesFor("Stmt").size() == 2);
  CHECK(ctx.RemainingCost(state) == 5);

  ParserInputs in;
  in.literals.push_back({{1, 2}, "1999", 1.0});
  EncoderOutput enc2 = Encode(r, t, in, HarnessMode::kBaseline, false);
  DecodeContext ctx2(g, enc2);
  CHECK(ctx2.LegalActions(state).size() == g.RulesFor("Stmt").size());

  state.Apply(legal[0]);
  state.Apply(ctx.LegalActions(state).at(0));
  state.Apply(ctx.LegalActions(state).at(0));
  REQUIRE(state.Target().symbol.copy_kind() == CopyKind::kColumn);
  CHECK(ctx.LegalActions(state).size() == 4);

  LogLinearScorer scorer(g, 1 << 10);
  std::mt19937_64 rng(3);
  FillNormal(scorer.weights(), 1.0, rng);
  auto d = StepScores(state, ctx, scorer);
  double total = 0;
  for (double p : d.probs) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a tight step budget masks long productions") {
  std::vector<SqlTree> train = Trees({"select c2 from w", "select c2 , c3 from w"});
  Grammar g = InduceGrammar(train);
  TableData t = AlbumTable();
  EncoderOutput enc = Encode(Question({"x"}), t, ParserInputs{}, HarnessMode::kBaseline, false);
  DecodeContext ctx(g, enc, 5);
  PartialTree state(g);
  state.Apply(ctx.LegalActions(state).at(0));
  auto legal = ctx.LegalActions(state);
  REQUIRE(legal.size() == 1);
  CHECK(g.rule(legal[0].rule_id).ToString() == "SelectClause -> SelectItem");
  DecodeContext roomy(g, enc, 8);
  CHECK(roomy.LegalActions(state).size() == 2);
}

TEST_CASE("the oracle scorer reproduces the gold derivation") {
  std::vector<SqlTree> train = Trees({"select c2 from w where c1_number = 1999",
                                      "select count ( * ) from w where c3 = 'Sony'",
                                      "select c3 from w group by c3 order by count ( * ) desc limit 1"});
  Grammar g = InduceGrammar(train);
  TableData t = AlbumTable();
  for (const auto &tree : train) {
    auto gold = OracleActions(tree, g);
    EncoderOutput enc = Encode(Question({"q"}), t, InputsFor(gold), HarnessMode::kBaseline, false);
    DecodeContext ctx(g, enc);
    OracleScorer oracle(gold);
    Hypothesis h = DecodeGreedy(ctx, oracle);
    CHECK(h.tree == tree);
    CHECK(h.log_prob == 0.0);
    auto beam = DecodeBeam(ctx, oracle, 4);
    CHECK(beam.front().tree == tree);
  }
}

TEST_CASE("beam search is sound and monotone under random weights") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    TableData t = testing::RandomTable(rng, 6);
    testing::RandomTreeGen gen(rng, t);
    std::vector<SqlTree> trees;
    for (int i = 0; i < 8; ++i) trees.push_back(gen.Tree());
    Grammar g = InduceGrammar(trees);
    auto gold = OracleActions(trees[0], g);
    EncoderOutput enc = Encode(Question({"a", "b"}), t, InputsFor(gold), HarnessMode::kBaseline, false);
    DecodeContext ctx(g, enc);
    LogLinearScorer scorer(g, 1 << 12, static_cast<uint64_t>(trial));
    FillNormal(scorer.weights(), 0.5, rng);

    Hypothesis greedy = DecodeGreedy(ctx, scorer);
    auto b1 = DecodeBeam(ctx, scorer, 1);
    REQUIRE(b1.size() == 1);
    CHECK(b1[0].actions == greedy.actions);
    CHECK(b1[0].log_prob == doctest::Approx(greedy.log_prob).epsilon(1e-12));

    for (size_t k : {2, 4, 8}) {
      auto beam = DecodeBeam(ctx, scorer, k);
      CHECK(beam.size() <= k);
      for (size_t i = 1; i < beam.size(); ++i) CHECK(beam[i - 1].log_prob >= beam[i].log_prob);
      CHECK(beam[0].log_prob >= b1[0].log_prob - 1e-12);
      for (const auto &h : beam) {
        CHECK(h.actions.size() <= kDefaultMaxSteps);
        CHECK(ParseSql(SerializeText(h.tree)) == h.tree);
        // The grammar is untyped, so type errors are possible; dangling columns are not.
        try {
          Execute(h.tree, t);
        } catch (const TypeMismatch &) {
        } catch (const NonScalarSubquery &) {
        }
      }
    }
  }
}

TEST_CASE("parser loss gradient matches finite differences") {
  std::vector<SqlTree> train = Trees({"select c2 from w", "select c2 from w where c1_number = 1999",
                                      "select c2 from w where c3 = 'Sony' and c1_number = 1999"});
  Grammar g = InduceGrammar(train);
  TableData t = AlbumTable();
  auto gold = OracleActions(train[2], g);
  DatasetRecord r = Question({"album", "by", "sony", "in", "1999"});
  ParserInputs in = GoldParserInputs(t, std::vector<TypedSpan>{{0, 1, EntityLabel::kSelectColumn, "c2"},
                                                               {2, 3, EntityLabel::kLiteralValue, "Sony"},
                                                               {4, 5, EntityLabel::kLiteralValue, "1999"}});
  EncoderOutput enc = Encode(r, t, in, HarnessMode::kColumnTypeFeature, false);
  DecodeContext ctx(g, enc);
  LogLinearScorer scorer(g, 1 << 8);
  std::mt19937_64 rng(5);
  FillNormal(scorer.weights(), 0.3, rng);

  for (size_t prefix : {size_t{2}, gold.size()}) {
    std::span<const DecoderAction> part(gold.data(), prefix);
    std::vector<double> grad(scorer.weights().size(), 0.0);
    NspLossAndGradient(scorer, ctx, part, &grad);
    auto support = testing::GradientSupport(grad, 40);
    REQUIRE_FALSE(support.empty());
    auto res = testing::CheckGradient(scorer.weights(), grad, support,
                                      [&] { return NspLossAndGradient(scorer, ctx, part, nullptr); });
    CHECK(res.max_rel_error <= testing::kGradRelTol);
  }
}

TEST_CASE("training fits a single record") {
  std::vector<SqlTree> train = Trees({"select c2 from w where c1_number = 1999",
                                      "select count ( * ) from w", "select c3 from w group by c3"});
  Grammar g = InduceGrammar(train);
  TableData t = AlbumTable();
  DatasetRecord r = Question({"what", "album", "came", "out", "in", "1999", "?"});
  std::vector<TypedSpan> spans = {{1, 2, EntityLabel::kSelectColumn, "c2"},
                                  {5, 6, EntityLabel::kLiteralValue, "1999"}};
  std::vector<NspExample> data = {{&r, &t, GoldParserInputs(t, spans), train[0]}};
  LogLinearScorer scorer(g);
  NspTrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 1;
  cfg.feature_dropout = 0;
  auto report = TrainNsp(scorer, g, data, cfg);
  CHECK(report.trained == 1);
  CHECK(report.loss_curve.back() < 0.01);
  CHECK(report.loss_curve.back() < report.loss_curve.front());

  EncoderOutput enc = Encode(r, t, data[0].inputs, cfg.mode, false);
  DecodeContext ctx(g, enc);
  CHECK(DecodeGreedy(ctx, scorer).tree == train[0]);

  LogLinearScorer again = LogLinearScorer::FromJson(json::parse(scorer.ToJson().dump()), g);
  CHECK(again.weights() == scorer.weights());
  std::vector<SqlTree> other = Trees({"select c2 from w"});
  CHECK_THROWS_AS(LogLinearScorer::FromJson(scorer.ToJson(), InduceGrammar(other)), Error);
}

TEST_CASE("unreachable gold derivations are counted, not trained") {
  std::vector<SqlTree> train = Trees({"select c2 from w where c1_number = 1999"});
  Grammar g = InduceGrammar(train);
  TableData t = AlbumTable();
  DatasetRecord r = Question({"what", "album"});
  std::vector<NspExample> data = {{&r, &t, ParserInputs{}, train[0]},
                                  {&r, &t, ParserInputs{}, ParseSql("select max ( c2 ) from w")}};
  LogLinearScorer scorer(g, 1 << 10);
  CHECK_THROWS_AS(TrainNsp(scorer, g, data, NspTrainConfig{}), EmptyTrainingSet);
  EncoderOutput enc = Encode(r, t, ParserInputs{}, HarnessMode::kBaseline, false);
  // Zero literals leave the COPY_VALUE slot without candidates.
  DecodeContext ctx(g, enc);
  CHECK(ctx.RemainingCost(PartialTree(g)) == SIZE_MAX);
  CHECK_THROWS_AS(DecodeGreedy(ctx, scorer), DeadEnd);
}

TEST_CASE("harness mode names round trip") {
  for (HarnessMode m : kAllHarnessModes) CHECK(HarnessModeFromName(HarnessModeName(m)) == m);
  CHECK_FALSE(HarnessModeFromName("nope"));
}
