#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "support/grad_check.h"
#include "t2sql/errors.h"
#include "t2sql/linker.h"
#include "t2sql/text.h"

using namespace t2sql;
using nlohmann::json;

namespace {

TableData FourColumns() {
  return TableFromJson(json::parse(R"({"columns":[
      {"id":"c1","display":"player","type":"string"},
      {"id":"c2","display":"team","type":"string"},
      {"id":"c3_number","display":"points","type":"number"},
      {"id":"c4","display":"date of birth","type":"date"}],
      "rows":[["LeBron James","Lakers","30","1984-12-30"],
              ["Kevin Love","Cavaliers","18","1988-09-07"],
              ["Kevin Durant","Suns","28","1988-09-29"]]})"),
                       "nba");
}

DatasetRecord Record(std::vector<std::string> q) {
  DatasetRecord r;
  r.record_id = "r";
  r.table_id = "nba";
  r.query_tokens = std::move(q);
  return r;
}

TableData OneColumn(const std::vector<std::string> &cells) {
  json rows = json::array();
  for (const auto &c : cells) rows.push_back({c});
  return TableFromJson(json{{"columns", {{{"id", "c1"}, {"display", "name"}, {"type", "string"}}}}, {"rows", rows}},
                       "one");
}

}  // namespace

TEST_CASE("candidate generation narrows by mention type") {
  TableData t = FourColumns();
  std::vector<std::string> q = {"how", "many", "points", "did", "kevin", "love", "score"};
  auto cols = GenerateCandidates({2, 3, EntityLabel::kWhereColumn, std::nullopt}, q, t);
  REQUIRE(cols.candidates.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(cols.candidates[i].kind == LinkCandidate::Kind::kColumn);
    CHECK(cols.candidates[i].candidate_id == t.column_ids[i]);
    CHECK(cols.candidates[i].meta_type == t.column_types[i]);
  }
  auto cells = GenerateCandidates({4, 6, EntityLabel::kLiteralValue, std::nullopt}, q, t);
  CHECK(cells.candidates.size() == 12);
  for (const auto &c : cells.candidates) {
    CHECK(c.kind == LinkCandidate::Kind::kCell);
    CHECK(t.HasCell(c.candidate_id));
  }
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("v" + std::to_string(i));
  ten.push_back("v3");
  CHECK(GenerateCandidates({0, 1, EntityLabel::kLiteralValue, std::nullopt}, q, OneColumn(ten)).candidates.size() == 10);

  CHECK_THROWS_AS(GenerateCandidates({0, 1, EntityLabel::kLiteralValue, std::nullopt}, q, OneColumn({})), EmptyTable);
  CHECK_THROWS_AS(GenerateCandidates({0, 1, EntityLabel::kAggFunction, std::nullopt}, q, t), Error);
}

TEST_CASE("meta_value is the column's best fuzzy cell against the query") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> ch('a', 'e'), len(1, 6), rows(1, 12);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<std::string> cells(static_cast<size_t>(rows(rng)));
    for (auto &c : cells) {
      c.clear();
      for (int k = len(rng); k > 0; --k) c.push_back(static_cast<char>(ch(rng)));
    }
    TableData t = OneColumn(cells);
    std::vector<std::string> q = {"abc", "de", "x"};
    auto cs = GenerateCandidates({0, 1, EntityLabel::kSelectColumn, std::nullopt}, q, t);
    // Brute force: first cell with the maximal fuzzy score.
    std::string want;
    double best = -1;
    for (const auto &c : cells) {
      double s = FuzzyScore("abc de x", c);
      if (s > best) best = s, want = c;
    }
    REQUIRE(cs.candidates[0].meta_value == want);
  }
}

TEST_CASE("assembled inputs have 3 or 5 segments") {
  TableData t = FourColumns();
  std::vector<std::string> q = {"points", "of", "lebron"};
  TypedSpan m{2, 3, EntityLabel::kLiteralValue, std::nullopt};
  LinkCandidate cell{"LeBron James", LinkCandidate::Kind::kCell, "LeBron James", std::nullopt, std::nullopt};
  auto in = AssembleInput(q, m, cell);
  CHECK(Join(in.tokens, " ") == "points of lebron [SEP] lebron [SEP] LeBron James");
  CHECK(in.Segments().size() == 3);
  LinkCandidate col{"c3_number", LinkCandidate::Kind::kColumn, "points", "30", ColumnType::kNumber};
  auto ic = AssembleInput(q, {0, 1, EntityLabel::kSelectColumn, std::nullopt}, col);
  CHECK(Join(ic.tokens, " ") == "points of lebron [SEP] points [SEP] points [SEP] 30 [SEP] number");
  CHECK(ic.Segments().size() == 5);
  col.meta_value = "";
  auto segs = AssembleInput(q, m, col).Segments();
  REQUIRE(segs.size() == 5);
  CHECK(segs[3].empty());
  LinkCandidate sneaky{"a [SEP] b", LinkCandidate::Kind::kCell, "a [SEP] b", std::nullopt, std::nullopt};
  CHECK(AssembleInput(q, m, sneaky).Segments().size() == 3);
  TableData empty_col = TableFromJson(json::parse(R"({"columns":[{"id":"c1","display":"x"}],"rows":[[null]]})"), "e");
  auto ec = GenerateCandidates({0, 1, EntityLabel::kSelectColumn, std::nullopt}, q, empty_col);
  CHECK(ec.candidates[0].meta_value == "");
  CHECK(AssembleInput(q, m, ec.candidates[0]).Segments().size() == 5);
}

TEST_CASE("scoring is per-candidate and deterministic") {
  TableData t = FourColumns();
  std::vector<std::string> q = {"what", "team", "does", "kevin", "love", "play", "for"};
  TypedSpan m{3, 5, EntityLabel::kLiteralValue, std::nullopt};
  auto cs = GenerateCandidates(m, q, t).candidates;
  std::mt19937_64 rng(3);
  LinkerModel model;
  std::normal_distribution<double> nd;
  for (auto &w : model.weights()) w = nd(rng);
  std::vector<AssembledInput> inputs;
  for (const auto &c : cs) inputs.push_back(AssembleInput(q, m, c));
  auto s1 = model.ScoreCandidates(inputs);
  CHECK(model.ScoreCandidates(inputs) == s1);
  std::vector<AssembledInput> dup = {inputs[0], inputs[0]};
  auto sd = model.ScoreCandidates(dup);
  CHECK(sd[0] == sd[1]);
  for (double s : s1) CHECK(std::isfinite(s));
  std::vector<size_t> perm(inputs.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<AssembledInput> shuffled;
  for (size_t i : perm) shuffled.push_back(inputs[i]);
  auto s2 = model.ScoreCandidates(shuffled);
  for (size_t i = 0; i < perm.size(); ++i) CHECK(s2[i] == s1[perm[i]]);
}

TEST_CASE("exact-match feature alone ranks the exact match first") {
  TableData t = FourColumns();
  std::vector<std::string> q = {"team", "of", "kevin", "love"};
  TypedSpan m{2, 4, EntityLabel::kLiteralValue, std::nullopt};
  LinkerModel model;
  model.SetDense("exact", 1.0);
  auto r = Link(m, q, t, model);
  CHECK(r.chosen().candidate_id == "Kevin Love");
  CHECK(r.ranked[0].second > r.ranked[1].second);
  CHECK(Link(m, q, t, LinkerModel::FuzzyBaseline()).chosen().candidate_id == "Kevin Love");

  auto single = OneColumn({"only"});
  CHECK(Link({0, 1, EntityLabel::kLiteralValue, std::nullopt}, q, single, model).chosen().candidate_id == "only");

  // Equal scores fall back to candidate id order.
  auto tie = OneColumn({"zeta", "alpha", "mu"});
  auto rt = Link({0, 1, EntityLabel::kLiteralValue, std::nullopt}, q, tie, LinkerModel{});
  CHECK(rt.ranked[0].first.candidate_id == "alpha");
  CHECK(rt.ranked[2].first.candidate_id == "zeta");
}

TEST_CASE("ranking is invariant to a constant logit shift") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  TableData t = FourColumns();
  std::vector<std::string> q = {"who", "has", "18", "points"};
  for (int iter = 0; iter < 50; ++iter) {
    LinkerModel model;
    for (auto &w : model.weights()) w = nd(rng);
    TypedSpan m{2, 3, EntityLabel::kLiteralValue, std::nullopt};
    auto r = Link(m, q, t, model);
    std::vector<AssembledInput> inputs;
    for (const auto &[c, s] : r.ranked) inputs.push_back(AssembleInput(q, m, c));
    auto scores = model.ScoreCandidates(inputs);
    double shift = nd(rng) * 10;
    size_t best = 0, best_shifted = 0;
    for (size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
      if (scores[i] + shift > scores[best_shifted] + shift) best_shifted = i;
    }
    CHECK(best == best_shifted);
    CHECK(r.chosen().candidate_id == r.ranked[best].first.candidate_id);
    auto again = Link(m, q, t, model);
    CHECK(again.ranked == r.ranked);
  }
}

TEST_CASE("NEL gradient matches finite differences on a 3-candidate group") {
  TableData t = OneColumn({"LeBron James", "Kevin Love", "Kevin Durant"});
  DatasetRecord rec = Record({"lbj", "points"});
  NelExample ex{&rec, &t, {0, 1, EntityLabel::kLiteralValue, "LeBron James"}};
  LinkerModel model(64);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (auto &w : model.weights()) w = nd(rng);
  NelGroup g;
  REQUIRE(MakeNelGroup(model, ex, &g) == GroupStatus::kOk);
  REQUIRE(g.features.size() == 3);
  std::vector<double> grad(model.weights().size(), 0.0);
  GroupLossAndGradient(model, g, &grad);
  std::vector<size_t> idx(grad.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto r = testing::CheckGradient(model.weights(), grad, idx, [&] { return GroupLossAndGradient(model, g, nullptr); });
  CHECK(r.max_rel_error <= testing::kGradRelTol);
}

TEST_CASE("training separates exact matches and learns acronym aliases") {
  TableData t = FourColumns();
  std::vector<DatasetRecord> recs;
  std::vector<NelExample> train;
  // Synthetic alias pairs: initials of a two-word name.
  const char *first[] = {"Tim", "Anna", "Paul", "Rosa", "Mark", "Ella", "Dan", "Iris", "Omar", "Nina", "Carl", "Vera"};
  const char *last[] = {"Smith", "Brown", "Garcia", "Lee", "Young", "Hall", "Wright", "King", "Scott", "Green", "Adams", "Baker"};
  std::vector<TableData> tables;
  tables.reserve(12);
  recs.reserve(12);
  for (int i = 0; i < 12; ++i) {
    std::vector<std::string> names;
    for (int k = 0; k < 4; ++k) names.push_back(std::string(first[(i + 5 * k) % 12]) + " " + last[(i + 7 * k) % 12]);
    tables.push_back(OneColumn(names));
    std::string gold = names[static_cast<size_t>(i % 4)];
    std::string alias;
    for (const auto &w : SplitWhitespace(gold)) alias.push_back(w[0]);
    recs.push_back(Record({"points", "of", alias}));
  }
  for (int i = 0; i < 12; ++i) {
    std::string gold = tables[static_cast<size_t>(i)].rows[static_cast<size_t>(i % 4)][0].text;
    train.push_back({&recs[static_cast<size_t>(i)], &tables[static_cast<size_t>(i)], {2, 3, EntityLabel::kLiteralValue, gold}});
  }
  LinkerModel model;
  NelTrainConfig cfg;
  cfg.epochs = 60;
  auto report = TrainNel(model, train, train, cfg);
  CHECK(report.groups == 12);
  CHECK(report.loss_curve.back() < report.loss_curve.front());
  CHECK(*report.dev_top1 == 1.0);

  TableData nba = OneColumn({"LeBron James", "Kevin Love"});
  std::vector<std::string> q = {"how", "many", "points", "did", "LBJ", "score"};
  CHECK(Link({4, 5, EntityLabel::kLiteralValue, std::nullopt}, q, nba, model).chosen().candidate_id == "LeBron James");

  DatasetRecord exact_rec = Record({"team", "of", "kevin", "durant"});
  std::vector<NelExample> exact = {{&exact_rec, &t, {2, 4, EntityLabel::kLiteralValue, "Kevin Durant"}}};
  LinkerModel fresh;
  TrainNel(fresh, exact, {}, cfg);
  CHECK(EvaluateLinker(fresh, exact).correct == 1);
}

TEST_CASE("training bookkeeping and artifact round trip") {
  TableData t = OneColumn({"solo"});
  DatasetRecord rec = Record({"solo"});
  std::vector<NelExample> only_degenerate = {{&rec, &t, {0, 1, EntityLabel::kLiteralValue, "solo"}},
                                             {&rec, &t, {0, 1, EntityLabel::kLiteralValue, std::nullopt}},
                                             {&rec, &t, {0, 1, EntityLabel::kLiteralValue, "absent"}}};
  LinkerModel model;
  CHECK_THROWS_AS(TrainNel(model, only_degenerate, {}, {}), EmptyTrainingSet);
  NelGroup g;
  CHECK(MakeNelGroup(model, only_degenerate[0], &g) == GroupStatus::kDegenerate);
  CHECK(MakeNelGroup(model, only_degenerate[1], &g) == GroupStatus::kNoGold);
  CHECK(MakeNelGroup(model, only_degenerate[2], &g) == GroupStatus::kNoGold);

  LinkerModel m = LinkerModel::FuzzyBaseline();
  m.weights()[100] = 0.25;
  LinkerModel back = LinkerModel::FromJson(json::parse(m.ToJson().dump()));
  CHECK(back.weights() == m.weights());
  json bad = m.ToJson();
  bad["feature_names"][0] = "other";
  CHECK_THROWS_AS(LinkerModel::FromJson(bad), Error);
}

TEST_CASE("candidate cap keeps the closest cells and reports overflow") {
  std::vector<std::string> cells;
  for (int i = 0; i < 520; ++i) cells.push_back("cell" + std::to_string(i));
  TableData t = OneColumn(cells);
  std::vector<std::string> q = {"cell519"};
  auto cs = GenerateCandidates({0, 1, EntityLabel::kLiteralValue, std::nullopt}, q, t);
  CHECK(cs.candidates.size() == 500);
  CHECK(cs.overflow == 20);
  CHECK(std::any_of(cs.candidates.begin(), cs.candidates.end(),
                    [](const LinkCandidate &c) { return c.candidate_id == "cell519"; }));
}

TEST_CASE("fuzzy baseline links every exact-match mention") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> ch('a', 'z'), len(2, 8), n(2, 30);
  size_t total = 0;
  for (int iter = 0; iter < 200; ++iter) {
    std::set<std::string> uniq;
    int k = n(rng);
    while (static_cast<int>(uniq.size()) < k) {
      std::string s;
      for (int l = len(rng); l > 0; --l) s.push_back(static_cast<char>(ch(rng)));
      uniq.insert(s);
    }
    std::vector<std::string> cells(uniq.begin(), uniq.end());
    std::shuffle(cells.begin(), cells.end(), rng);
    TableData t = OneColumn(cells);
    std::string gold = cells[static_cast<size_t>(iter) % cells.size()];
    DatasetRecord rec = Record({"find", gold, "now"});
    NelExample ex{&rec, &t, {1, 2, EntityLabel::kLiteralValue, gold}};
    REQUIRE(IsExactMatchMention(ex));
    std::vector<NelExample> one = {ex};
    CHECK(EvaluateLinker(LinkerModel::FuzzyBaseline(), one).correct == 1);
    ++total;
  }
  CHECK(total == 200);
}
