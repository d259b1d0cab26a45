#include <random>

#include "doctest.h"
#include "support/grad_check.h"
#include "t2sql/errors.h"
#include "t2sql/ner.h"
#include "t2sql/optim.h"

using namespace t2sql;
using nlohmann::json;

namespace {

TableData PlayerTable() {
  return TableFromJson(json::parse(R"({"columns":[
      {"id":"c1","display":"player","type":"string"},
      {"id":"c2","display":"team","type":"string"},
      {"id":"c3_number","display":"points","type":"number"}],
      "rows":[["LeBron James","Lakers","30"],["Kevin Durant","Suns","28"],["Stephen Curry","Lakers","25"]]})"),
                       "players");
}

DatasetRecord Record(std::vector<std::string> q) {
  DatasetRecord r;
  r.record_id = "r";
  r.table_id = "players";
  r.query_tokens = std::move(q);
  return r;
}

LabelDist RandomDist(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(-4, 4);
  LabelDist z{};
  for (auto &x : z) x = u(rng);
  SoftmaxInPlace(z);
  return z;
}

NerConfig TinyConfig() {
  NerConfig c;
  c.dim = 4;
  c.len_dim = 2;
  c.max_span_len = 3;
  c.hash_dim = 64;
  return c;
}

}  // namespace

TEST_CASE("enumerate_spans counts and order") {
  CHECK(EnumerateSpans(5, 3).size() == 12);
  CHECK(EnumerateSpans(1, 4).size() == 1);
  CHECK(EnumerateSpans(8, 8).size() == 36);
  for (size_t n = 1; n <= 12; ++n) {
    for (size_t L = 1; L <= 10; ++L) {
      auto spans = EnumerateSpans(n, L);
      size_t want = 0;
      for (size_t l = 1; l <= L; ++l) want += n + 1 > l ? n - l + 1 : 0;
      REQUIRE(spans.size() == want);
      CHECK(std::is_sorted(spans.begin(), spans.end()));
      for (const auto &s : spans) CHECK((s.end > s.begin && s.end - s.begin <= L && s.end <= n));
    }
  }
}

TEST_CASE("gazetteer holds each header and cell once") {
  TableData t = PlayerTable();
  Gazetteer g = Gazetteer::FromTable(t);
  // 3 headers + 9 cells, "Lakers" twice.
  CHECK(g.entries().size() == 11);
  CHECK(g.Lookup("  LeBron   James ") == MatchCategory::kCell);
  CHECK(g.Lookup("Points?") == MatchCategory::kSchema);
  CHECK(g.Lookup("bulls") == MatchCategory::kNoneMatch);
  std::vector<std::string> toks = {"lebron", "james"};
  CHECK(g.LookupTokens(toks) == MatchCategory::kCell);
  std::vector<std::string> punct = {"lakers", "?"};
  CHECK(g.LookupTokens(punct) == MatchCategory::kNoneMatch);
  g.Add("lakers", MatchCategory::kSchema);
  CHECK(g.Lookup("Lakers") == MatchCategory::kSchema);
  g.Add("LAKERS", MatchCategory::kCell);
  CHECK(g.Lookup("Lakers") == MatchCategory::kSchema);
  CHECK(Gazetteer::FromTable(t, false, true).Lookup("team") == MatchCategory::kNoneMatch);
  CHECK(Gazetteer::FromTable(t, true, false).Lookup("suns") == MatchCategory::kNoneMatch);
}

TEST_CASE("constrained_label_decode examples") {
  LabelDist peaked_literal = {0.05, 0.1, 0.02, 0.03, 0.05, 0.7, 0.05};
  CHECK(ConstrainedLabelDecode(peaked_literal, MatchCategory::kCell) == EntityLabel::kLiteralValue);
  CHECK(ConstrainedLabelDecode(peaked_literal, MatchCategory::kSchema) == EntityLabel::kWhereColumn);
  CHECK(ConstrainedLabelDecode(peaked_literal, MatchCategory::kNoneMatch) == EntityLabel::kLiteralValue);
  LabelDist none = {0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.4};
  CHECK(ConstrainedLabelDecode(none, MatchCategory::kCell) == EntityLabel::kLiteralValue);
  CHECK(ConstrainedLabelDecode(none, MatchCategory::kSchema) == EntityLabel::kSelectColumn);
  CHECK(ConstrainedLabelDecode(none, MatchCategory::kNoneMatch) == EntityLabel::kNone);
}

TEST_CASE("constrained_label_decode never leaves the compatible set") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    LabelDist d = RandomDist(rng);
    EntityLabel s = ConstrainedLabelDecode(d, MatchCategory::kSchema);
    REQUIRE(IsColumnLabel(s));
    for (int k = 0; k < 4; ++k) CHECK(d[static_cast<size_t>(k)] <= d[static_cast<size_t>(LabelIndex(s))]);
    REQUIRE(ConstrainedLabelDecode(d, MatchCategory::kCell) == EntityLabel::kLiteralValue);
    REQUIRE(ConstrainedLabelDecode(d, MatchCategory::kNoneMatch) == ArgMaxLabel(d));
  }
}

TEST_CASE("gazetteer_filter examples") {
  TableData t = PlayerTable();
  Gazetteer g = Gazetteer::FromTable(t);
  std::vector<std::string> q = {"how", "many", "points", "did", "lebron", "james", "score"};
  LabelDist none = {0.05, 0.05, 0.05, 0.05, 0.05, 0.15, 0.6};
  std::vector<SpanPrediction> preds;
  for (auto s : EnumerateSpans(q.size(), 3)) preds.push_back({s, ArgMaxLabel(none), none, MatchCategory::kNoneMatch});
  preds.push_back({{3, 5}, EntityLabel::kWhereColumn, none, MatchCategory::kNoneMatch});
  auto out = GazetteerFilter(preds, g, q);
  for (const auto &p : out) {
    if (p.span == TokenRange{4, 6}) {
      CHECK(p.match == MatchCategory::kCell);
      CHECK(p.label == EntityLabel::kLiteralValue);
    } else if (p.span == TokenRange{2, 3}) {
      CHECK(p.match == MatchCategory::kSchema);
      CHECK(IsColumnLabel(p.label));
    } else {
      CHECK(p.label == EntityLabel::kNone);  // includes the overlapping [3,5)
    }
  }

  std::vector<std::string> q2 = {"a", "b", "c", "d", "e", "f"};
  Gazetteer g2;
  g2.Add("d e f", MatchCategory::kCell);
  LabelDist col = {0.7, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05};
  std::vector<SpanPrediction> p2 = {{{2, 5}, EntityLabel::kSelectColumn, col, MatchCategory::kNoneMatch},
                                    {{3, 6}, EntityLabel::kSelectColumn, col, MatchCategory::kNoneMatch},
                                    {{0, 1}, EntityLabel::kSelectColumn, col, MatchCategory::kNoneMatch}};
  auto o2 = GazetteerFilter(p2, g2, q2);
  CHECK(o2[0].label == EntityLabel::kNone);
  CHECK(o2[1].label == EntityLabel::kLiteralValue);
  CHECK(o2[2].label == EntityLabel::kSelectColumn);

  Gazetteer empty;
  auto o3 = GazetteerFilter(p2, empty, q2);
  for (size_t i = 0; i < p2.size(); ++i) CHECK(o3[i].label == p2[i].label);
}

TEST_CASE("gazetteer_filter recall guarantee and monotone suppression") {
  std::mt19937_64 rng(8);
  TableData t = PlayerTable();
  Gazetteer g = Gazetteer::FromTable(t);
  std::vector<std::string> vocab = {"lebron", "james", "lakers", "team", "points", "the", "of", "?", "Suns", "kevin",
                                    "durant", "curry", "stephen", "most", "player"};
  std::uniform_int_distribution<size_t> pick(0, vocab.size() - 1), len(1, 10);
  for (int iter = 0; iter < 2000; ++iter) {
    std::vector<std::string> q(len(rng));
    for (auto &w : q) w = vocab[pick(rng)];
    std::vector<SpanPrediction> preds;
    for (auto s : EnumerateSpans(q.size(), 4)) {
      LabelDist d = RandomDist(rng);
      preds.push_back({s, ArgMaxLabel(d), d, MatchCategory::kNoneMatch});
    }
    auto out = GazetteerFilter(preds, g, q);
    REQUIRE(out.size() == preds.size());
    for (size_t i = 0; i < out.size(); ++i) {
      const auto &p = out[i];
      std::span<const std::string> sub(q.data() + p.span.begin, p.span.end - p.span.begin);
      MatchCategory m = g.LookupTokens(sub);
      REQUIRE(p.match == m);
      if (m != MatchCategory::kNoneMatch) {
        REQUIRE(p.label != EntityLabel::kNone);
        if (m == MatchCategory::kCell) REQUIRE(p.label == EntityLabel::kLiteralValue);
        else REQUIRE(IsColumnLabel(p.label));
      } else if (preds[i].label == EntityLabel::kNone) {
        REQUIRE(p.label == EntityLabel::kNone);
      } else {
        CHECK((p.label == preds[i].label || p.label == EntityLabel::kNone));
      }
    }
  }
}

TEST_CASE("zero model scores uniform distributions") {
  NerModel m(NerConfig{});
  TableData t = PlayerTable();
  std::vector<std::string> q = {"who", "scored", "most", "points"};
  auto preds = m.ScoreSpans(q, t);
  CHECK(preds.size() == EnumerateSpans(4, 8).size());
  for (const auto &p : preds) {
    double sum = 0;
    for (double x : p.probs) {
      CHECK(x == doctest::Approx(1.0 / kNumEntityLabels).epsilon(1e-12));
      sum += x;
    }
    CHECK(std::abs(sum - 1) <= 1e-6);
    CHECK(p.label == EntityLabel::kSelectColumn);  // tie-break to the lowest index
  }
  std::mt19937_64 rng(1);
  NerModel r = NerModel::Initialized(NerConfig{}, rng);
  FillNormal(std::span<double>(r.params()).subspan(r.w_offset()), 1.0, rng);
  for (const auto &p : r.ScoreSpans(q, t)) {
    double sum = 0;
    for (double x : p.probs) {
      CHECK(x >= 0);
      sum += x;
    }
    CHECK(std::abs(sum - 1) <= 1e-6);
  }
}

TEST_CASE("NER analytic gradient matches finite differences") {
  std::mt19937_64 rng(2);
  NerModel m = NerModel::Initialized(TinyConfig(), rng);
  FillNormal(std::span<double>(m.params()).subspan(m.w_offset()), 0.5, rng);
  TableData t = PlayerTable();
  std::vector<std::string> q = {"points", "of", "lebron", "james"};
  std::vector<TypedSpan> gold = {{0, 1, EntityLabel::kSelectColumn, "c3_number"},
                                 {2, 4, EntityLabel::kLiteralValue, "LeBron James"}};
  NerInstance inst = m.Featurize(q, t, gold);
  std::vector<double> grad(m.params().size(), 0.0);
  m.LossAndGradient(inst, &grad);
  auto idx = testing::GradientSupport(grad, grad.size());
  for (size_t i = m.w_offset(); i < m.params().size(); ++i) idx.push_back(i);  // all of W and b
  auto r = testing::CheckGradient(m.params(), grad, idx, [&] { return m.LossAndGradient(inst, nullptr); });
  CHECK(r.checked > 100);
  CHECK(r.max_rel_error <= testing::kGradRelTol);
}

TEST_CASE("NER overfits one record with decaying full-batch GD") {
  std::mt19937_64 rng(3);
  NerModel m = NerModel::Initialized(NerConfig{}, rng);
  TableData t = PlayerTable();
  DatasetRecord rec = Record({"what", "team", "is", "kevin", "durant", "on", "?"});
  NerExample ex{&rec, &t, {{1, 2, EntityLabel::kSelectColumn, "c2"}, {3, 5, EntityLabel::kLiteralValue, "Kevin Durant"}}};
  NerTrainConfig tc;
  tc.full_batch_gd = true;
  tc.lr = 0.5;
  tc.lr_decay = 0.01;
  tc.epochs = 400;
  std::vector<NerExample> train = {ex};
  auto report = TrainNer(m, train, {}, tc);
  for (size_t i = 1; i < report.loss_curve.size(); ++i) REQUIRE(report.loss_curve[i] < report.loss_curve[i - 1]);
  CHECK(report.loss_curve.back() < 0.01);
  auto preds = PredictEntities(m, rec.query_tokens, t);
  REQUIRE(preds.size() == 2);
  CHECK(preds[0].span == TokenRange{1, 2});
  CHECK(preds[0].label == EntityLabel::kSelectColumn);
  CHECK(preds[1].label == EntityLabel::kLiteralValue);
}

TEST_CASE("NER loss is invariant to span enumeration order") {
  std::mt19937_64 rng(4);
  NerModel a = NerModel::Initialized(TinyConfig(), rng);
  NerModel b = a;
  TableData t = PlayerTable();
  std::vector<std::string> q = {"team", "of", "stephen", "curry"};
  NerInstance ia = a.Featurize(q, t, std::vector<TypedSpan>{{2, 4, EntityLabel::kLiteralValue, "Stephen Curry"}});
  NerInstance ib = ia;
  auto perm = ShuffledIndices(ia.spans.size(), rng);
  for (size_t i = 0; i < perm.size(); ++i) {
    ib.spans[i] = ia.spans[perm[i]];
    ib.gold[i] = ia.gold[perm[i]];
  }
  for (int step = 0; step < 50; ++step) {
    std::vector<double> ga(a.params().size(), 0.0), gb(b.params().size(), 0.0);
    a.LossAndGradient(ia, &ga);
    b.LossAndGradient(ib, &gb);
    GradientStep(a.params(), ga, 0.05);
    GradientStep(b.params(), gb, 0.05);
  }
  CHECK(std::abs(a.LossAndGradient(ia, nullptr) - b.LossAndGradient(ib, nullptr)) <= 1e-6);
}

TEST_CASE("NER artifact round trip and training errors") {
  std::mt19937_64 rng(6);
  NerConfig c = TinyConfig();
  c.ablation.use_cells = false;
  NerModel m = NerModel::Initialized(c, rng);
  NerModel back = NerModel::FromJson(json::parse(m.ToJson().dump()));
  CHECK(back.params() == m.params());
  CHECK_FALSE(back.config().ablation.use_cells);
  json bad = m.ToJson();
  bad["params"].erase(0);
  CHECK_THROWS_AS(NerModel::FromJson(bad), Error);
  CHECK_THROWS_AS(TrainNer(m, {}, {}, NerTrainConfig{}), EmptyTrainingSet);
}

TEST_CASE("span F1 and supervision bookkeeping") {
  std::map<TokenRange, EntityLabel> gold = {{{0, 1}, EntityLabel::kSelectColumn}, {{2, 4}, EntityLabel::kLiteralValue}};
  std::vector<SpanPrediction> pred = {{{0, 1}, EntityLabel::kSelectColumn, {}, MatchCategory::kNoneMatch},
                                      {{2, 4}, EntityLabel::kWhereColumn, {}, MatchCategory::kNoneMatch},
                                      {{5, 6}, EntityLabel::kNone, {}, MatchCategory::kNoneMatch}};
  SpanF1 f = CompareSpans(gold, pred);
  CHECK(f.tp == 1);
  CHECK(f.fp == 1);
  CHECK(f.fn == 1);
  CHECK(f.f1() == doctest::Approx(0.5));

  std::vector<TypedSpan> spans = {{0, 1, EntityLabel::kGroupByColumn, "c1"},
                                  {0, 1, EntityLabel::kSelectColumn, "c1"},
                                  {1, 11, EntityLabel::kLiteralValue, std::nullopt}};
  NerSupervisionStats stats;
  auto resolved = ResolveGoldSpans(spans, 8, &stats);
  CHECK(resolved.size() == 1);
  CHECK(resolved.at({0, 1}) == EntityLabel::kSelectColumn);
  CHECK(stats.gold_spans == 3);
  CHECK(stats.unreachable == 1);
  CHECK(stats.label_conflicts == 1);
}
