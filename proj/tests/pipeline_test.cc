#include <algorithm>

#include "doctest.h"
#include "support/temp_dir.h"
#include "t2sql/errors.h"
#include "t2sql/pipeline.h"
#include "t2sql/sql_exec.h"
#include "t2sql/sql_parser.h"
#include "t2sql/synthetic_corpus.h"

using namespace t2sql;

namespace {

// 50 training records from the default toy corpus, with at least one
// "select count ( * ) from w".
struct Slice {
  ToyCorpus toy = MakeToyCorpus(ToyCorpusConfig{});
  TableStore store{""};
  std::vector<DatasetRecord> records;
  std::vector<PreparedRecord> prepared;

  Slice() {
    for (const auto &t : toy.tables) store.Put(t);
    auto is_count = [](const DatasetRecord &r) {
      return SerializeText(ParseSql(r.gold_sql_tokens)) == "select count ( * ) from w";
    };
    records.assign(toy.train.begin(), toy.train.begin() + 50);
    if (std::none_of(records.begin(), records.end(), is_count)) {
      records.back() = *std::find_if(toy.train.begin(), toy.train.end(), is_count);
    }
    prepared = PrepareRecords(records, store);
  }
};

PipelineConfig FastConfig() {
  PipelineConfig c;
  c.ner_train.epochs = 40;
  c.nel_train.epochs = 40;
  c.nsp_train.epochs = 60;
  c.nsp_train.feature_dropout = 0;
  c.threads = 2;
  return c;
}

}  // namespace

TEST_CASE("config files, overrides and unknown keys") {
  testing::TempDir dir;
  auto path = dir.Write("run.cfg",
                        "# toy run\n"
                        "data_dir = data/toy\n"
                        "mode = oracle_feature   # trailing comment\n"
                        "\n"
                        "beam_size=8\n"
                        "ner.gazetteer_filter = false\n"
                        "nsp.lr = 0.02\n");
  PipelineConfig c = PipelineConfig::Load(path);
  CHECK(c.data_dir == "data/toy");
  CHECK(c.Tables() == std::filesystem::path("data/toy") / "tables");
  CHECK(c.mode == HarnessMode::kOracleFeature);
  CHECK(c.beam_size == 8);
  CHECK_FALSE(c.ner.ablation.gazetteer_filter);
  CHECK(c.nsp_train.lr == 0.02);
  c.Set("mode", "baseline");
  CHECK(c.mode == HarnessMode::kBaseline);
  CHECK(c.ToJson()["mode"] == "baseline");

  CHECK_THROWS_AS(c.Set("beam", "2"), Error);
  CHECK_THROWS_AS(c.Set("beam_size", "two"), Error);
  CHECK_THROWS_AS(c.Set("mode", "oracle"), Error);
  CHECK_THROWS_AS(c.Set("ner.use_cells", "maybe"), Error);
  CHECK_THROWS_AS(PipelineConfig::Load(dir.Write("bad.cfg", "seed 3\n")), Error);
  CHECK(PipelineConfig::Keys().size() == 29);

  StageSeeds a = DeriveSeeds(5), b = DeriveSeeds(5), other = DeriveSeeds(6);
  CHECK(a.ner == b.ner);
  CHECK(a.nsp == b.nsp);
  CHECK(a.ner != other.ner);
  CHECK(a.ner != a.nel);
}

TEST_CASE("scoring predictions against gold") {
  Slice s;
  std::span<const PreparedRecord> data(s.prepared);
  std::vector<Prediction> preds(data.size());
  for (size_t i = 0; i < data.size(); ++i) preds[i].tree = data[i].gold;
  EvalReport perfect = ScorePredictions(data, preds);
  CHECK(perfect.acc_lf == 1.0);
  CHECK(perfect.acc_exe == 1.0);
  CHECK(perfect.engine_coverage == 1.0);

  // No prediction counts as wrong on both metrics.
  preds[0].tree.reset();
  // A different query with the same answer counts for execution only; toy
  // tables have no empty cells, so count(c) = count(*).
  size_t k = 0;
  while (SerializeText(*data[k].gold) != "select count ( * ) from w") ++k;
  REQUIRE(k > 0);
  preds[k].tree = ParseSql("select count ( " + data[k].table->column_ids[0] + " ) from w");
  EvalReport r = ScorePredictions(data, preds);
  CHECK_FALSE(r.verdicts[0].predicted_sql.has_value());
  CHECK_FALSE(r.verdicts[0].exe_match);
  CHECK_FALSE(r.verdicts[k].lf_match);
  CHECK(r.verdicts[k].exe_match);
  double n = static_cast<double>(data.size());
  CHECK(r.acc_lf == doctest::Approx((n - 2) / n));
  CHECK(r.acc_exe == doctest::Approx((n - 1) / n));

  // A gold answer the gold SQL does not reproduce is excluded, not asserted.
  std::vector<DatasetRecord> broken(s.records.begin(), s.records.begin() + 1);
  broken[0].gold_answer = {"not the answer"};
  auto prepared = PrepareRecords(broken, s.store);
  std::vector<Prediction> one(1);
  one[0].tree = prepared[0].gold;
  EvalReport ex = ScorePredictions(prepared, one);
  CHECK(ex.acc_lf == 1.0);
  CHECK(ex.acc_exe == 0.0);
  CHECK(ex.containment_excluded == 1);
  CHECK_FALSE(ex.verdicts[0].gold_consistent);

  CHECK_THROWS_AS(ScorePredictions(data, std::span<const Prediction>(preds).first(3)), Error);
}

TEST_CASE("end-to-end on a toy slice") {
  Slice s;
  PipelineConfig c = FastConfig();
  Artifacts a = TrainAll(c, s.prepared, {});
  Artifacts again = TrainAll(c, s.prepared, {});
  CHECK(a.grammar.ToText() == again.grammar.ToText());
  CHECK(a.ner.ToJson() == again.ner.ToJson());
  CHECK(a.nel.ToJson() == again.nel.ToJson());
  CHECK(a.nsp.ToJson() == again.nsp.ToJson());

  SUBCASE("count(*) executes to the row count") {
    size_t seen = 0;
    for (const auto &p : s.prepared) {
      if (SerializeText(*p.gold) != "select count ( * ) from w") continue;
      ++seen;
      Prediction pred = RunPipeline(a, c, *p.record, *p.table);
      REQUIRE(pred.tree);
      Denotation d = Execute(*pred.tree, *p.table);
      REQUIRE(d.is_scalar());
      CHECK(d.rows[0][0].number == static_cast<double>(p.table->rows.size()));
    }
    CHECK(seen > 0);
  }

  SUBCASE("traces and reports are reproducible") {
    const PreparedRecord &p = s.prepared[3];
    Prediction x = RunPipeline(a, c, *p.record, *p.table);
    Prediction y = RunPipeline(again, c, *p.record, *p.table);
    CHECK(x.trace.dump() == y.trace.dump());
    for (const char *key : {"ner", "nel", "features", "actions", "sql", "flags"}) CHECK(x.trace.contains(key));

    PipelineConfig serial = c;
    serial.threads = 1;
    PipelineConfig wide = c;
    wide.threads = 4;
    EvalReport r1 = Evaluate(a, serial, s.prepared);
    EvalReport r4 = Evaluate(a, wide, s.prepared);
    CHECK(r1.ToJson().dump() == r4.ToJson().dump());
    CHECK(r1.acc_exe >= r1.acc_lf);
    CHECK(r1.grammar_coverage == 1.0);
    CHECK(r1.acc_lf > 0.5);
    for (const auto &v : r1.verdicts) CHECK(v.trace.contains("ner"));
  }

  SUBCASE("an empty NER stage still decodes") {
    Artifacts silent = a;
    silent.ner.params()[silent.ner.b_offset() + static_cast<size_t>(LabelIndex(EntityLabel::kNone))] = 100;
    silent.ner.mutable_config().ablation.gazetteer_filter = false;
    const PreparedRecord &p = s.prepared[0];
    Prediction pred = RunPipeline(silent, c, *p.record, *p.table);
    REQUIRE(pred.tree);
    CHECK(pred.trace["ner"].empty());
    auto flags = pred.trace["flags"];
    CHECK(std::find(flags.begin(), flags.end(), "ner_empty") != flags.end());
    CHECK(std::find(flags.begin(), flags.end(), "no_literals") != flags.end());
    CHECK(SerializeText(*pred.tree).find('\'') == std::string::npos);
  }

  SUBCASE("oracle mode needs gold annotations") {
    PipelineConfig oc = c;
    oc.mode = HarnessMode::kOracleFeature;
    const PreparedRecord &p = s.prepared[0];
    Prediction pred = RunPipeline(a, oc, *p.record, *p.table);
    CHECK_FALSE(pred.tree);
    CHECK(pred.error_stage == "features");
    CHECK(RunPipeline(a, oc, *p.record, *p.table, &p.spans).tree);
  }

  SUBCASE("artifacts round trip through files") {
    testing::TempDir dir;
    PipelineConfig fc = c;
    fc.grammar_path = dir.path() / "g.txt";
    fc.ner_path = dir.path() / "ner.json";
    fc.nel_path = dir.path() / "nel.json";
    fc.nsp_path = dir.path() / "nsp.json";
    SaveArtifacts(a, fc);
    Artifacts loaded = LoadArtifacts(fc);
    const PreparedRecord &p = s.prepared[5];
    CHECK(RunPipeline(loaded, fc, *p.record, *p.table).trace.dump() ==
          RunPipeline(a, fc, *p.record, *p.table).trace.dump());
    std::filesystem::remove(fc.nsp_path);
    try {
      LoadArtifacts(fc);
      FAIL("expected a load error");
    } catch (const Error &e) {
      CHECK(std::string(e.what()).find("nsp") != std::string::npos);
    }
  }
}

TEST_CASE("a grid with one mode yields one report") {
  Slice s;
  GridOptions opt;
  opt.modes = {HarnessMode::kBaseline};
  opt.ner_ablations = false;
  auto reports = RunExperimentGrid(FastConfig(), s.prepared, s.prepared, opt);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].name == "mode=baseline");
  CHECK(reports[0].records == s.prepared.size());
  CHECK(FormatReports(reports).find("mode=baseline") != std::string::npos);
}
