// Command-line front end for the text-to-SQL pipeline.
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "t2sql/errors.h"
#include "t2sql/pipeline.h"
#include "t2sql/sql_parser.h"
#include "t2sql/synthetic_corpus.h"
#include "t2sql/text.h"

using namespace t2sql;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  std::string data_dir;
  std::string mode;
  std::optional<uint64_t> seed;
  bool no_cell = false, no_schema = false, no_gazetteer = false;
};

PipelineConfig BuildConfig(const Globals &g) {
  PipelineConfig c = g.config_file.empty() ? PipelineConfig{} : PipelineConfig::Load(g.config_file);
  for (const auto &kv : g.sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got " + kv);
    c.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!g.data_dir.empty()) c.data_dir = g.data_dir;
  if (!g.mode.empty()) c.Set("mode", g.mode);
  if (g.seed) c.seed = *g.seed;
  if (g.no_cell) c.ner.ablation.use_cells = false;
  if (g.no_schema) c.ner.ablation.use_schema = false;
  if (g.no_gazetteer) c.ner.ablation.gazetteer_filter = false;
  if (c.data_dir.empty()) throw Error("no data directory (use --data or data_dir in the config)");
  return c;
}

void WriteJson(const std::string &path, const json &j) {
  if (path.empty()) return;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("cannot write " + path);
}

// Loaded split plus its tables; records must stay put while prepared views
// point into them.
struct LoadedSplit {
  std::vector<DatasetRecord> records;
  std::vector<PreparedRecord> prepared;
};

void LoadSplit(const PipelineConfig &c, TableStore &store, const std::string &name, LoadedSplit &out) {
  out.records = LoadDataset(c.data_dir, name);
  out.prepared = PrepareRecords(out.records, store);
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

int CmdIngest(const PipelineConfig &c, const std::vector<std::string> &splits, const std::string &json_out) {
  auto start = std::chrono::steady_clock::now();
  TableStore store(c.Tables());
  json report = json::object();
  std::cout << "split      records  supported  unsupported  nested  exact_mentions\n";
  for (const auto &name : splits) {
    if (!fs::exists(c.data_dir / (name + ".jsonl"))) continue;
    LoadedSplit s;
    LoadSplit(c, store, name, s);
    size_t supported = 0, nested = 0;
    std::map<std::string, size_t> reasons;
    for (const auto &p : s.prepared) {
      if (p.gold) {
        ++supported;
        nested += ContainsSubquery(*p.gold);
      } else {
        reasons[p.gold_error.substr(0, p.gold_error.find(':'))]++;
      }
    }
    ExactMatchStat exact = ExactMatchMentions(s.prepared);
    std::printf("%-9s %8zu %10zu %12zu %7zu  %zu/%zu (%.4f)\n", name.c_str(), s.records.size(), supported,
                s.records.size() - supported, nested, exact.exact, exact.mentions, exact.fraction());
    report[name] = {{"records", s.records.size()},
                    {"supported", supported},
                    {"unsupported", s.records.size() - supported},
                    {"unsupported_reasons", reasons},
                    {"nested", nested},
                    {"exact_match_mentions", {{"mentions", exact.mentions}, {"exact", exact.exact},
                                              {"fraction", exact.fraction()}}}};
  }
  report["seconds"] = Seconds(start);
  WriteJson(json_out, report);
  return 0;
}

int CmdDerive(const PipelineConfig &c, const std::string &split, const std::string &out_path) {
  TableStore store(c.Tables());
  auto records = LoadDataset(c.data_dir, split);
  std::ofstream out(out_path);
  size_t spans = 0, unalignable = 0, unsupported = 0;
  for (const auto &r : records) {
    json line{{"id", r.record_id}};
    try {
      SqlTree gold = ParseSql(r.gold_sql_tokens);
      AnnotationResult ann = DeriveAnnotations(r, store.Get(r.table_id), gold);
      json js = json::array();
      for (const auto &s : ann.spans) js.push_back(SpanToJson(s));
      json ju = json::array();
      for (const auto &u : ann.unalignable) {
        ju.push_back({{"sql_index", u.sql_index}, {"start", u.query.begin}, {"end", u.query.end},
                      {"reason", u.reason}});
      }
      line["spans"] = js;
      line["unalignable"] = ju;
      spans += ann.spans.size();
      unalignable += ann.unalignable.size();
    } catch (const SyntaxError &e) {
      line["error"] = e.what();
      ++unsupported;
    } catch (const UnsupportedConstruct &e) {
      line["error"] = e.what();
      ++unsupported;
    }
    out << line.dump() << "\n";
  }
  std::cout << records.size() << " records, " << spans << " spans, " << unalignable << " unalignable, "
            << unsupported << " unsupported gold SQL\n";
  return 0;
}

int CmdInduce(const PipelineConfig &c) {
  TableStore store(c.Tables());
  LoadedSplit train;
  LoadSplit(c, store, c.train_split, train);
  Grammar g = InduceFromRecords(train.prepared);
  std::ofstream out(c.grammar_path);
  out << g.ToText();
  if (!out) throw Error("cannot write " + c.grammar_path.string());
  std::cout << g.size() << " rules written to " << c.grammar_path.string() << "\n";
  return 0;
}

void PrintCurve(const char *stage, const std::vector<double> &curve) {
  if (curve.empty()) return;
  std::printf("%s loss: %.4f -> %.4f over %zu epochs\n", stage, curve.front(), curve.back(), curve.size() - 1);
}

int CmdTrain(const PipelineConfig &c, const std::string &stage) {
  TableStore store(c.Tables());
  LoadedSplit train, dev;
  LoadSplit(c, store, c.train_split, train);
  if (fs::exists(c.data_dir / (c.eval_split + ".jsonl"))) LoadSplit(c, store, c.eval_split, dev);
  auto write = [](const fs::path &p, const std::string &s) {
    std::ofstream out(p);
    out << s;
    if (!out) throw Error("cannot write " + p.string());
  };
  if (stage == "ner" || stage == "all") {
    NerTrainReport r;
    NerModel m = TrainNerStage(c, train.prepared, dev.prepared, &r);
    write(c.ner_path, m.ToJson().dump() + "\n");
    PrintCurve("ner", r.loss_curve);
    if (r.dev) std::printf("ner dev F1: %.4f\n", r.dev->f1());
  }
  if (stage == "nel" || stage == "all") {
    NelTrainReport r;
    LinkerModel m = TrainNelStage(c, train.prepared, dev.prepared, &r);
    write(c.nel_path, m.ToJson().dump() + "\n");
    PrintCurve("nel", r.loss_curve);
    if (r.dev_top1) std::printf("nel dev top-1: %.4f\n", *r.dev_top1);
  }
  if (stage == "nsp" || stage == "all") {
    Grammar g;
    if (stage == "all" || !fs::exists(c.grammar_path)) {
      g = InduceFromRecords(train.prepared);
      write(c.grammar_path, g.ToText());
    } else {
      std::ifstream in(c.grammar_path);
      std::stringstream ss;
      ss << in.rdbuf();
      g = Grammar::FromText(ss.str());
    }
    NspTrainReport r;
    LogLinearScorer m = TrainNspStage(c, g, train.prepared, &r);
    write(c.nsp_path, m.ToJson().dump() + "\n");
    PrintCurve("nsp", r.loss_curve);
    std::printf("nsp trained on %zu records, %zu unreachable\n", r.trained, r.unreachable);
  }
  return 0;
}

int CmdPredict(const PipelineConfig &c, const std::string &split, const std::string &out_path, bool with_trace) {
  Artifacts a = LoadArtifacts(c);
  TableStore store(c.Tables());
  LoadedSplit s;
  LoadSplit(c, store, split, s);
  std::ofstream out(out_path);
  for (const auto &p : s.prepared) {
    Prediction pred = RunPipeline(a, c, *p.record, *p.table, p.gold ? &p.spans : nullptr);
    json line{{"id", p.record->record_id},
              {"sql", pred.tree ? json(SerializeText(*pred.tree)) : json(nullptr)},
              {"log_prob", pred.log_prob}};
    json actions = json::array();
    for (const auto &act : pred.actions) actions.push_back(act.ToString(a.grammar));
    line["actions"] = actions;
    if (!pred.error.empty()) line["error"] = {{"stage", pred.error_stage}, {"message", pred.error}};
    if (with_trace) line["trace"] = pred.trace;
    out << line.dump() << "\n";
  }
  std::cout << s.prepared.size() << " predictions written to " << out_path << "\n";
  return 0;
}

int CmdEvaluate(const PipelineConfig &c, const std::string &split, const std::string &json_out) {
  Artifacts a = LoadArtifacts(c);
  TableStore store(c.Tables());
  LoadedSplit s;
  LoadSplit(c, store, split, s);
  std::vector<EvalReport> reports = {Evaluate(a, c, s.prepared, split + ":" + std::string(HarnessModeName(c.mode)))};
  std::cout << FormatReports(reports);
  const EvalReport &r = reports.front();
  std::printf("engine coverage %.4f, unsupported gold %zu, nested records %zu, containment exclusions %zu\n",
              r.engine_coverage, r.unsupported_gold, r.nested_records, r.containment_excluded);
  std::printf("exact-match mentions %zu/%zu (%.4f)\n", r.exact_match.exact, r.exact_match.mentions,
              r.exact_match.fraction());
  WriteJson(json_out, r.ToJson());
  return 0;
}

int CmdGrid(const PipelineConfig &c, const std::string &modes, bool no_ablations, const std::string &json_out) {
  TableStore store(c.Tables());
  LoadedSplit train, dev;
  LoadSplit(c, store, c.train_split, train);
  LoadSplit(c, store, c.eval_split, dev);
  GridOptions opt;
  if (!modes.empty()) {
    opt.modes.clear();
    std::istringstream names(modes);
    for (std::string name; std::getline(names, name, ',');) {
      auto m = HarnessModeFromName(name);
      if (!m) throw Error("unknown harness mode " + name);
      opt.modes.push_back(*m);
    }
  }
  opt.ner_ablations = !no_ablations;
  auto reports = RunExperimentGrid(c, train.prepared, dev.prepared, opt);
  std::cout << FormatReports(reports);
  json j = json::array();
  for (const auto &r : reports) j.push_back(r.ToJson(false));
  WriteJson(json_out, j);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Text-to-SQL pipeline: entity recognition, linking and grammar-based parsing"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override a config key (key=value), repeatable");
  app.add_option("-d,--data", g.data_dir, "dataset directory (overrides data_dir)");
  app.add_option("-m,--mode", g.mode, "harness mode");
  app.add_option("--seed", g.seed, "random seed");
  app.add_flag("--no-cell", g.no_cell, "NER without cell-value gazetteer features");
  app.add_flag("--no-schema", g.no_schema, "NER without schema gazetteer features");
  app.add_flag("--no-gazetteer", g.no_gazetteer, "NER without the gazetteer filter");

  std::vector<std::string> ingest_splits = {"train", "dev", "test"};
  std::string json_out, split = "dev", out_path, modes;
  bool with_trace = false, no_ablations = false;

  auto *ingest = app.add_subcommand("ingest", "load and validate a dataset, report counts");
  ingest->add_option("--splits", ingest_splits, "splits to load");
  ingest->add_option("--json", json_out, "write the report as JSON");

  auto *derive = app.add_subcommand("derive-annotations", "turn alignments into typed spans (JSON lines)");
  derive->add_option("--split", split, "split name");
  derive->add_option("-o,--out", out_path, "output file")->required();

  app.add_subcommand("induce-grammar", "collect production rules from the training split");
  auto *train_ner = app.add_subcommand("train-ner", "train the span NER model");
  auto *train_nel = app.add_subcommand("train-nel", "train the entity linker");
  auto *train_nsp = app.add_subcommand("train-nsp", "train the grammar-based parser");
  auto *train_all = app.add_subcommand("train", "induce the grammar and train all three stages");

  auto *predict = app.add_subcommand("predict", "run the pipeline and write predictions (JSON lines)");
  predict->add_option("--split", split, "split name");
  predict->add_option("-o,--out", out_path, "output file")->required();
  predict->add_flag("--trace", with_trace, "include the per-stage trace");

  auto *evaluate = app.add_subcommand("evaluate", "ACC_LF, ACC_EXE and stage diagnostics");
  evaluate->add_option("--split", split, "split name");
  evaluate->add_option("--json", json_out, "write the full report as JSON");

  auto *grid = app.add_subcommand("grid", "train and evaluate every harness mode and NER ablation");
  grid->add_option("--modes", modes, "comma-separated subset of modes");
  grid->add_flag("--no-ablations", no_ablations, "skip the NER ablation rows");
  grid->add_option("--json", json_out, "write the reports as JSON");

  ToyCorpusConfig toy;
  std::string toy_out;
  auto *make_toy = app.add_subcommand("make-toy-corpus", "write a small generated corpus");
  make_toy->add_option("-o,--out", toy_out, "output directory")->required();
  make_toy->add_option("--tables-per-domain", toy.tables_per_domain);
  make_toy->add_option("--records-per-table", toy.records_per_table);
  make_toy->add_option("--corpus-seed", toy.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_toy->parsed()) {
      ToyCorpus corpus = MakeToyCorpus(toy);
      WriteToyCorpus(corpus, toy_out);
      std::cout << corpus.train.size() << " train, " << corpus.dev.size() << " dev, " << corpus.test.size()
                << " test records over " << corpus.tables.size() << " tables in " << toy_out << "\n";
      return 0;
    }
    PipelineConfig c = BuildConfig(g);
    if (ingest->parsed()) return CmdIngest(c, ingest_splits, json_out);
    if (derive->parsed()) return CmdDerive(c, split, out_path);
    if (app.got_subcommand("induce-grammar")) return CmdInduce(c);
    if (train_ner->parsed()) return CmdTrain(c, "ner");
    if (train_nel->parsed()) return CmdTrain(c, "nel");
    if (train_nsp->parsed()) return CmdTrain(c, "nsp");
    if (train_all->parsed()) return CmdTrain(c, "all");
    if (predict->parsed()) return CmdPredict(c, split, out_path, with_trace);
    if (evaluate->parsed()) return CmdEvaluate(c, split, json_out);
    if (grid->parsed()) return CmdGrid(c, modes, no_ablations, json_out);
  } catch (const SchemaViolation &e) {
    std::cerr << "schema violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
