#include "t2sql/pipeline.h"

#include <atomic>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "t2sql/errors.h"
#include "t2sql/sql_exec.h"
#include "t2sql/sql_parser.h"
#include "t2sql/text.h"

namespace t2sql {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T ParseNumber(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error("config " + std::string(key) + ": not a number: " + std::string(value));
  }
  return out;
}

bool ParseBool(std::string_view key, std::string_view value) {
  std::string v = ToLower(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("config " + std::string(key) + ": not a boolean: " + std::string(value));
}

HarnessMode ParseMode(std::string_view value) {
  auto m = HarnessModeFromName(value);
  if (!m) throw Error("config mode: unknown harness mode " + std::string(value));
  return *m;
}

using Setter = std::function<void(PipelineConfig &, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>> &Setters() {
  using C = PipelineConfig;
  using K = std::string_view;
  static const std::map<std::string, Setter, std::less<>> kSetters = {
      {"data_dir", [](C &c, K, K v) { c.data_dir = std::string(v); }},
      {"table_dir", [](C &c, K, K v) { c.table_dir = std::string(v); }},
      {"grammar", [](C &c, K, K v) { c.grammar_path = std::string(v); }},
      {"ner_model", [](C &c, K, K v) { c.ner_path = std::string(v); }},
      {"nel_model", [](C &c, K, K v) { c.nel_path = std::string(v); }},
      {"nsp_model", [](C &c, K, K v) { c.nsp_path = std::string(v); }},
      {"train_split", [](C &c, K, K v) { c.train_split = std::string(v); }},
      {"eval_split", [](C &c, K, K v) { c.eval_split = std::string(v); }},
      {"mode", [](C &c, K, K v) { c.mode = ParseMode(v); }},
      {"beam_size", [](C &c, K k, K v) { c.beam_size = ParseNumber<size_t>(k, v); }},
      {"max_steps", [](C &c, K k, K v) { c.max_steps = ParseNumber<size_t>(k, v); }},
      {"seed", [](C &c, K k, K v) { c.seed = ParseNumber<uint64_t>(k, v); }},
      {"threads", [](C &c, K k, K v) { c.threads = ParseNumber<size_t>(k, v); }},
      {"ner.use_schema", [](C &c, K k, K v) { c.ner.ablation.use_schema = ParseBool(k, v); }},
      {"ner.use_cells", [](C &c, K k, K v) { c.ner.ablation.use_cells = ParseBool(k, v); }},
      {"ner.gazetteer_filter", [](C &c, K k, K v) { c.ner.ablation.gazetteer_filter = ParseBool(k, v); }},
      {"ner.dim", [](C &c, K k, K v) { c.ner.dim = ParseNumber<size_t>(k, v); }},
      {"ner.max_span_len", [](C &c, K k, K v) { c.ner.max_span_len = ParseNumber<size_t>(k, v); }},
      {"ner.hash_dim", [](C &c, K k, K v) { c.ner.hash_dim = ParseNumber<size_t>(k, v); }},
      {"ner.epochs", [](C &c, K k, K v) { c.ner_train.epochs = ParseNumber<size_t>(k, v); }},
      {"ner.batch_size", [](C &c, K k, K v) { c.ner_train.batch_size = ParseNumber<size_t>(k, v); }},
      {"ner.lr", [](C &c, K k, K v) { c.ner_train.lr = ParseNumber<double>(k, v); }},
      {"nel.epochs", [](C &c, K k, K v) { c.nel_train.epochs = ParseNumber<size_t>(k, v); }},
      {"nel.batch_size", [](C &c, K k, K v) { c.nel_train.batch_size = ParseNumber<size_t>(k, v); }},
      {"nel.lr", [](C &c, K k, K v) { c.nel_train.lr = ParseNumber<double>(k, v); }},
      {"nsp.epochs", [](C &c, K k, K v) { c.nsp_train.epochs = ParseNumber<size_t>(k, v); }},
      {"nsp.batch_size", [](C &c, K k, K v) { c.nsp_train.batch_size = ParseNumber<size_t>(k, v); }},
      {"nsp.lr", [](C &c, K k, K v) { c.nsp_train.lr = ParseNumber<double>(k, v); }},
      {"nsp.feature_dropout", [](C &c, K k, K v) { c.nsp_train.feature_dropout = ParseNumber<double>(k, v); }},
  };
  return kSetters;
}

std::string Trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string ReadFile(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw MissingFile(path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const fs::path &path, const std::string &content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << content;
  if (!out) throw Error("cannot write " + path.string());
}

json SpanJson(const SpanPrediction &p) {
  return json{{"start", p.span.begin},
              {"end", p.span.end},
              {"label", LabelName(p.label)},
              {"prob", p.probs[static_cast<size_t>(LabelIndex(p.label))]},
              {"match", MatchCategoryName(p.match)}};
}

// Runs `fn(i)` for i in [0, n) on a small pool; results go to indexed slots
// so the outcome does not depend on scheduling.
void ParallelFor(size_t n, size_t threads, const std::function<void(size_t)> &fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto &th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double Ratio(size_t a, size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

}  // namespace

void PipelineConfig::Set(std::string_view key, std::string_view value) {
  auto it = Setters().find(key);
  if (it == Setters().end()) throw Error("unknown config key: " + std::string(key));
  it->second(*this, key, Trim(value));
}

PipelineConfig PipelineConfig::Load(const fs::path &path) {
  PipelineConfig c;
  std::istringstream in(ReadFile(path));
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = Trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    c.Set(Trim(body.substr(0, eq)), Trim(body.substr(eq + 1)));
  }
  return c;
}

std::vector<std::string> PipelineConfig::Keys() {
  std::vector<std::string> out;
  for (const auto &[k, f] : Setters()) out.push_back(k);
  return out;
}

fs::path PipelineConfig::Tables() const { return table_dir.empty() ? data_dir / "tables" : table_dir; }

json PipelineConfig::ToJson() const {
  return json{{"data_dir", data_dir.string()},
              {"table_dir", Tables().string()},
              {"grammar", grammar_path.string()},
              {"ner_model", ner_path.string()},
              {"nel_model", nel_path.string()},
              {"nsp_model", nsp_path.string()},
              {"train_split", train_split},
              {"eval_split", eval_split},
              {"mode", HarnessModeName(mode)},
              {"beam_size", beam_size},
              {"max_steps", max_steps},
              {"seed", seed},
              {"ner", NerConfigToJson(ner)},
              {"ner.epochs", ner_train.epochs},
              {"ner.lr", ner_train.lr},
              {"nel.epochs", nel_train.epochs},
              {"nel.lr", nel_train.lr},
              {"nsp.epochs", nsp_train.epochs},
              {"nsp.lr", nsp_train.lr},
              {"nsp.feature_dropout", nsp_train.feature_dropout}};
}

std::vector<PreparedRecord> PrepareRecords(std::span<const DatasetRecord> records, TableStore &store) {
  std::vector<PreparedRecord> out;
  out.reserve(records.size());
  for (const auto &r : records) {
    PreparedRecord p;
    p.record = &r;
    p.table = &store.Get(r.table_id);
    try {
      p.gold = ParseSql(r.gold_sql_tokens);
      p.spans = DeriveAnnotations(r, *p.table, *p.gold).spans;
    } catch (const SyntaxError &e) {
      p.gold.reset();
      p.gold_error = e.what();
    } catch (const UnsupportedConstruct &e) {
      p.gold.reset();
      p.gold_error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<NerExample> NerExamples(std::span<const PreparedRecord> data) {
  std::vector<NerExample> out;
  for (const auto &p : data) {
    if (p.gold) out.push_back({p.record, p.table, p.spans});
  }
  return out;
}

std::vector<NelExample> NelExamples(std::span<const PreparedRecord> data) {
  std::vector<NelExample> out;
  for (const auto &p : data) {
    for (const auto &s : p.spans) {
      if (!s.link_target) continue;
      if (IsColumnLabel(s.label) || s.label == EntityLabel::kLiteralValue) out.push_back({p.record, p.table, s});
    }
  }
  return out;
}

ExactMatchStat ExactMatchMentions(std::span<const PreparedRecord> data) {
  ExactMatchStat st;
  for (const auto &ex : NelExamples(data)) {
    ++st.mentions;
    st.exact += IsExactMatchMention(ex);
  }
  return st;
}

Artifacts LoadArtifacts(const PipelineConfig &config) {
  auto stage = [](const char *name, auto &&fn) {
    try {
      return fn();
    } catch (const std::exception &e) {
      throw Error(std::string(name) + ": " + e.what());
    }
  };
  Grammar g = stage("grammar", [&] { return Grammar::FromText(ReadFile(config.grammar_path)); });
  NerModel ner = stage("ner", [&] { return NerModel::FromJson(json::parse(ReadFile(config.ner_path))); });
  LinkerModel nel = stage("nel", [&] { return LinkerModel::FromJson(json::parse(ReadFile(config.nel_path))); });
  LogLinearScorer nsp =
      stage("nsp", [&] { return LogLinearScorer::FromJson(json::parse(ReadFile(config.nsp_path)), g); });
  // Ablation flags from the config override what the NER artifact carries.
  ner.mutable_config().ablation.gazetteer_filter = config.ner.ablation.gazetteer_filter;
  return {std::move(g), std::move(ner), std::move(nel), std::move(nsp)};
}

void SaveArtifacts(const Artifacts &a, const PipelineConfig &config) {
  WriteFile(config.grammar_path, a.grammar.ToText());
  WriteFile(config.ner_path, a.ner.ToJson().dump() + "\n");
  WriteFile(config.nel_path, a.nel.ToJson().dump() + "\n");
  WriteFile(config.nsp_path, a.nsp.ToJson().dump() + "\n");
}

Grammar InduceFromRecords(std::span<const PreparedRecord> train) {
  std::vector<SqlTree> trees;
  for (const auto &p : train) {
    if (p.gold) trees.push_back(*p.gold);
  }
  return InduceGrammar(trees);
}

StageSeeds DeriveSeeds(uint64_t seed) {
  std::mt19937_64 rng(seed);
  StageSeeds s;
  s.ner_init = rng();
  s.ner = rng();
  s.nel = rng();
  s.nsp = rng();
  return s;
}

NerModel TrainNerStage(const PipelineConfig &config, std::span<const PreparedRecord> train,
                       std::span<const PreparedRecord> dev, NerTrainReport *report) {
  StageSeeds seeds = DeriveSeeds(config.seed);
  std::mt19937_64 init(seeds.ner_init);
  NerModel model = NerModel::Initialized(config.ner, init);
  NerTrainConfig tc = config.ner_train;
  tc.seed = seeds.ner;
  auto tr = NerExamples(train);
  auto dv = NerExamples(dev);
  NerTrainReport r = TrainNer(model, tr, dv, tc);
  if (report) *report = std::move(r);
  return model;
}

LinkerModel TrainNelStage(const PipelineConfig &config, std::span<const PreparedRecord> train,
                          std::span<const PreparedRecord> dev, NelTrainReport *report) {
  LinkerModel model;
  NelTrainConfig tc = config.nel_train;
  tc.seed = DeriveSeeds(config.seed).nel;
  auto tr = NelExamples(train);
  auto dv = NelExamples(dev);
  NelTrainReport r = TrainNel(model, tr, dv, tc);
  if (report) *report = std::move(r);
  return model;
}

LogLinearScorer TrainNspStage(const PipelineConfig &config, const Grammar &grammar,
                              std::span<const PreparedRecord> train, NspTrainReport *report) {
  std::vector<NspExample> data;
  for (const auto &p : train) {
    if (p.gold) data.push_back({p.record, p.table, GoldParserInputs(*p.table, p.spans), *p.gold});
  }
  LogLinearScorer scorer(grammar);
  NspTrainConfig tc = config.nsp_train;
  tc.mode = config.mode;
  tc.max_steps = config.max_steps;
  tc.seed = DeriveSeeds(config.seed).nsp;
  NspTrainReport r = TrainNsp(scorer, grammar, data, tc);
  if (report) *report = std::move(r);
  return scorer;
}

Artifacts TrainAll(const PipelineConfig &config, std::span<const PreparedRecord> train,
                   std::span<const PreparedRecord> dev, TrainReports *reports) {
  TrainReports local;
  TrainReports &r = reports ? *reports : local;
  Grammar g = InduceFromRecords(train);
  NerModel ner = TrainNerStage(config, train, dev, &r.ner);
  LinkerModel nel = TrainNelStage(config, train, dev, &r.nel);
  LogLinearScorer nsp = TrainNspStage(config, g, train, &r.nsp);
  return {std::move(g), std::move(ner), std::move(nel), std::move(nsp)};
}

Prediction RunPipeline(const Artifacts &a, const PipelineConfig &config, const DatasetRecord &record,
                       const TableData &table, const std::vector<TypedSpan> *gold_spans) {
  Prediction pred;
  json &trace = pred.trace;
  trace["record_id"] = record.record_id;
  trace["mode"] = HarnessModeName(config.mode);
  json flags = json::array();
  auto fail = [&](const char *stage, const std::exception &e) {
    pred.error_stage = stage;
    pred.error = e.what();
    trace["error"] = {{"stage", stage}, {"message", e.what()}};
    trace["flags"] = flags;
    return pred;
  };

  std::vector<SpanPrediction> spans;
  try {
    spans = PredictEntities(a.ner, record.query_tokens, table);
  } catch (const std::exception &e) {
    return fail("ner", e);
  }
  json ner = json::array();
  for (const auto &s : spans) ner.push_back(SpanJson(s));
  trace["ner"] = ner;
  if (spans.empty()) flags.push_back("ner_empty");

  std::vector<std::optional<LinkResult>> links(spans.size());
  json nel = json::array();
  try {
    for (size_t i = 0; i < spans.size(); ++i) {
      const auto &s = spans[i];
      if (!IsColumnLabel(s.label) && s.label != EntityLabel::kLiteralValue) continue;
      TypedSpan mention{s.span.begin, s.span.end, s.label, std::nullopt};
      try {
        links[i] = Link(mention, record.query_tokens, table, a.nel);
      } catch (const EmptyTable &) {
        continue;
      }
      if (links[i]->ranked.empty()) continue;
      nel.push_back({{"start", s.span.begin},
                     {"end", s.span.end},
                     {"target", links[i]->chosen().candidate_id},
                     {"score", links[i]->ranked.front().second},
                     {"candidates", links[i]->ranked.size()}});
    }
  } catch (const std::exception &e) {
    return fail("nel", e);
  }
  trace["nel"] = nel;

  ParserInputs inputs = PredictedParserInputs(table, spans, links);
  if (config.mode == HarnessMode::kOracleFeature) {
    if (!gold_spans) return fail("features", Error("oracle mode needs gold annotations"));
    inputs.features = GoldColumnTypeFeatures(table, *gold_spans);
  }
  json features = json::object();
  for (const auto &[id, role] : inputs.features) {
    if (role != EntityLabel::kNone) features[id] = LabelName(role);
  }
  trace["features"] = features;
  if (inputs.literals.empty()) flags.push_back("no_literals");

  try {
    EncoderOutput enc = Encode(record, table, inputs, config.mode, false);
    DecodeContext ctx(a.grammar, enc, config.max_steps);
    auto beam = DecodeBeam(ctx, a.nsp, config.beam_size);
    Hypothesis &top = beam.front();
    pred.tree = top.tree;
    pred.actions = top.actions;
    pred.log_prob = top.log_prob;
  } catch (const std::exception &e) {
    return fail("nsp", e);
  }
  json actions = json::array();
  for (const auto &act : pred.actions) actions.push_back(act.ToString(a.grammar));
  trace["actions"] = actions;
  trace["sql"] = SerializeText(*pred.tree);
  trace["log_prob"] = pred.log_prob;
  trace["flags"] = flags;
  return pred;
}

json EvalReport::ToJson(bool with_verdicts) const {
  json j{{"name", name},
         {"records", records},
         {"acc_lf", acc_lf},
         {"acc_exe", acc_exe},
         {"engine_coverage", engine_coverage},
         {"unsupported_gold", unsupported_gold},
         {"nested", {{"records", nested_records}, {"acc_lf", nested_acc_lf}, {"acc_exe", nested_acc_exe}}},
         {"ner", {{"precision", ner.precision()}, {"recall", ner.recall()}, {"f1", ner.f1()},
                  {"tp", ner.tp}, {"fp", ner.fp}, {"fn", ner.fn}}},
         {"nel", {{"mentions", nel.mentions}, {"top1", nel.top1()}, {"unlinkable", nel.unlinkable}}},
         {"exact_match_mentions", {{"mentions", exact_match.mentions}, {"exact", exact_match.exact},
                                   {"fraction", exact_match.fraction()}}},
         {"grammar_coverage", grammar_coverage},
         {"containment_excluded", containment_excluded}};
  if (with_verdicts) {
    json v = json::array();
    for (const auto &r : verdicts) {
      v.push_back({{"id", r.record_id},
                   {"gold", r.gold_sql},
                   {"predicted", r.predicted_sql ? json(*r.predicted_sql) : json(nullptr)},
                   {"lf", r.lf_match},
                   {"exe", r.exe_match},
                   {"gold_consistent", r.gold_consistent},
                   {"nested", r.nested},
                   {"trace", r.trace}});
    }
    j["verdicts"] = v;
  }
  return j;
}

EvalReport ScorePredictions(std::span<const PreparedRecord> data, std::span<const Prediction> predictions,
                            std::string name) {
  if (predictions.size() != data.size()) throw Error("one prediction per record expected");
  EvalReport rep;
  rep.name = std::move(name);
  rep.records = data.size();
  rep.verdicts.resize(data.size());
  size_t lf = 0, exe = 0, consistent = 0, nested_lf = 0, nested_exe = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const PreparedRecord &p = data[i];
    const Prediction &pred = predictions[i];
    RecordVerdict &v = rep.verdicts[i];
    v.record_id = p.record->record_id;
    v.trace = pred.trace;
    if (p.gold) {
      v.gold_sql = SerializeText(*p.gold);
      v.nested = ContainsSubquery(*p.gold);
      try {
        v.gold_consistent = DenotationEqual(Execute(*p.gold, *p.table), p.record->gold_answer);
      } catch (const Error &) {
        v.gold_consistent = false;
      }
    } else {
      ++rep.unsupported_gold;
      std::vector<std::string> raw;
      for (const auto &t : p.record->gold_sql_tokens) raw.push_back(t.text);
      v.gold_sql = Join(raw, " ");
    }
    if (pred.tree) {
      v.predicted_sql = SerializeText(*pred.tree);
      v.lf_match = p.gold && *v.predicted_sql == v.gold_sql;
      try {
        v.exe_match = DenotationEqual(Execute(*pred.tree, *p.table), p.record->gold_answer);
      } catch (const Error &) {
        v.exe_match = false;
      }
    }
    if (v.lf_match && !v.gold_consistent) ++rep.containment_excluded;
    if (v.lf_match && v.gold_consistent && !v.exe_match) {
      throw Error("metric containment violated on record " + v.record_id);
    }
    lf += v.lf_match;
    exe += v.exe_match;
    consistent += v.gold_consistent;
    if (v.nested) {
      ++rep.nested_records;
      nested_lf += v.lf_match;
      nested_exe += v.exe_match;
    }
  }
  rep.acc_lf = Ratio(lf, data.size());
  rep.acc_exe = Ratio(exe, data.size());
  rep.engine_coverage = Ratio(consistent, data.size());
  rep.nested_acc_lf = Ratio(nested_lf, rep.nested_records);
  rep.nested_acc_exe = Ratio(nested_exe, rep.nested_records);
  return rep;
}

EvalReport Evaluate(const Artifacts &a, const PipelineConfig &config, std::span<const PreparedRecord> data,
                    std::string name) {
  std::vector<Prediction> preds(data.size());
  ParallelFor(data.size(), config.threads, [&](size_t i) {
    const PreparedRecord &p = data[i];
    preds[i] = RunPipeline(a, config, *p.record, *p.table, p.gold ? &p.spans : nullptr);
  });
  EvalReport rep = ScorePredictions(data, preds, std::move(name));
  std::vector<SqlTree> golds;
  for (const auto &p : data) {
    if (p.gold) golds.push_back(*p.gold);
  }

  rep.ner = EvaluateNer(a.ner, NerExamples(data));
  rep.nel = EvaluateLinker(a.nel, NelExamples(data));
  rep.exact_match = ExactMatchMentions(data);
  size_t covered = 0;
  for (const auto &t : golds) {
    try {
      OracleActions(t, a.grammar);
      ++covered;
    } catch (const RuleNotInGrammar &) {
    }
  }
  rep.grammar_coverage = Ratio(covered, golds.size());
  return rep;
}

std::string FormatReports(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << std::left << std::setw(28) << "run" << std::right << std::setw(8) << "n" << std::setw(9) << "ACC_LF"
      << std::setw(9) << "ACC_EXE" << std::setw(9) << "nest_LF" << std::setw(9) << "nest_EX" << std::setw(8)
      << "NER_F1" << std::setw(8) << "NEL@1" << std::setw(8) << "gram" << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto &r : reports) {
    out << std::left << std::setw(28) << r.name << std::right << std::setw(8) << r.records << std::setw(9) << r.acc_lf
        << std::setw(9) << r.acc_exe << std::setw(9) << r.nested_acc_lf << std::setw(9) << r.nested_acc_exe
        << std::setw(8) << r.ner.f1() << std::setw(8) << r.nel.top1() << std::setw(8) << r.grammar_coverage << "\n";
  }
  return out.str();
}

std::vector<EvalReport> RunExperimentGrid(const PipelineConfig &config, std::span<const PreparedRecord> train,
                                          std::span<const PreparedRecord> dev, const GridOptions &options) {
  std::vector<EvalReport> out;
  Grammar g = InduceFromRecords(train);
  NerModel ner = TrainNerStage(config, train, dev);
  LinkerModel nel = TrainNelStage(config, train, dev);

  std::map<HarnessMode, LogLinearScorer> parsers;
  auto parser_for = [&](HarnessMode m) -> const LogLinearScorer & {
    auto it = parsers.find(m);
    if (it != parsers.end()) return it->second;
    PipelineConfig c = config;
    c.mode = m;
    return parsers.emplace(m, TrainNspStage(c, g, train)).first->second;
  };
  // The oracle row reuses the parser trained with role features.
  auto trained_mode = [](HarnessMode m) {
    return m == HarnessMode::kOracleFeature ? HarnessMode::kColumnTypeFeature : m;
  };

  for (HarnessMode m : options.modes) {
    PipelineConfig c = config;
    c.mode = m;
    Artifacts a{g, ner, nel, parser_for(trained_mode(m))};
    out.push_back(Evaluate(a, c, dev, "mode=" + std::string(HarnessModeName(m))));
  }
  if (options.ner_ablations) {
    struct Row {
      const char *name;
      NerAblation ablation;
    };
    const Row rows[] = {{"ner=no_schema", {false, true, true}},
                        {"ner=no_cells", {true, false, true}},
                        {"ner=no_filter", {true, true, false}}};
    PipelineConfig c = config;
    c.mode = HarnessMode::kColumnTypeFeature;
    const LogLinearScorer &nsp = parser_for(c.mode);
    for (const auto &row : rows) {
      PipelineConfig rc = c;
      rc.ner.ablation = row.ablation;
      NerModel variant = ner;
      if (!row.ablation.use_schema || !row.ablation.use_cells) {
        variant = TrainNerStage(rc, train, dev);
      } else {
        variant.mutable_config().ablation = row.ablation;
      }
      Artifacts a{g, variant, nel, nsp};
      out.push_back(Evaluate(a, rc, dev, row.name));
    }
  }
  return out;
}

}  // namespace t2sql
