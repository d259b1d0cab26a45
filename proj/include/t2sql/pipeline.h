#ifndef T2SQL_PIPELINE_H_
#define T2SQL_PIPELINE_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2sql/dataset.h"
#include "t2sql/grammar.h"
#include "t2sql/linker.h"
#include "t2sql/ner.h"
#include "t2sql/structured_parser.h"

namespace t2sql {

// Flat key = value configuration. Every key can also be overridden from the
// command line.
struct PipelineConfig {
  std::filesystem::path data_dir;
  std::filesystem::path table_dir;  // defaults to <data_dir>/tables
  std::filesystem::path grammar_path = "grammar.txt";
  std::filesystem::path ner_path = "ner.json";
  std::filesystem::path nel_path = "nel.json";
  std::filesystem::path nsp_path = "nsp.json";
  std::string train_split = "train";
  std::string eval_split = "dev";
  HarnessMode mode = HarnessMode::kColumnTypeFeature;
  size_t beam_size = 4;
  size_t max_steps = kDefaultMaxSteps;
  uint64_t seed = 1;
  size_t threads = 0;  // 0: hardware concurrency

  NerConfig ner;  // ner.ablation holds the ablation flags
  NerTrainConfig ner_train;
  NelTrainConfig nel_train;
  NspTrainConfig nsp_train;

  // Throws Error for unknown keys or malformed values.
  void Set(std::string_view key, std::string_view value);
  static PipelineConfig Load(const std::filesystem::path &path);
  static std::vector<std::string> Keys();
  std::filesystem::path Tables() const;
  nlohmann::json ToJson() const;
};

// A dataset record with its table, parsed gold tree and derived spans.
struct PreparedRecord {
  const DatasetRecord *record = nullptr;
  const TableData *table = nullptr;
  std::optional<SqlTree> gold;  // empty when the gold SQL is outside the subset
  std::string gold_error;
  std::vector<TypedSpan> spans;
};

// Tables are loaded through `store`, which must outlive the result.
std::vector<PreparedRecord> PrepareRecords(std::span<const DatasetRecord> records, TableStore &store);

// Training examples from records with a parsed gold tree: all derived spans
// for NER, linked column and literal spans for NEL.
std::vector<NerExample> NerExamples(std::span<const PreparedRecord> data);
std::vector<NelExample> NelExamples(std::span<const PreparedRecord> data);

// Linked mentions whose surface equals their gold target after
// normalization.
struct ExactMatchStat {
  size_t mentions = 0;
  size_t exact = 0;
  double fraction() const { return mentions ? static_cast<double>(exact) / static_cast<double>(mentions) : 0.0; }
};
ExactMatchStat ExactMatchMentions(std::span<const PreparedRecord> data);

struct Artifacts {
  Grammar grammar;
  NerModel ner;
  LinkerModel nel;
  LogLinearScorer nsp;
};

// Errors name the failing stage.
Artifacts LoadArtifacts(const PipelineConfig &config);
void SaveArtifacts(const Artifacts &artifacts, const PipelineConfig &config);

Grammar InduceFromRecords(std::span<const PreparedRecord> train);

struct StageSeeds {
  uint64_t ner_init, ner, nel, nsp;
};
// All stage seeds are drawn from one generator seeded with config.seed.
StageSeeds DeriveSeeds(uint64_t seed);

NerModel TrainNerStage(const PipelineConfig &config, std::span<const PreparedRecord> train,
                       std::span<const PreparedRecord> dev, NerTrainReport *report = nullptr);
LinkerModel TrainNelStage(const PipelineConfig &config, std::span<const PreparedRecord> train,
                          std::span<const PreparedRecord> dev, NelTrainReport *report = nullptr);
// Trains for config.mode on gold-derived parser inputs.
LogLinearScorer TrainNspStage(const PipelineConfig &config, const Grammar &grammar,
                              std::span<const PreparedRecord> train, NspTrainReport *report = nullptr);

struct TrainReports {
  NerTrainReport ner;
  NelTrainReport nel;
  NspTrainReport nsp;
};
Artifacts TrainAll(const PipelineConfig &config, std::span<const PreparedRecord> train,
                   std::span<const PreparedRecord> dev, TrainReports *reports = nullptr);

struct Prediction {
  std::optional<SqlTree> tree;  // empty when decoding failed
  std::vector<DecoderAction> actions;
  double log_prob = 0;
  std::string error_stage;
  std::string error;
  nlohmann::json trace;  // every stage's output
};

// NER -> NEL -> column type features -> encoder -> beam top-1. Oracle mode
// takes the column roles from `gold_spans`.
Prediction RunPipeline(const Artifacts &artifacts, const PipelineConfig &config, const DatasetRecord &record,
                       const TableData &table, const std::vector<TypedSpan> *gold_spans = nullptr);

struct RecordVerdict {
  std::string record_id;
  std::string gold_sql;
  std::optional<std::string> predicted_sql;
  bool lf_match = false;
  bool exe_match = false;
  bool gold_consistent = false;  // gold SQL executes to the gold answer
  bool nested = false;
  nlohmann::json trace;
};

struct EvalReport {
  std::string name;
  size_t records = 0;
  double acc_lf = 0;
  double acc_exe = 0;
  double engine_coverage = 0;  // gold SQL reproducing the gold answer
  size_t unsupported_gold = 0;
  size_t nested_records = 0;
  double nested_acc_lf = 0;
  double nested_acc_exe = 0;
  SpanF1 ner;
  LinkEval nel;
  ExactMatchStat exact_match;
  double grammar_coverage = 0;  // gold trees derivable under the grammar
  size_t containment_excluded = 0;  // LF match whose gold does not reproduce its answer
  std::vector<RecordVerdict> verdicts;

  nlohmann::json ToJson(bool with_verdicts = true) const;
};

// Verdicts and headline metrics for given predictions (aligned with
// `data`; traces may be empty). Stage diagnostics are left at zero.
EvalReport ScorePredictions(std::span<const PreparedRecord> data, std::span<const Prediction> predictions,
                            std::string name = "eval");

// Throws Error if an exact match fails to execute to the answer on a record
// whose gold SQL does (ACC_EXE >= ACC_LF by construction otherwise).
EvalReport Evaluate(const Artifacts &artifacts, const PipelineConfig &config,
                    std::span<const PreparedRecord> data, std::string name = "eval");

// Summary table, one report per row.
std::string FormatReports(std::span<const EvalReport> reports);

struct GridOptions {
  std::vector<HarnessMode> modes{kAllHarnessModes.begin(), kAllHarnessModes.end()};
  bool ner_ablations = true;  // no_schema, no_cells, no_filter rows
};

// Trains NER and NEL once, the parser once per mode, and evaluates every
// row on `dev`. Ablation rows run in column_type_feature mode.
std::vector<EvalReport> RunExperimentGrid(const PipelineConfig &config, std::span<const PreparedRecord> train,
                                          std::span<const PreparedRecord> dev, const GridOptions &options);

}  // namespace t2sql

#endif  // T2SQL_PIPELINE_H_
