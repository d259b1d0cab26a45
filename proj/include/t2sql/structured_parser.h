#ifndef T2SQL_STRUCTURED_PARSER_H_
#define T2SQL_STRUCTURED_PARSER_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2sql/dataset.h"
#include "t2sql/grammar.h"
#include "t2sql/linker.h"
#include "t2sql/ner.h"

namespace t2sql {

enum class HarnessMode { kBaseline, kLinkedColumnsOnly, kColumnTypeFeature, kOracleFeature };

std::string_view HarnessModeName(HarnessMode mode);
std::optional<HarnessMode> HarnessModeFromName(std::string_view name);
inline constexpr std::array<HarnessMode, 4> kAllHarnessModes = {
    HarnessMode::kBaseline, HarnessMode::kLinkedColumnsOnly, HarnessMode::kColumnTypeFeature,
    HarnessMode::kOracleFeature};

// Column id -> role; EntityLabel::kNone stands for ABSENT. Every column of
// the table has an entry.
using ColumnTypeFeature = std::map<std::string, EntityLabel>;

// Roles from NER column spans routed through their links. `links[i]`
// belongs to `spans[i]`. A column claimed by several spans keeps the role
// whose span has the highest probability for its label; equal
// probabilities keep the lower label index.
ColumnTypeFeature BuildColumnTypeFeatures(const TableData &table, std::span<const SpanPrediction> spans,
                                          std::span<const LinkResult> links);
// Same rule over gold spans, each with probability 1.
ColumnTypeFeature GoldColumnTypeFeatures(const TableData &table, std::span<const TypedSpan> spans);

struct LinkedLiteral {
  TokenRange span;
  std::string value;  // canonical cell string
  double link_prob = 1;
};

struct LinkedColumn {
  TokenRange span;
  std::string column_id;
  double link_prob = 1;
};

// Upstream signals the parser consumes.
struct ParserInputs {
  std::vector<LinkedLiteral> literals;
  std::vector<LinkedColumn> columns;
  ColumnTypeFeature features;
};

// From derived annotations: literal spans with a link, column spans with
// their link, gold column roles.
ParserInputs GoldParserInputs(const TableData &table, std::span<const TypedSpan> spans);
// From NER predictions and their link results (aligned by index; spans
// without a link result are skipped).
ParserInputs PredictedParserInputs(const TableData &table, std::span<const SpanPrediction> spans,
                                   std::span<const std::optional<LinkResult>> links);

struct EncColumn {
  std::string id;
  std::vector<uint64_t> words;  // hashed display-name tokens
  ColumnType type = ColumnType::kString;
  EntityLabel role = EntityLabel::kNone;
  bool linked = false;
  double link_prob = 0;
  bool has_literal = false;  // holds one of the linked literal values
  int overlap_bucket = 0;    // share of display tokens found in the query
  bool operator==(const EncColumn &) const = default;
};

struct EncLiteral {
  std::string value;
  TokenRange span;  // first mention
  std::vector<size_t> columns;  // encoder column indices holding the value
  bool numeric = false;
  double link_prob = 1;
  bool operator==(const EncLiteral &) const = default;
};

struct EncoderOutput {
  std::vector<uint64_t> query_words;  // hashed unigrams and bigrams
  std::vector<EncColumn> columns;
  std::vector<EncLiteral> literals;  // one per distinct linked value
  std::string table_name = "w";
  uint32_t roles_mask = 0;  // bit per column role present in the features
  bool operator==(const EncoderOutput &) const = default;
};

// Role features are ignored in baseline and linked-columns-only modes, and
// replaced by ABSENT when `dropout_active`.
EncoderOutput Encode(const DatasetRecord &record, const TableData &table, const ParserInputs &inputs,
                     HarnessMode mode, bool dropout_active);

inline constexpr size_t kDefaultMaxSteps = 64;

// Legal-action analysis for one (grammar, encoder) pair. An action is legal
// when it fits the target and the derivation can still be completed within
// max_steps with the available copy candidates.
class DecodeContext {
 public:
  DecodeContext(const Grammar &grammar, const EncoderOutput &enc, size_t max_steps = kDefaultMaxSteps);

  const Grammar &grammar() const { return *grammar_; }
  const EncoderOutput &enc() const { return *enc_; }
  size_t max_steps() const { return max_steps_; }

  std::vector<DecoderAction> LegalActions(const PartialTree &state) const;
  // Minimum number of actions that completes `state`; SIZE_MAX if none.
  size_t RemainingCost(const PartialTree &state) const;

 private:
  size_t SymbolCost(const Symbol &s) const;

  const Grammar *grammar_;
  const EncoderOutput *enc_;
  size_t max_steps_;
  std::map<std::string, size_t, std::less<>> nt_cost_;
  std::vector<size_t> rule_cost_;
};

class ActionScorer {
 public:
  virtual ~ActionScorer() = default;
  // One logit per action in `support`; -infinity removes an action.
  virtual std::vector<double> Logits(const PartialTree &state, const DecodeContext &ctx,
                                     std::span<const DecoderAction> support) const = 0;
};

// Probability 1 on the next gold action while the history follows the gold
// sequence, uniform otherwise.
class OracleScorer : public ActionScorer {
 public:
  explicit OracleScorer(std::vector<DecoderAction> gold) : gold_(std::move(gold)) {}
  std::vector<double> Logits(const PartialTree &state, const DecodeContext &ctx,
                             std::span<const DecoderAction> support) const override;

 private:
  std::vector<DecoderAction> gold_;
};

// Log-linear scorer over hashed conjunction features of the decoder state
// and the candidate action.
class LogLinearScorer : public ActionScorer {
 public:
  explicit LogLinearScorer(const Grammar &grammar, size_t hash_dim = size_t{1} << 18, uint64_t seed = 41);

  std::vector<double> Logits(const PartialTree &state, const DecodeContext &ctx,
                             std::span<const DecoderAction> support) const override;

  // Feature ids per support action.
  std::vector<std::vector<uint32_t>> Features(const PartialTree &state, const DecodeContext &ctx,
                                              std::span<const DecoderAction> support) const;

  std::vector<double> &weights() { return weights_; }
  const std::vector<double> &weights() const { return weights_; }
  size_t hash_dim() const { return hash_dim_; }

  nlohmann::json ToJson() const;  // weights stored sparsely
  // The grammar must match the one the artifact was trained with.
  static LogLinearScorer FromJson(const nlohmann::json &j, const Grammar &grammar);

 private:
  size_t hash_dim_;
  uint64_t seed_;
  std::vector<uint64_t> rule_keys_;  // hash of each rule's text
  std::vector<double> weights_;
};

struct StepDistribution {
  std::vector<DecoderAction> actions;
  std::vector<double> probs;
};

// Softmax over the legal actions only. Throws DeadEnd when nothing is legal.
StepDistribution StepScores(const PartialTree &state, const DecodeContext &ctx, const ActionScorer &scorer);

struct Hypothesis {
  std::vector<DecoderAction> actions;
  double log_prob = 0;
  SqlTree tree;
};

// Argmax at every step; ties go to the lexicographically smaller action.
Hypothesis DecodeGreedy(const DecodeContext &ctx, const ActionScorer &scorer);

// Beam search by summed log-probability, no length normalization. The
// greedy derivation is merged into the result so that widening the beam
// never lowers the top score. Throws NoCompleteDerivation when nothing
// completes within max_steps.
std::vector<Hypothesis> DecodeBeam(const DecodeContext &ctx, const ActionScorer &scorer, size_t beam_size);

// Teacher-forced NLL of `gold` (or its prefix) under the log-linear scorer;
// gradient accumulated into `grad`. Throws Error when a gold action is not
// legal.
double NspLossAndGradient(const LogLinearScorer &scorer, const DecodeContext &ctx,
                          std::span<const DecoderAction> gold, std::vector<double> *grad);

struct NspExample {
  const DatasetRecord *record = nullptr;
  const TableData *table = nullptr;
  ParserInputs inputs;  // gold-derived for training
  SqlTree gold;
};

struct NspTrainConfig {
  size_t epochs = 20;
  size_t batch_size = 8;
  double lr = 0.05;
  double feature_dropout = 0.2;  // per example
  HarnessMode mode = HarnessMode::kColumnTypeFeature;
  size_t max_steps = kDefaultMaxSteps;
  uint64_t seed = 1;
};

struct NspTrainReport {
  std::vector<double> loss_curve;  // mean NLL per example before training, then per epoch
  size_t trained = 0;
  size_t unreachable = 0;  // gold derivation not legal under the encoder
  std::vector<std::string> unreachable_ids;
};

// Throws EmptyTrainingSet when no example is reachable.
NspTrainReport TrainNsp(LogLinearScorer &scorer, const Grammar &grammar, std::span<const NspExample> train,
                        const NspTrainConfig &config);

// Mean teacher-forced NLL over reachable examples (no dropout).
double MeanNspLoss(const LogLinearScorer &scorer, const Grammar &grammar, std::span<const NspExample> data,
                   HarnessMode mode, size_t max_steps = kDefaultMaxSteps);

}  // namespace t2sql

#endif  // T2SQL_STRUCTURED_PARSER_H_
