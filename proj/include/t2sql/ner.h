#ifndef T2SQL_NER_H_
#define T2SQL_NER_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2sql/dataset.h"
#include "t2sql/labels.h"

namespace t2sql {

enum class MatchCategory { kNoneMatch, kSchema, kCell };

std::string_view MatchCategoryName(MatchCategory c);

// Normalized surface strings of a table's column display names and cells.
// A string that is both a header and a cell is kept as SCHEMA.
class Gazetteer {
 public:
  static Gazetteer FromTable(const TableData &table, bool schema = true, bool cells = true);

  void Add(std::string_view surface, MatchCategory category);
  // Category of the normalized surface, kNoneMatch when absent.
  MatchCategory Lookup(std::string_view surface) const;
  MatchCategory LookupTokens(std::span<const std::string> tokens) const;

  const std::map<std::string, MatchCategory, std::less<>> &entries() const { return entries_; }
  size_t max_tokens() const { return max_tokens_; }

 private:
  std::map<std::string, MatchCategory, std::less<>> entries_;
  size_t max_tokens_ = 0;
};

// All spans of length 1..max_span_len, lexicographic by (start, end).
std::vector<TokenRange> EnumerateSpans(size_t n_tokens, size_t max_span_len);

using LabelDist = std::array<double, kNumEntityLabels>;

// SCHEMA restricts the argmax to the four column tags, CELL forces
// LITERAL_VALUE, NONE_MATCH is the plain argmax. Ties go to the lower index.
EntityLabel ConstrainedLabelDecode(const LabelDist &dist, MatchCategory match);
EntityLabel ArgMaxLabel(const LabelDist &dist);

struct SpanPrediction {
  TokenRange span;
  EntityLabel label = EntityLabel::kNone;
  LabelDist probs{};
  MatchCategory match = MatchCategory::kNoneMatch;
};

// Forces a compatible entity label on every exactly matched span and
// suppresses unmatched entity spans that overlap a matched one. Also sets
// SpanPrediction::match.
std::vector<SpanPrediction> GazetteerFilter(std::vector<SpanPrediction> predictions,
                                            const Gazetteer &gazetteer,
                                            std::span<const std::string> query_tokens);

// Encoder input switches; dropping a segment removes its gazetteer-hit
// features. `gazetteer_filter` toggles the post-hoc filter only.
struct NerAblation {
  bool use_schema = true;
  bool use_cells = true;
  bool gazetteer_filter = true;
};

struct NerConfig {
  size_t dim = 32;
  size_t len_dim = 8;
  size_t max_span_len = 8;
  size_t hash_dim = 4096;
  uint64_t hash_seed = 17;
  double init_scale = 0.1;
  NerAblation ablation;
};

nlohmann::json NerConfigToJson(const NerConfig &c);
NerConfig NerConfigFromJson(const nlohmann::json &j);

// Featurized record: hashed sparse features per query token and the gold
// label index of every enumerated span.
struct NerInstance {
  std::vector<std::vector<uint32_t>> token_features;
  std::vector<TokenRange> spans;
  std::vector<int> gold;  // label index per span; empty when unlabeled
};

// Supervision bookkeeping from MakeNerInstance.
struct NerSupervisionStats {
  size_t gold_spans = 0;
  size_t unreachable = 0;      // longer than max_span_len
  size_t label_conflicts = 0;  // one range, several labels; lowest index kept
};

// Gold labels per range after resolving conflicts to the lowest label index.
// Spans longer than `max_span_len` are dropped and counted.
std::map<TokenRange, EntityLabel> ResolveGoldSpans(std::span<const TypedSpan> spans,
                                                   size_t max_span_len,
                                                   NerSupervisionStats *stats = nullptr);

class NerModel {
 public:
  explicit NerModel(NerConfig config);
  // Random projection and length table; zero classifier.
  static NerModel Initialized(NerConfig config, std::mt19937_64 &rng);

  const NerConfig &config() const { return config_; }
  NerConfig &mutable_config() { return config_; }

  NerInstance Featurize(std::span<const std::string> query, const TableData &table,
                        std::span<const TypedSpan> gold = {},
                        NerSupervisionStats *stats = nullptr) const;

  // softmax(W e_s + b) for every enumerated span, in enumeration order.
  std::vector<LabelDist> Score(const NerInstance &inst) const;
  std::vector<SpanPrediction> ScoreSpans(std::span<const std::string> query,
                                         const TableData &table) const;

  // Summed NLL over the instance's spans. When `grad` is set, the gradient
  // is accumulated into it (same layout as params()).
  double LossAndGradient(const NerInstance &inst, std::vector<double> *grad) const;

  std::vector<double> &params() { return params_; }
  const std::vector<double> &params() const { return params_; }

  // Parameter layout: projection [hash_dim x dim], length table
  // [max_span_len x len_dim], classifier W [labels x span_dim], bias b.
  size_t span_dim() const { return 3 * config_.dim + config_.len_dim; }
  size_t proj_offset() const { return 0; }
  size_t len_offset() const { return config_.hash_dim * config_.dim; }
  size_t w_offset() const { return len_offset() + config_.max_span_len * config_.len_dim; }
  size_t b_offset() const { return w_offset() + kNumEntityLabels * span_dim(); }

  nlohmann::json ToJson() const;
  static NerModel FromJson(const nlohmann::json &j);

 private:
  void TokenVectors(const NerInstance &inst, std::vector<double> &out) const;

  NerConfig config_;
  std::vector<double> params_;
};

// Spans with a non-NONE label after scoring and (if enabled) filtering.
std::vector<SpanPrediction> PredictEntities(const NerModel &model,
                                            std::span<const std::string> query,
                                            const TableData &table);

struct SpanF1 {
  size_t tp = 0, fp = 0, fn = 0;
  double precision() const;
  double recall() const;
  double f1() const;
  SpanF1 &operator+=(const SpanF1 &o);
};

// Micro span-F1 over labeled (range, label) pairs; NONE is never counted.
SpanF1 CompareSpans(const std::map<TokenRange, EntityLabel> &gold,
                    std::span<const SpanPrediction> predicted);

struct NerExample {
  const DatasetRecord *record = nullptr;
  const TableData *table = nullptr;
  std::vector<TypedSpan> spans;
};

struct NerTrainConfig {
  size_t epochs = 30;
  size_t batch_size = 8;
  double lr = 0.01;
  // Full-batch gradient descent with lr / (1 + decay * epoch) instead of
  // minibatch Adam.
  bool full_batch_gd = false;
  double lr_decay = 0.0;
  bool shuffle = true;
  uint64_t seed = 1;
};

struct NerTrainReport {
  std::vector<double> loss_curve;  // mean NLL per span, one entry per epoch
  NerSupervisionStats supervision;
  std::optional<SpanF1> dev;
};

// Throws EmptyTrainingSet when `train` is empty.
NerTrainReport TrainNer(NerModel &model, std::span<const NerExample> train,
                        std::span<const NerExample> dev, const NerTrainConfig &config);

SpanF1 EvaluateNer(const NerModel &model, std::span<const NerExample> data);

}  // namespace t2sql

#endif  // T2SQL_NER_H_
