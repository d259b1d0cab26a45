#ifndef T2SQL_LINKER_H_
#define T2SQL_LINKER_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2sql/dataset.h"

namespace t2sql {

inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr size_t kDefaultCandidateCap = 500;

struct LinkCandidate {
  enum class Kind { kColumn, kCell };
  std::string candidate_id;  // column id or cell string
  Kind kind = Kind::kCell;
  std::string surface;       // display name for columns, the cell itself otherwise
  std::optional<std::string> meta_value;
  std::optional<ColumnType> meta_type;

  bool operator==(const LinkCandidate &) const = default;
};

struct CandidateSet {
  std::vector<LinkCandidate> candidates;
  size_t overflow = 0;  // distinct cells dropped by the cap
};

// Space-joined surface of a mention.
std::string MentionText(std::span<const std::string> query, const TypedSpan &mention);

// Cell of column `col` with the highest fuzzy score against `query_text`;
// the first such cell in row order on ties, "" when the column is empty.
std::string BestFuzzyCell(const TableData &table, size_t col, std::string_view query_text);

// Column-role mentions get every column, LITERAL_VALUE mentions every
// distinct cell (capped by fuzzy score against the mention). Throws
// EmptyTable when nothing is linkable and Error for NONE/AGG mentions.
CandidateSet GenerateCandidates(const TypedSpan &mention, std::span<const std::string> query,
                                const TableData &table, size_t cap = kDefaultCandidateCap);

// "query [SEP] mention [SEP] candidate", plus "[SEP] meta_value [SEP] type"
// for columns.
struct AssembledInput {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> Segments() const;
};
AssembledInput AssembleInput(std::span<const std::string> query, const TypedSpan &mention,
                             const LinkCandidate &cand);

using SparseFeatures = std::vector<std::pair<uint32_t, double>>;

class LinkerModel {
 public:
  static const std::vector<std::string> &DenseFeatureNames();

  explicit LinkerModel(size_t hash_dim = 4096, uint64_t hash_seed = 29);
  // Zero weights except 1 on the exact-match and fuzzy features.
  static LinkerModel FuzzyBaseline();

  SparseFeatures Features(const AssembledInput &input) const;
  double Score(const SparseFeatures &f) const;
  std::vector<double> ScoreCandidates(std::span<const AssembledInput> inputs) const;

  std::vector<double> &weights() { return weights_; }
  const std::vector<double> &weights() const { return weights_; }
  void SetDense(std::string_view name, double w);
  size_t hash_dim() const { return hash_dim_; }

  nlohmann::json ToJson() const;
  static LinkerModel FromJson(const nlohmann::json &j);

 private:
  size_t hash_dim_;
  uint64_t hash_seed_;
  std::vector<double> weights_;  // dense features, then hashed pairs
};

struct LinkResult {
  TypedSpan mention;
  std::vector<std::pair<LinkCandidate, double>> ranked;
  size_t overflow = 0;
  const LinkCandidate &chosen() const { return ranked.front().first; }
};

// Ranked by score descending, ties by candidate_id.
LinkResult Link(const TypedSpan &mention, std::span<const std::string> query, const TableData &table,
                const LinkerModel &model, size_t cap = kDefaultCandidateCap);

// Featurized training group.
struct NelGroup {
  std::vector<SparseFeatures> features;
  std::vector<std::string> candidate_ids;
  size_t gold = 0;
};

struct NelExample {
  const DatasetRecord *record = nullptr;
  const TableData *table = nullptr;
  TypedSpan mention;  // link_target holds the gold candidate id
};

enum class GroupStatus { kOk, kDegenerate, kNoGold, kNotLinkable };
GroupStatus MakeNelGroup(const LinkerModel &model, const NelExample &ex, NelGroup *out,
                         size_t cap = kDefaultCandidateCap);

// Softmax cross-entropy of one group; gradient accumulated into `grad`.
double GroupLossAndGradient(const LinkerModel &model, const NelGroup &group, std::vector<double> *grad);

struct NelTrainConfig {
  size_t epochs = 30;
  size_t batch_size = 8;
  double lr = 0.05;
  uint64_t seed = 1;
};

struct NelTrainReport {
  std::vector<double> loss_curve;  // mean cross-entropy per group, before training then per epoch
  size_t groups = 0;
  size_t degenerate = 0;
  size_t no_gold = 0;
  std::optional<double> dev_top1;
};

// Throws EmptyTrainingSet when no usable group remains.
NelTrainReport TrainNel(LinkerModel &model, std::span<const NelExample> train,
                        std::span<const NelExample> dev, const NelTrainConfig &config);

struct LinkEval {
  size_t mentions = 0;
  size_t correct = 0;
  size_t unlinkable = 0;  // gold missing from the candidates
  double top1() const { return mentions ? static_cast<double>(correct) / static_cast<double>(mentions) : 0.0; }
};
LinkEval EvaluateLinker(const LinkerModel &model, std::span<const NelExample> data);

// Normalized-surface equality between the mention and its gold target
// (the column display name for column links).
bool IsExactMatchMention(const NelExample &ex);

}  // namespace t2sql

#endif  // T2SQL_LINKER_H_
