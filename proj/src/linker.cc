#include "t2sql/linker.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "t2sql/errors.h"
#include "t2sql/optim.h"
#include "t2sql/text.h"

namespace t2sql {

using nlohmann::json;

namespace {

enum Dense : uint32_t {
  kExact,
  kFuzzy,
  kJaccard,
  kPrefix,
  kSuffix,
  kAcronym,
  kLengthRatio,
  kContainment,
  kNumericEqual,
  kMetaFuzzy,
  kMetaExact,
  kTypeNumber,
  kTypeString,
  kTypeDate,
  kNumDense,
};

std::vector<std::string> ContentTokens(std::string_view text) {
  auto toks = SplitWhitespace(text);
  for (auto &t : toks) {
    if (t == kSepToken) t = "[sep]";
  }
  return toks;
}

// Fraction of the mention's normalized tokens found in the candidate.
double Containment(std::string_view mention, std::string_view cand) {
  auto m = SplitWhitespace(NormalizeSurface(mention));
  auto c = SplitWhitespace(NormalizeSurface(cand));
  if (m.empty()) return 0;
  std::set<std::string> cs(c.begin(), c.end());
  size_t hit = 0;
  for (const auto &t : m) hit += cs.count(t);
  return static_cast<double>(hit) / static_cast<double>(m.size());
}

}  // namespace

std::string MentionText(std::span<const std::string> query, const TypedSpan &mention) {
  return Join(query.subspan(mention.start, mention.end - mention.start), " ");
}

std::string BestFuzzyCell(const TableData &table, size_t col, std::string_view query_text) {
  std::string best;
  double best_score = -1;
  for (const auto &row : table.rows) {
    const Cell &cell = row[col];
    if (cell.is_null) continue;
    double s = FuzzyScore(query_text, cell.text);
    if (s > best_score) {
      best_score = s;
      best = cell.text;
    }
  }
  return best;
}

CandidateSet GenerateCandidates(const TypedSpan &mention, std::span<const std::string> query,
                                const TableData &table, size_t cap) {
  if (mention.label == EntityLabel::kNone || mention.label == EntityLabel::kAggFunction) {
    throw Error("mention label " + std::string(LabelName(mention.label)) + " has no link candidates");
  }
  CandidateSet out;
  if (IsColumnLabel(mention.label)) {
    if (table.num_columns() == 0) throw EmptyTable(table.table_id);
    std::string query_text = Join(query, " ");
    for (size_t c = 0; c < table.num_columns(); ++c) {
      out.candidates.push_back({table.column_ids[c], LinkCandidate::Kind::kColumn,
                                table.column_display_names[c], BestFuzzyCell(table, c, query_text),
                                table.column_types[c]});
    }
    return out;
  }
  std::vector<std::string> cells = table.DistinctCells();
  if (cells.empty()) throw EmptyTable(table.table_id);
  if (cells.size() > cap) {
    std::string m = MentionText(query, mention);
    std::vector<double> score(cells.size());
    for (size_t i = 0; i < cells.size(); ++i) score[i] = FuzzyScore(m, cells[i]);
    std::vector<size_t> idx(cells.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return score[a] > score[b]; });
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> kept;
    for (size_t i : idx) kept.push_back(cells[i]);
    out.overflow = cells.size() - cap;
    cells = std::move(kept);
  }
  for (auto &cell : cells) {
    std::string surface = cell;
    out.candidates.push_back({std::move(cell), LinkCandidate::Kind::kCell, std::move(surface), std::nullopt, std::nullopt});
  }
  return out;
}

std::vector<std::vector<std::string>> AssembledInput::Segments() const {
  std::vector<std::vector<std::string>> out(1);
  for (const auto &t : tokens) {
    if (t == kSepToken) out.emplace_back();
    else out.back().push_back(t);
  }
  return out;
}

AssembledInput AssembleInput(std::span<const std::string> query, const TypedSpan &mention,
                             const LinkCandidate &cand) {
  AssembledInput in;
  in.tokens = ContentTokens(Join(query, " "));
  auto append = [&](const std::vector<std::string> &seg) {
    in.tokens.emplace_back(kSepToken);
    in.tokens.insert(in.tokens.end(), seg.begin(), seg.end());
  };
  append(ContentTokens(MentionText(query, mention)));
  append(ContentTokens(cand.surface));
  if (cand.kind == LinkCandidate::Kind::kColumn) {
    append(ContentTokens(cand.meta_value.value_or("")));
    append({cand.meta_type ? std::string(ColumnTypeName(*cand.meta_type)) : std::string()});
    if (in.tokens.back().empty()) in.tokens.pop_back();
  }
  return in;
}

const std::vector<std::string> &LinkerModel::DenseFeatureNames() {
  static const std::vector<std::string> kNames = {
      "exact",         "fuzzy",      "jaccard",     "prefix",      "suffix",
      "acronym",       "length_ratio", "containment", "numeric_equal", "meta_value_fuzzy",
      "meta_value_exact", "type_number", "type_string", "type_date"};
  return kNames;
}

LinkerModel::LinkerModel(size_t hash_dim, uint64_t hash_seed)
    : hash_dim_(hash_dim), hash_seed_(hash_seed), weights_(kNumDense + hash_dim, 0.0) {}

LinkerModel LinkerModel::FuzzyBaseline() {
  LinkerModel m;
  m.SetDense("exact", 1.0);
  m.SetDense("fuzzy", 1.0);
  return m;
}

void LinkerModel::SetDense(std::string_view name, double w) {
  const auto &names = DenseFeatureNames();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error("unknown linker feature " + std::string(name));
  weights_[static_cast<size_t>(it - names.begin())] = w;
}

SparseFeatures LinkerModel::Features(const AssembledInput &input) const {
  auto segs = input.Segments();
  if (segs.size() != 3 && segs.size() != 5) throw Error("linker input must have 3 or 5 segments");
  std::string mention = Join(segs[1], " ");
  std::string cand = Join(segs[2], " ");
  std::string nm = NormalizeSurface(mention), nc = NormalizeSurface(cand);
  SparseFeatures f;
  auto dense = [&](Dense k, double v) {
    if (v != 0) f.emplace_back(static_cast<uint32_t>(k), v);
  };
  dense(kExact, !nm.empty() && nm == nc ? 1.0 : 0.0);
  dense(kFuzzy, FuzzyScore(mention, cand));
  dense(kJaccard, TokenJaccard(mention, cand));
  dense(kPrefix, PrefixOverlap(mention, cand));
  dense(kSuffix, SuffixOverlap(mention, cand));
  dense(kAcronym, IsAcronymOf(mention, cand) ? 1.0 : 0.0);
  if (!nm.empty() && !nc.empty()) {
    double a = static_cast<double>(nm.size()), b = static_cast<double>(nc.size());
    dense(kLengthRatio, std::min(a, b) / std::max(a, b));
  }
  dense(kContainment, Containment(mention, cand));
  auto vm = ParseDecimal(nm), vc = ParseDecimal(nc);
  dense(kNumericEqual, vm && vc && *vm == *vc ? 1.0 : 0.0);
  std::string type_name;
  if (segs.size() == 5) {
    std::string meta = Join(segs[3], " ");
    dense(kMetaFuzzy, meta.empty() ? 0.0 : FuzzyScore(mention, meta));
    dense(kMetaExact, !nm.empty() && NormalizeSurface(meta) == nm ? 1.0 : 0.0);
    type_name = Join(segs[4], " ");
    if (auto t = ColumnTypeFromName(type_name)) {
      dense(static_cast<Dense>(kTypeNumber + static_cast<uint32_t>(*t)), 1.0);
    }
  }
  // Lexical pairs let training learn aliases the string features miss.
  auto hashed = [&](const std::string &key) {
    f.emplace_back(static_cast<uint32_t>(kNumDense + Hash64(key, hash_seed_) % hash_dim_), 1.0);
  };
  auto mtoks = SplitWhitespace(nm), ctoks = SplitWhitespace(nc);
  for (const auto &m : mtoks) {
    for (const auto &c : ctoks) hashed("x:" + m + "|" + c);
    if (!type_name.empty()) hashed("t:" + m + "|" + type_name);
  }
  if (!nc.empty()) hashed("c:" + nc);
  return f;
}

double LinkerModel::Score(const SparseFeatures &f) const {
  double s = 0;
  for (const auto &[i, v] : f) s += weights_[i] * v;
  return s;
}

std::vector<double> LinkerModel::ScoreCandidates(std::span<const AssembledInput> inputs) const {
  std::vector<double> out;
  out.reserve(inputs.size());
  for (const auto &in : inputs) out.push_back(Score(Features(in)));
  return out;
}

json LinkerModel::ToJson() const {
  return json{{"format", "t2sql.nel"},
              {"version", 1},
              {"feature_names", DenseFeatureNames()},
              {"hash_dim", hash_dim_},
              {"hash_seed", hash_seed_},
              {"weights", weights_}};
}

LinkerModel LinkerModel::FromJson(const json &j) {
  if (j.value("format", "") != "t2sql.nel") throw Error("not a linker model artifact");
  if (j.value("version", 0) != 1) throw Error("unsupported linker model version");
  if (j.at("feature_names").get<std::vector<std::string>>() != DenseFeatureNames()) {
    throw Error("linker artifact feature names do not match this build");
  }
  LinkerModel m(j.at("hash_dim").get<size_t>(), j.at("hash_seed").get<uint64_t>());
  auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != m.weights_.size()) throw Error("linker weight count does not match its config");
  m.weights_ = std::move(w);
  return m;
}

LinkResult Link(const TypedSpan &mention, std::span<const std::string> query, const TableData &table,
                const LinkerModel &model, size_t cap) {
  CandidateSet cs = GenerateCandidates(mention, query, table, cap);
  LinkResult r;
  r.mention = mention;
  r.overflow = cs.overflow;
  for (auto &c : cs.candidates) {
    double s = model.Score(model.Features(AssembleInput(query, mention, c)));
    r.ranked.emplace_back(std::move(c), s);
  }
  std::sort(r.ranked.begin(), r.ranked.end(), [](const auto &a, const auto &b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first.candidate_id < b.first.candidate_id;
  });
  return r;
}

GroupStatus MakeNelGroup(const LinkerModel &model, const NelExample &ex, NelGroup *out, size_t cap) {
  const TypedSpan &m = ex.mention;
  if (m.label == EntityLabel::kNone || m.label == EntityLabel::kAggFunction) return GroupStatus::kNotLinkable;
  if (!m.link_target) return GroupStatus::kNoGold;
  CandidateSet cs;
  try {
    cs = GenerateCandidates(m, ex.record->query_tokens, *ex.table, cap);
  } catch (const EmptyTable &) {
    return GroupStatus::kNotLinkable;
  }
  NelGroup g;
  std::optional<size_t> gold;
  for (const auto &c : cs.candidates) {
    if (c.candidate_id == *m.link_target) gold = g.candidate_ids.size();
    g.candidate_ids.push_back(c.candidate_id);
    g.features.push_back(model.Features(AssembleInput(ex.record->query_tokens, m, c)));
  }
  if (!gold) return GroupStatus::kNoGold;
  if (g.features.size() < 2) return GroupStatus::kDegenerate;
  g.gold = *gold;
  if (out) *out = std::move(g);
  return GroupStatus::kOk;
}

double GroupLossAndGradient(const LinkerModel &model, const NelGroup &group, std::vector<double> *grad) {
  std::vector<double> p;
  for (const auto &f : group.features) p.push_back(model.Score(f));
  double z_gold = p[group.gold];
  double loss = SoftmaxInPlace(p) - z_gold;
  if (grad) {
    for (size_t k = 0; k < p.size(); ++k) {
      double dz = p[k] - (k == group.gold ? 1.0 : 0.0);
      for (const auto &[i, v] : group.features[k]) (*grad)[i] += dz * v;
    }
  }
  return loss;
}

namespace {

double MeanGroupLoss(const LinkerModel &model, const std::vector<NelGroup> &groups) {
  double sum = 0;
  for (const auto &g : groups) sum += GroupLossAndGradient(model, g, nullptr);
  return groups.empty() ? 0.0 : sum / static_cast<double>(groups.size());
}

}  // namespace

NelTrainReport TrainNel(LinkerModel &model, std::span<const NelExample> train,
                        std::span<const NelExample> dev, const NelTrainConfig &config) {
  NelTrainReport report;
  std::vector<NelGroup> groups;
  for (const auto &ex : train) {
    NelGroup g;
    switch (MakeNelGroup(model, ex, &g)) {
      case GroupStatus::kOk: groups.push_back(std::move(g)); break;
      case GroupStatus::kDegenerate: ++report.degenerate; break;
      case GroupStatus::kNoGold: ++report.no_gold; break;
      case GroupStatus::kNotLinkable: break;
    }
  }
  report.groups = groups.size();
  if (groups.empty()) throw EmptyTrainingSet("nel");
  std::mt19937_64 rng(config.seed);
  std::vector<double> grad(model.weights().size());
  Adam adam(grad.size(), config.lr);
  report.loss_curve.push_back(MeanGroupLoss(model, groups));
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = ShuffledIndices(groups.size(), rng);
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      std::fill(grad.begin(), grad.end(), 0.0);
      size_t end = std::min(order.size(), start + config.batch_size);
      for (size_t k = start; k < end; ++k) GroupLossAndGradient(model, groups[order[k]], &grad);
      for (double &g : grad) g /= static_cast<double>(end - start);
      adam.Step(model.weights(), grad);
    }
    report.loss_curve.push_back(MeanGroupLoss(model, groups));
  }
  if (!dev.empty()) report.dev_top1 = EvaluateLinker(model, dev).top1();
  return report;
}

LinkEval EvaluateLinker(const LinkerModel &model, std::span<const NelExample> data) {
  LinkEval e;
  for (const auto &ex : data) {
    const TypedSpan &m = ex.mention;
    if (m.label == EntityLabel::kNone || m.label == EntityLabel::kAggFunction) continue;
    ++e.mentions;
    if (!m.link_target) {
      ++e.unlinkable;
      continue;
    }
    LinkResult r;
    try {
      r = Link(m, ex.record->query_tokens, *ex.table, model);
    } catch (const EmptyTable &) {
      ++e.unlinkable;
      continue;
    }
    bool present = std::any_of(r.ranked.begin(), r.ranked.end(),
                               [&](const auto &c) { return c.first.candidate_id == *m.link_target; });
    if (!present) ++e.unlinkable;
    if (r.chosen().candidate_id == *m.link_target) ++e.correct;
  }
  return e;
}

bool IsExactMatchMention(const NelExample &ex) {
  const TypedSpan &m = ex.mention;
  if (!m.link_target) return false;
  std::string target = *m.link_target;
  if (IsColumnLabel(m.label)) {
    auto c = ex.table->ColumnIndex(target);
    if (!c) return false;
    target = ex.table->column_display_names[*c];
  }
  std::string nm = NormalizeSurface(MentionText(ex.record->query_tokens, m));
  return !nm.empty() && nm == NormalizeSurface(target);
}

}  // namespace t2sql
