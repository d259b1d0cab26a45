#include "t2sql/ner.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "t2sql/errors.h"
#include "t2sql/optim.h"
#include "t2sql/text.h"

namespace t2sql {

using nlohmann::json;

namespace {

constexpr int kNoneIndex = static_cast<int>(EntityLabel::kNone);

bool Overlaps(const TokenRange &a, const TokenRange &b) {
  return a.begin < b.end && b.begin < a.end;
}

std::string_view CategoryTag(MatchCategory c) { return c == MatchCategory::kSchema ? "S" : "C"; }

}  // namespace

std::string_view MatchCategoryName(MatchCategory c) {
  switch (c) {
    case MatchCategory::kNoneMatch: return "NONE_MATCH";
    case MatchCategory::kSchema: return "SCHEMA";
    case MatchCategory::kCell: return "CELL";
  }
  return "NONE_MATCH";
}

void Gazetteer::Add(std::string_view surface, MatchCategory category) {
  std::string key = NormalizeSurface(surface);
  if (key.empty() || category == MatchCategory::kNoneMatch) return;
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    max_tokens_ = std::max(max_tokens_, SplitWhitespace(key).size());
    entries_.emplace(std::move(key), category);
  } else if (category == MatchCategory::kSchema) {
    it->second = MatchCategory::kSchema;
  }
}

Gazetteer Gazetteer::FromTable(const TableData &table, bool schema, bool cells) {
  Gazetteer g;
  if (schema) {
    for (const auto &name : table.column_display_names) g.Add(name, MatchCategory::kSchema);
  }
  if (cells) {
    for (const auto &row : table.rows) {
      for (const auto &cell : row) {
        if (!cell.is_null) g.Add(cell.text, MatchCategory::kCell);
      }
    }
  }
  return g;
}

MatchCategory Gazetteer::Lookup(std::string_view surface) const {
  auto it = entries_.find(NormalizeSurface(surface));
  return it == entries_.end() ? MatchCategory::kNoneMatch : it->second;
}

MatchCategory Gazetteer::LookupTokens(std::span<const std::string> tokens) const {
  if (tokens.empty() || tokens.size() > max_tokens_ + 2) return MatchCategory::kNoneMatch;
  // Spans with a bare punctuation token at either edge would otherwise match
  // through normalization.
  if (NormalizeSurface(tokens.front()).empty() || NormalizeSurface(tokens.back()).empty()) {
    return MatchCategory::kNoneMatch;
  }
  return Lookup(Join(tokens, " "));
}

std::vector<TokenRange> EnumerateSpans(size_t n_tokens, size_t max_span_len) {
  std::vector<TokenRange> out;
  for (size_t s = 0; s < n_tokens; ++s) {
    for (size_t e = s + 1; e <= n_tokens && e - s <= max_span_len; ++e) out.push_back({s, e});
  }
  return out;
}

EntityLabel ArgMaxLabel(const LabelDist &dist) {
  return static_cast<EntityLabel>(ArgMax(dist));
}

EntityLabel ConstrainedLabelDecode(const LabelDist &dist, MatchCategory match) {
  switch (match) {
    case MatchCategory::kCell: return EntityLabel::kLiteralValue;
    case MatchCategory::kSchema: {
      int best = 0;
      for (int i = 1; i <= LabelIndex(EntityLabel::kOrderByColumn); ++i) {
        if (dist[static_cast<size_t>(i)] > dist[static_cast<size_t>(best)]) best = i;
      }
      return static_cast<EntityLabel>(best);
    }
    case MatchCategory::kNoneMatch: break;
  }
  return ArgMaxLabel(dist);
}

std::vector<SpanPrediction> GazetteerFilter(std::vector<SpanPrediction> predictions,
                                            const Gazetteer &gazetteer,
                                            std::span<const std::string> query_tokens) {
  std::vector<TokenRange> matched;
  for (auto &p : predictions) {
    p.match = gazetteer.LookupTokens(query_tokens.subspan(p.span.begin, p.span.end - p.span.begin));
    if (p.match == MatchCategory::kNoneMatch) continue;
    p.label = ConstrainedLabelDecode(p.probs, p.match);
    matched.push_back(p.span);
  }
  for (auto &p : predictions) {
    // Aggregation spans stay out of gazetteer logic.
    if (p.match != MatchCategory::kNoneMatch || p.label == EntityLabel::kNone ||
        p.label == EntityLabel::kAggFunction) {
      continue;
    }
    for (const auto &m : matched) {
      if (Overlaps(p.span, m)) {
        p.label = EntityLabel::kNone;
        break;
      }
    }
  }
  return predictions;
}

json NerConfigToJson(const NerConfig &c) {
  return json{{"dim", c.dim},
              {"len_dim", c.len_dim},
              {"max_span_len", c.max_span_len},
              {"hash_dim", c.hash_dim},
              {"hash_seed", c.hash_seed},
              {"init_scale", c.init_scale},
              {"use_schema", c.ablation.use_schema},
              {"use_cells", c.ablation.use_cells},
              {"gazetteer_filter", c.ablation.gazetteer_filter}};
}

NerConfig NerConfigFromJson(const json &j) {
  NerConfig c;
  c.dim = j.at("dim");
  c.len_dim = j.at("len_dim");
  c.max_span_len = j.at("max_span_len");
  c.hash_dim = j.at("hash_dim");
  c.hash_seed = j.at("hash_seed");
  c.init_scale = j.value("init_scale", c.init_scale);
  c.ablation.use_schema = j.value("use_schema", true);
  c.ablation.use_cells = j.value("use_cells", true);
  c.ablation.gazetteer_filter = j.value("gazetteer_filter", true);
  return c;
}

std::map<TokenRange, EntityLabel> ResolveGoldSpans(std::span<const TypedSpan> spans,
                                                   size_t max_span_len,
                                                   NerSupervisionStats *stats) {
  std::map<TokenRange, EntityLabel> out;
  std::set<TokenRange> conflicted;
  for (const auto &s : spans) {
    if (s.label == EntityLabel::kNone) continue;
    if (stats) ++stats->gold_spans;
    if (s.end - s.start > max_span_len) {
      if (stats) ++stats->unreachable;
      continue;
    }
    auto [it, inserted] = out.emplace(s.range(), s.label);
    if (!inserted && it->second != s.label) {
      if (stats && conflicted.insert(s.range()).second) ++stats->label_conflicts;
      if (LabelIndex(s.label) < LabelIndex(it->second)) it->second = s.label;
    }
  }
  return out;
}

NerModel::NerModel(NerConfig config) : config_(config) {
  params_.assign(b_offset() + kNumEntityLabels, 0.0);
}

NerModel NerModel::Initialized(NerConfig config, std::mt19937_64 &rng) {
  NerModel m(config);
  std::span<double> p(m.params_);
  FillNormal(p.subspan(0, m.w_offset()), config.init_scale, rng);
  return m;
}

NerInstance NerModel::Featurize(std::span<const std::string> query, const TableData &table,
                                std::span<const TypedSpan> gold,
                                NerSupervisionStats *stats) const {
  const NerAblation &ab = config_.ablation;
  Gazetteer gaz = Gazetteer::FromTable(table, ab.use_schema, ab.use_cells);
  std::set<std::string, std::less<>> schema_words, cell_words;
  for (const auto &[surface, cat] : gaz.entries()) {
    auto &words = cat == MatchCategory::kSchema ? schema_words : cell_words;
    for (auto &w : SplitWhitespace(surface)) words.insert(std::move(w));
  }

  size_t n = query.size();
  std::vector<std::vector<std::string>> feats(n);
  std::vector<std::string> lower(n);
  for (size_t i = 0; i < n; ++i) lower[i] = ToLower(query[i]);
  for (size_t i = 0; i < n; ++i) {
    auto &f = feats[i];
    const std::string &w = lower[i];
    f.push_back("seg:q");
    f.push_back("w:" + w);
    f.push_back("p:" + (i ? lower[i - 1] : std::string("<s>")));
    f.push_back("n:" + (i + 1 < n ? lower[i + 1] : std::string("</s>")));
    std::string padded = "^" + w + "$";
    for (size_t k = 0; k + 3 <= padded.size(); ++k) f.push_back("g3:" + padded.substr(k, 3));
    if (ParseDecimal(query[i])) f.push_back("shape:num");
    else if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) f.push_back("shape:digit");
    if (!query[i].empty() && std::isupper(static_cast<unsigned char>(query[i][0]))) f.push_back("shape:cap");
    std::string norm = NormalizeSurface(query[i]);
    if (norm.empty()) f.push_back("shape:punct");
    if (i == 0) f.push_back("pos:first");
    if (i + 1 == n) f.push_back("pos:last");
    if (!norm.empty() && schema_words.count(norm)) f.push_back("hit:partial:S");
    if (!norm.empty() && cell_words.count(norm)) f.push_back("hit:partial:C");
  }
  // Exact gazetteer hits mark the first, last and inner tokens of the match.
  size_t max_len = std::min(config_.max_span_len, gaz.max_tokens() + 2);
  for (size_t s = 0; s < n; ++s) {
    for (size_t e = s + 1; e <= n && e - s <= max_len; ++e) {
      MatchCategory cat = gaz.LookupTokens(query.subspan(s, e - s));
      if (cat == MatchCategory::kNoneMatch) continue;
      std::string tag(CategoryTag(cat));
      std::string len = std::to_string(std::min<size_t>(e - s, 4));
      feats[s].push_back("hit:B:" + tag + ":" + len);
      feats[e - 1].push_back("hit:E:" + tag + ":" + len);
      for (size_t k = s + 1; k + 1 < e; ++k) feats[k].push_back("hit:I:" + tag);
    }
  }

  NerInstance inst;
  inst.token_features.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto &ids = inst.token_features[i];
    for (const auto &f : feats[i]) {
      ids.push_back(static_cast<uint32_t>(Hash64(f, config_.hash_seed) % config_.hash_dim));
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  inst.spans = EnumerateSpans(n, config_.max_span_len);
  if (!gold.empty() || stats) {
    auto resolved = ResolveGoldSpans(gold, config_.max_span_len, stats);
    inst.gold.reserve(inst.spans.size());
    for (const auto &s : inst.spans) {
      auto it = resolved.find(s);
      inst.gold.push_back(it == resolved.end() ? kNoneIndex : LabelIndex(it->second));
    }
  }
  return inst;
}

void NerModel::TokenVectors(const NerInstance &inst, std::vector<double> &out) const {
  size_t d = config_.dim;
  out.assign(inst.token_features.size() * d, 0.0);
  for (size_t i = 0; i < inst.token_features.size(); ++i) {
    double *v = &out[i * d];
    for (uint32_t f : inst.token_features[i]) {
      const double *col = &params_[proj_offset() + f * d];
      for (size_t k = 0; k < d; ++k) v[k] += col[k];
    }
  }
}

namespace {

// Builds e_s = [ctx; tok[start]; tok[end-1]; len[end-start-1]].
void SpanVector(const std::vector<double> &tok, const std::vector<double> &ctx,
                const double *len_table, size_t d, size_t dl, const TokenRange &s,
                std::vector<double> &e) {
  e.resize(3 * d + dl);
  std::copy(ctx.begin(), ctx.end(), e.begin());
  std::copy_n(&tok[s.begin * d], d, e.begin() + static_cast<long>(d));
  std::copy_n(&tok[(s.end - 1) * d], d, e.begin() + static_cast<long>(2 * d));
  std::copy_n(len_table + (s.end - s.begin - 1) * dl, dl, e.begin() + static_cast<long>(3 * d));
}

}  // namespace

std::vector<LabelDist> NerModel::Score(const NerInstance &inst) const {
  size_t d = config_.dim, dl = config_.len_dim, sd = span_dim();
  size_t n = inst.token_features.size();
  std::vector<double> tok, ctx(d, 0.0), e;
  TokenVectors(inst, tok);
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < d; ++k) ctx[k] += tok[i * d + k] / static_cast<double>(n);
  }
  const double *W = &params_[w_offset()];
  const double *b = &params_[b_offset()];
  std::vector<LabelDist> out;
  out.reserve(inst.spans.size());
  for (const auto &s : inst.spans) {
    SpanVector(tok, ctx, &params_[len_offset()], d, dl, s, e);
    LabelDist z{};
    for (int y = 0; y < kNumEntityLabels; ++y) {
      double acc = b[y];
      const double *row = W + static_cast<size_t>(y) * sd;
      for (size_t k = 0; k < sd; ++k) acc += row[k] * e[k];
      z[static_cast<size_t>(y)] = acc;
    }
    SoftmaxInPlace(z);
    out.push_back(z);
  }
  return out;
}

std::vector<SpanPrediction> NerModel::ScoreSpans(std::span<const std::string> query,
                                                 const TableData &table) const {
  NerInstance inst = Featurize(query, table);
  auto dists = Score(inst);
  std::vector<SpanPrediction> out;
  out.reserve(dists.size());
  for (size_t i = 0; i < dists.size(); ++i) {
    out.push_back({inst.spans[i], ArgMaxLabel(dists[i]), dists[i], MatchCategory::kNoneMatch});
  }
  return out;
}

double NerModel::LossAndGradient(const NerInstance &inst, std::vector<double> *grad) const {
  size_t d = config_.dim, dl = config_.len_dim, sd = span_dim();
  size_t n = inst.token_features.size();
  if (inst.gold.size() != inst.spans.size()) throw Error("NER instance has no gold labels");
  std::vector<double> tok, ctx(d, 0.0), e;
  TokenVectors(inst, tok);
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < d; ++k) ctx[k] += tok[i * d + k] / static_cast<double>(n);
  }
  const double *W = &params_[w_offset()];
  const double *b = &params_[b_offset()];
  std::vector<double> dtok(grad ? n * d : 0, 0.0), dctx(grad ? d : 0, 0.0), de(sd);
  double loss = 0;
  for (size_t si = 0; si < inst.spans.size(); ++si) {
    const TokenRange &s = inst.spans[si];
    SpanVector(tok, ctx, &params_[len_offset()], d, dl, s, e);
    LabelDist p{};
    for (int y = 0; y < kNumEntityLabels; ++y) {
      double acc = b[y];
      const double *row = W + static_cast<size_t>(y) * sd;
      for (size_t k = 0; k < sd; ++k) acc += row[k] * e[k];
      p[static_cast<size_t>(y)] = acc;
    }
    size_t gold = static_cast<size_t>(inst.gold[si]);
    double z_gold = p[gold];
    loss += SoftmaxInPlace(p) - z_gold;
    if (!grad) continue;
    auto &g = *grad;
    std::fill(de.begin(), de.end(), 0.0);
    for (size_t y = 0; y < static_cast<size_t>(kNumEntityLabels); ++y) {
      double dz = p[y] - (y == gold ? 1.0 : 0.0);
      if (dz == 0) continue;
      double *gw = &g[w_offset() + y * sd];
      const double *row = W + y * sd;
      for (size_t k = 0; k < sd; ++k) {
        gw[k] += dz * e[k];
        de[k] += dz * row[k];
      }
      g[b_offset() + y] += dz;
    }
    for (size_t k = 0; k < d; ++k) {
      dctx[k] += de[k];
      dtok[s.begin * d + k] += de[d + k];
      dtok[(s.end - 1) * d + k] += de[2 * d + k];
    }
    double *gl = &g[len_offset() + (s.end - s.begin - 1) * dl];
    for (size_t k = 0; k < dl; ++k) gl[k] += de[3 * d + k];
  }
  if (grad) {
    auto &g = *grad;
    for (size_t i = 0; i < n; ++i) {
      for (size_t k = 0; k < d; ++k) dtok[i * d + k] += dctx[k] / static_cast<double>(n);
      for (uint32_t f : inst.token_features[i]) {
        double *gp = &g[proj_offset() + f * d];
        for (size_t k = 0; k < d; ++k) gp[k] += dtok[i * d + k];
      }
    }
  }
  return loss;
}

json NerModel::ToJson() const {
  return json{{"format", "t2sql.ner"}, {"version", 1}, {"config", NerConfigToJson(config_)}, {"params", params_}};
}

NerModel NerModel::FromJson(const json &j) {
  if (j.value("format", "") != "t2sql.ner") throw Error("not an NER model artifact");
  if (j.value("version", 0) != 1) throw Error("unsupported NER model version");
  NerModel m(NerConfigFromJson(j.at("config")));
  auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != m.params_.size()) throw Error("NER model parameter count does not match its config");
  m.params_ = std::move(p);
  return m;
}

std::vector<SpanPrediction> PredictEntities(const NerModel &model, std::span<const std::string> query,
                                            const TableData &table) {
  auto preds = model.ScoreSpans(query, table);
  const NerAblation &ab = model.config().ablation;
  if (ab.gazetteer_filter) {
    preds = GazetteerFilter(std::move(preds), Gazetteer::FromTable(table, ab.use_schema, ab.use_cells), query);
  }
  std::erase_if(preds, [](const SpanPrediction &p) { return p.label == EntityLabel::kNone; });
  return preds;
}

double SpanF1::precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
double SpanF1::recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
double SpanF1::f1() const {
  double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}
SpanF1 &SpanF1::operator+=(const SpanF1 &o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

SpanF1 CompareSpans(const std::map<TokenRange, EntityLabel> &gold,
                    std::span<const SpanPrediction> predicted) {
  SpanF1 out;
  size_t gold_entities = 0;
  for (const auto &[range, label] : gold) gold_entities += label != EntityLabel::kNone;
  for (const auto &p : predicted) {
    if (p.label == EntityLabel::kNone) continue;
    auto it = gold.find(p.span);
    if (it != gold.end() && it->second == p.label) ++out.tp;
    else ++out.fp;
  }
  out.fn = gold_entities - out.tp;
  return out;
}

SpanF1 EvaluateNer(const NerModel &model, std::span<const NerExample> data) {
  SpanF1 total;
  for (const auto &ex : data) {
    auto gold = ResolveGoldSpans(ex.spans, SIZE_MAX);
    auto preds = PredictEntities(model, ex.record->query_tokens, *ex.table);
    total += CompareSpans(gold, preds);
  }
  return total;
}

namespace {

double MeanLoss(const NerModel &model, const std::vector<NerInstance> &data, size_t n_spans) {
  double sum = 0;
  for (const auto &inst : data) sum += model.LossAndGradient(inst, nullptr);
  return n_spans ? sum / static_cast<double>(n_spans) : 0.0;
}

}  // namespace

NerTrainReport TrainNer(NerModel &model, std::span<const NerExample> train,
                        std::span<const NerExample> dev, const NerTrainConfig &config) {
  if (train.empty()) throw EmptyTrainingSet("ner");
  NerTrainReport report;
  std::vector<NerInstance> data;
  size_t n_spans = 0;
  for (const auto &ex : train) {
    data.push_back(model.Featurize(ex.record->query_tokens, *ex.table, ex.spans, &report.supervision));
    n_spans += data.back().spans.size();
  }
  std::mt19937_64 rng(config.seed);
  std::vector<double> grad(model.params().size());
  Adam adam(grad.size(), config.lr);
  report.loss_curve.push_back(MeanLoss(model, data, n_spans));
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.full_batch_gd) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (const auto &inst : data) model.LossAndGradient(inst, &grad);
      for (double &g : grad) g /= static_cast<double>(n_spans);
      GradientStep(model.params(), grad, config.lr / (1.0 + config.lr_decay * static_cast<double>(epoch)));
    } else {
      std::vector<size_t> order(data.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      if (config.shuffle) order = ShuffledIndices(data.size(), rng);
      for (size_t start = 0; start < order.size(); start += config.batch_size) {
        std::fill(grad.begin(), grad.end(), 0.0);
        size_t batch_spans = 0;
        for (size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
          model.LossAndGradient(data[order[k]], &grad);
          batch_spans += data[order[k]].spans.size();
        }
        if (!batch_spans) continue;
        for (double &g : grad) g /= static_cast<double>(batch_spans);
        adam.Step(model.params(), grad);
      }
    }
    report.loss_curve.push_back(MeanLoss(model, data, n_spans));
  }
  if (!dev.empty()) report.dev = EvaluateNer(model, dev);
  return report;
}

}  // namespace t2sql
