#include "t2sql/structured_parser.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "t2sql/errors.h"
#include "t2sql/optim.h"
#include "t2sql/text.h"

namespace t2sql {

using nlohmann::json;

namespace {

constexpr size_t kInf = std::numeric_limits<size_t>::max();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

size_t SatAdd(size_t a, size_t b) { return a > kInf - b ? kInf : a + b; }

uint64_t Mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t WordKey(std::string_view w) { return Hash64(w, 0x5eed); }

int ProbBucket(double p) { return p >= 0.8 ? 2 : p >= 0.5 ? 1 : 0; }

// Softmax probability of the top-ranked candidate.
double TopLinkProb(const LinkResult &r) {
  std::vector<double> s;
  for (const auto &[c, score] : r.ranked) s.push_back(score);
  if (s.empty()) return 0;
  SoftmaxInPlace(s);
  return s.front();
}

}  // namespace

std::string_view HarnessModeName(HarnessMode mode) {
  switch (mode) {
    case HarnessMode::kBaseline: return "baseline";
    case HarnessMode::kLinkedColumnsOnly: return "linked_columns_only";
    case HarnessMode::kColumnTypeFeature: return "column_type_feature";
    case HarnessMode::kOracleFeature: return "oracle_feature";
  }
  return "baseline";
}

std::optional<HarnessMode> HarnessModeFromName(std::string_view name) {
  for (HarnessMode m : kAllHarnessModes) {
    if (HarnessModeName(m) == name) return m;
  }
  return std::nullopt;
}

namespace {

struct RoleClaim {
  EntityLabel role = EntityLabel::kNone;
  double prob = -1;
};

void Claim(RoleClaim &c, EntityLabel role, double prob) {
  if (prob > c.prob || (prob == c.prob && LabelIndex(role) < LabelIndex(c.role))) {
    c.role = role;
    c.prob = prob;
  }
}

ColumnTypeFeature FinishFeatures(const TableData &table, const std::map<std::string, RoleClaim> &claims) {
  ColumnTypeFeature out;
  for (const auto &id : table.column_ids) {
    auto it = claims.find(id);
    out[id] = it == claims.end() ? EntityLabel::kNone : it->second.role;
  }
  return out;
}

}  // namespace

ColumnTypeFeature BuildColumnTypeFeatures(const TableData &table, std::span<const SpanPrediction> spans,
                                          std::span<const LinkResult> links) {
  std::map<std::string, RoleClaim> claims;
  for (size_t i = 0; i < spans.size() && i < links.size(); ++i) {
    const auto &s = spans[i];
    if (!IsColumnLabel(s.label) || links[i].ranked.empty()) continue;
    const LinkCandidate &c = links[i].chosen();
    if (c.kind != LinkCandidate::Kind::kColumn || !table.ColumnIndex(c.candidate_id)) continue;
    Claim(claims[c.candidate_id], s.label, s.probs[static_cast<size_t>(LabelIndex(s.label))]);
  }
  return FinishFeatures(table, claims);
}

ColumnTypeFeature GoldColumnTypeFeatures(const TableData &table, std::span<const TypedSpan> spans) {
  std::map<std::string, RoleClaim> claims;
  for (const auto &s : spans) {
    if (!IsColumnLabel(s.label) || !s.link_target || !table.ColumnIndex(*s.link_target)) continue;
    Claim(claims[*s.link_target], s.label, 1.0);
  }
  return FinishFeatures(table, claims);
}

ParserInputs GoldParserInputs(const TableData &table, std::span<const TypedSpan> spans) {
  ParserInputs in;
  for (const auto &s : spans) {
    if (!s.link_target) continue;
    if (s.label == EntityLabel::kLiteralValue) in.literals.push_back({s.range(), *s.link_target, 1.0});
    else if (IsColumnLabel(s.label)) in.columns.push_back({s.range(), *s.link_target, 1.0});
  }
  in.features = GoldColumnTypeFeatures(table, spans);
  return in;
}

ParserInputs PredictedParserInputs(const TableData &table, std::span<const SpanPrediction> spans,
                                   std::span<const std::optional<LinkResult>> links) {
  ParserInputs in;
  std::vector<SpanPrediction> linked_spans;
  std::vector<LinkResult> linked;
  for (size_t i = 0; i < spans.size() && i < links.size(); ++i) {
    if (!links[i] || links[i]->ranked.empty()) continue;
    const LinkCandidate &c = links[i]->chosen();
    double p = TopLinkProb(*links[i]);
    if (spans[i].label == EntityLabel::kLiteralValue && c.kind == LinkCandidate::Kind::kCell) {
      in.literals.push_back({spans[i].span, c.candidate_id, p});
    } else if (IsColumnLabel(spans[i].label) && c.kind == LinkCandidate::Kind::kColumn) {
      in.columns.push_back({spans[i].span, c.candidate_id, p});
    }
    linked_spans.push_back(spans[i]);
    linked.push_back(*links[i]);
  }
  in.features = BuildColumnTypeFeatures(table, linked_spans, linked);
  return in;
}

EncoderOutput Encode(const DatasetRecord &record, const TableData &table, const ParserInputs &inputs,
                     HarnessMode mode, bool dropout_active) {
  EncoderOutput enc;
  enc.table_name = table.table_name;
  std::set<std::string> query_norm;
  std::vector<std::string> lower;
  for (const auto &t : record.query_tokens) {
    lower.push_back(ToLower(t));
    std::string n = NormalizeSurface(t);
    if (!n.empty()) query_norm.insert(n);
  }
  std::set<uint64_t> qw;
  for (size_t i = 0; i < lower.size(); ++i) {
    qw.insert(WordKey("u:" + lower[i]));
    if (i + 1 < lower.size()) qw.insert(WordKey("b:" + lower[i] + " " + lower[i + 1]));
  }
  enc.query_words.assign(qw.begin(), qw.end());

  bool use_roles = (mode == HarnessMode::kColumnTypeFeature || mode == HarnessMode::kOracleFeature) && !dropout_active;
  std::map<std::string, double> linked;
  for (const auto &c : inputs.columns) {
    auto &p = linked[c.column_id];
    p = std::max(p, c.link_prob);
  }
  std::vector<size_t> table_cols;
  for (size_t c = 0; c < table.num_columns(); ++c) {
    if (mode == HarnessMode::kLinkedColumnsOnly && !linked.count(table.column_ids[c])) continue;
    table_cols.push_back(c);
  }

  // Distinct literal values, ordered by first mention.
  std::vector<LinkedLiteral> lits(inputs.literals.begin(), inputs.literals.end());
  std::stable_sort(lits.begin(), lits.end(),
                   [](const LinkedLiteral &a, const LinkedLiteral &b) { return a.span.begin < b.span.begin; });
  for (const auto &l : lits) {
    auto it = std::find_if(enc.literals.begin(), enc.literals.end(),
                           [&](const EncLiteral &e) { return e.value == l.value; });
    if (it != enc.literals.end()) {
      it->link_prob = std::max(it->link_prob, l.link_prob);
      continue;
    }
    EncLiteral e;
    e.value = l.value;
    e.span = l.span;
    e.numeric = ParseDecimal(l.value).has_value();
    e.link_prob = l.link_prob;
    enc.literals.push_back(std::move(e));
  }

  for (size_t c : table_cols) {
    EncColumn col;
    col.id = table.column_ids[c];
    col.type = table.column_types[c];
    auto words = SplitWhitespace(NormalizeSurface(table.column_display_names[c]));
    size_t hit = 0;
    for (const auto &w : words) {
      col.words.push_back(WordKey("d:" + w));
      hit += query_norm.count(w);
    }
    col.overlap_bucket = hit == 0 ? 0 : hit < words.size() ? 1 : 2;
    if (use_roles) {
      auto it = inputs.features.find(col.id);
      if (it != inputs.features.end()) col.role = it->second;
    }
    auto lk = linked.find(col.id);
    col.linked = lk != linked.end();
    col.link_prob = col.linked ? lk->second : 0.0;
    size_t enc_index = enc.columns.size();
    for (auto &lit : enc.literals) {
      bool holds = std::any_of(table.rows.begin(), table.rows.end(), [&](const std::vector<Cell> &row) {
        return !row[c].is_null && row[c].text == lit.value;
      });
      if (holds) {
        lit.columns.push_back(enc_index);
        col.has_literal = true;
      }
    }
    if (col.role != EntityLabel::kNone) enc.roles_mask |= 1u << LabelIndex(col.role);
    enc.columns.push_back(std::move(col));
  }
  return enc;
}

DecodeContext::DecodeContext(const Grammar &grammar, const EncoderOutput &enc, size_t max_steps)
    : grammar_(&grammar), enc_(&enc), max_steps_(max_steps), rule_cost_(grammar.size(), kInf) {
  // Least fixed point of cost(X) = min over rules of 1 + sum of rhs costs.
  for (const auto &r : grammar.rules()) nt_cost_.emplace(r.lhs, kInf);
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < grammar.size(); ++i) {
      size_t cost = 1;
      for (const auto &s : grammar.rule(i).rhs) cost = SatAdd(cost, SymbolCost(s));
      rule_cost_[i] = cost;
      auto &best = nt_cost_[grammar.rule(i).lhs];
      if (cost < best) {
        best = cost;
        changed = true;
      }
    }
  }
}

size_t DecodeContext::SymbolCost(const Symbol &s) const {
  switch (s.kind) {
    case SymbolKind::kTerminal: return 0;
    case SymbolKind::kCopySlot:
      switch (s.copy_kind()) {
        case CopyKind::kColumn: return enc_->columns.empty() ? kInf : 1;
        case CopyKind::kValue: return enc_->literals.empty() ? kInf : 1;
        case CopyKind::kTable: return 1;
      }
      return kInf;
    case SymbolKind::kNonTerminal: {
      auto it = nt_cost_.find(s.name);
      return it == nt_cost_.end() ? kInf : it->second;
    }
  }
  return kInf;
}

size_t DecodeContext::RemainingCost(const PartialTree &state) const {
  size_t total = 0;
  for (int id : state.pending()) total = SatAdd(total, SymbolCost(state.node(id).symbol));
  return total;
}

std::vector<DecoderAction> DecodeContext::LegalActions(const PartialTree &state) const {
  std::vector<DecoderAction> out;
  if (state.IsComplete()) return out;
  const Symbol &target = state.Target().symbol;
  size_t used = state.actions().size();
  size_t rest = RemainingCost(state);
  size_t own = SymbolCost(target);
  if (rest == kInf || own == kInf) return out;
  size_t others = rest - own;
  if (target.is_nonterminal()) {
    for (size_t id : grammar_->RulesFor(target.name)) {
      size_t total = SatAdd(SatAdd(used, rule_cost_[id]), others);
      if (total <= max_steps_) out.push_back(DecoderAction::Apply(id));
    }
    return out;
  }
  if (SatAdd(SatAdd(used, 1), others) > max_steps_) return out;
  switch (target.copy_kind()) {
    case CopyKind::kColumn:
      for (const auto &c : enc_->columns) out.push_back(DecoderAction::Copy(CopyKind::kColumn, c.id));
      break;
    case CopyKind::kValue:
      for (const auto &l : enc_->literals) out.push_back(DecoderAction::Copy(CopyKind::kValue, l.value));
      break;
    case CopyKind::kTable: out.push_back(DecoderAction::Copy(CopyKind::kTable, enc_->table_name)); break;
  }
  return out;
}

std::vector<double> OracleScorer::Logits(const PartialTree &state, const DecodeContext &,
                                         std::span<const DecoderAction> support) const {
  std::vector<double> out(support.size(), 0.0);
  const auto &hist = state.actions();
  if (hist.size() >= gold_.size() || !std::equal(hist.begin(), hist.end(), gold_.begin())) return out;
  const DecoderAction &next = gold_[hist.size()];
  if (std::find(support.begin(), support.end(), next) == support.end()) return out;
  for (size_t i = 0; i < support.size(); ++i) out[i] = support[i] == next ? 0.0 : kNegInf;
  return out;
}

LogLinearScorer::LogLinearScorer(const Grammar &grammar, size_t hash_dim, uint64_t seed)
    : hash_dim_(hash_dim), seed_(seed), weights_(hash_dim, 0.0) {
  for (const auto &r : grammar.rules()) rule_keys_.push_back(Hash64(r.ToString(), 0x7a1e));
}

namespace {

// Per-state context shared by all candidate actions.
struct StepInfo {
  uint64_t parent_rule = 0;
  uint64_t child_index = 0;
  uint64_t prev = 0;
  uint64_t clause = 0;
  uint64_t nesting = 0;
  std::set<std::string> copied_columns;
  std::set<std::string> copied_values;
  std::optional<std::string> cond_column;
};

}  // namespace

std::vector<std::vector<uint32_t>> LogLinearScorer::Features(const PartialTree &state, const DecodeContext &ctx,
                                                             std::span<const DecoderAction> support) const {
  const EncoderOutput &enc = ctx.enc();
  auto feat = [&](uint64_t tmpl, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = Mix(seed_ ^ (tmpl * 0x100000001b3ULL));
    h = Mix(h ^ a);
    h = Mix(h ^ b);
    h = Mix(h ^ c);
    return static_cast<uint32_t>(h % hash_dim_);
  };
  auto action_key = [&](const DecoderAction &a) -> uint64_t {
    if (a.kind == DecoderAction::Kind::kApplyRule) return rule_keys_[a.rule_id];
    return 1000 + static_cast<uint64_t>(a.kind);
  };

  StepInfo info;
  int target_id = state.TargetId();
  const auto &target = state.node(target_id);
  if (target.parent >= 0) {
    const auto &parent = state.node(target.parent);
    info.parent_rule = rule_keys_[static_cast<size_t>(parent.rule)];
    auto pos = std::find(parent.children.begin(), parent.children.end(), target_id);
    info.child_index = static_cast<uint64_t>(pos - parent.children.begin());
  }
  if (!state.actions().empty()) info.prev = action_key(state.actions().back());
  info.clause = static_cast<uint64_t>(target.clause);
  info.nesting = static_cast<uint64_t>(target.nesting);
  for (const auto &a : state.actions()) {
    if (a.kind == DecoderAction::Kind::kCopyColumn) info.copied_columns.insert(a.payload);
    if (a.kind == DecoderAction::Kind::kCopyValue) info.copied_values.insert(a.payload);
  }
  for (int id = target.parent; id >= 0; id = state.node(id).parent) {
    const auto &n = state.node(id);
    if (n.symbol.name == "Cond") {
      const auto &first = state.node(n.children.front());
      if (first.symbol.is_copy() && !first.payload.empty()) info.cond_column = first.payload;
      break;
    }
  }
  size_t unused_literals = 0;
  for (const auto &l : enc.literals) unused_literals += !info.copied_values.count(l.value);

  std::vector<std::vector<uint32_t>> out(support.size());
  for (size_t i = 0; i < support.size(); ++i) {
    const DecoderAction &a = support[i];
    auto &f = out[i];
    switch (a.kind) {
      case DecoderAction::Kind::kApplyRule: {
        uint64_t r = rule_keys_[a.rule_id];
        f.push_back(feat(1, r));
        f.push_back(feat(2, r, info.parent_rule, info.child_index));
        f.push_back(feat(3, r, info.prev));
        f.push_back(feat(4, r, info.nesting));
        for (uint64_t w : enc.query_words) f.push_back(feat(5, r, w));
        f.push_back(feat(6, r, enc.roles_mask));
        f.push_back(feat(7, r, std::min<size_t>(enc.literals.size(), 3)));
        f.push_back(feat(8, r, std::min<size_t>(unused_literals, 3), info.nesting));
        f.push_back(feat(9, r, enc.roles_mask, info.nesting));
        break;
      }
      case DecoderAction::Kind::kCopyColumn: {
        auto it = std::find_if(enc.columns.begin(), enc.columns.end(),
                               [&](const EncColumn &c) { return c.id == a.payload; });
        const EncColumn &c = *it;
        size_t col_index = static_cast<size_t>(it - enc.columns.begin());
        uint64_t role = static_cast<uint64_t>(LabelIndex(c.role));
        uint64_t type = static_cast<uint64_t>(c.type);
        bool unused_lit = std::any_of(enc.literals.begin(), enc.literals.end(), [&](const EncLiteral &l) {
          return !info.copied_values.count(l.value) &&
                 std::find(l.columns.begin(), l.columns.end(), col_index) != l.columns.end();
        });
        uint64_t copied = info.copied_columns.count(c.id);
        f.push_back(feat(20, info.clause, role));
        f.push_back(feat(21, info.parent_rule, role));
        f.push_back(feat(22, info.parent_rule, type));
        f.push_back(feat(23, info.clause, c.linked, static_cast<uint64_t>(ProbBucket(c.link_prob))));
        f.push_back(feat(24, info.clause, c.has_literal));
        f.push_back(feat(25, info.clause, static_cast<uint64_t>(c.overlap_bucket)));
        f.push_back(feat(26, info.clause, copied));
        f.push_back(feat(27, info.clause, info.nesting, role));
        f.push_back(feat(28, info.parent_rule, unused_lit, role));
        f.push_back(feat(29, info.parent_rule, copied, role));
        for (uint64_t d : c.words) {
          f.push_back(feat(30, info.parent_rule, d));
          for (uint64_t w : enc.query_words) f.push_back(feat(31, info.clause, w, d));
        }
        break;
      }
      case DecoderAction::Kind::kCopyValue: {
        const EncLiteral *lit = nullptr;
        size_t rank = 0;
        for (const auto &l : enc.literals) {
          if (l.value == a.payload) {
            lit = &l;
            break;
          }
          rank += !info.copied_values.count(l.value);
        }
        bool in_col = false;
        if (info.cond_column) {
          for (size_t ci : lit->columns) in_col |= enc.columns[ci].id == *info.cond_column;
        }
        uint64_t used = info.copied_values.count(a.payload);
        f.push_back(feat(40, in_col));
        f.push_back(feat(41, used));
        f.push_back(feat(42, std::min<size_t>(rank, 2), used));
        f.push_back(feat(43, info.parent_rule, lit->numeric));
        f.push_back(feat(44, static_cast<uint64_t>(ProbBucket(lit->link_prob))));
        f.push_back(feat(45, info.nesting, in_col, used));
        break;
      }
      case DecoderAction::Kind::kCopyTable: f.push_back(feat(50)); break;
    }
  }
  return out;
}

std::vector<double> LogLinearScorer::Logits(const PartialTree &state, const DecodeContext &ctx,
                                            std::span<const DecoderAction> support) const {
  auto feats = Features(state, ctx, support);
  std::vector<double> out(support.size(), 0.0);
  for (size_t i = 0; i < support.size(); ++i) {
    for (uint32_t f : feats[i]) out[i] += weights_[f];
  }
  return out;
}

json LogLinearScorer::ToJson() const {
  json nz = json::array();
  for (size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0) nz.push_back({i, weights_[i]});
  }
  return json{{"format", "t2sql.nsp"},
              {"version", 1},
              {"hash_dim", hash_dim_},
              {"seed", seed_},
              {"rule_keys", rule_keys_},
              {"weights", nz}};
}

LogLinearScorer LogLinearScorer::FromJson(const json &j, const Grammar &grammar) {
  if (j.value("format", "") != "t2sql.nsp") throw Error("not a parser model artifact");
  if (j.value("version", 0) != 1) throw Error("unsupported parser model version");
  LogLinearScorer s(grammar, j.at("hash_dim").get<size_t>(), j.at("seed").get<uint64_t>());
  if (j.at("rule_keys").get<std::vector<uint64_t>>() != s.rule_keys_) {
    throw Error("parser artifact was trained with a different grammar");
  }
  for (const auto &e : j.at("weights")) {
    size_t i = e.at(0).get<size_t>();
    if (i >= s.weights_.size()) throw Error("parser weight index out of range");
    s.weights_[i] = e.at(1).get<double>();
  }
  return s;
}

StepDistribution StepScores(const PartialTree &state, const DecodeContext &ctx, const ActionScorer &scorer) {
  StepDistribution d;
  d.actions = ctx.LegalActions(state);
  if (d.actions.empty()) {
    throw DeadEnd(state.IsComplete() ? std::string("<complete>") : state.Target().symbol.ToString());
  }
  d.probs = scorer.Logits(state, ctx, d.actions);
  bool any_finite = std::any_of(d.probs.begin(), d.probs.end(), [](double x) { return std::isfinite(x); });
  if (!any_finite) std::fill(d.probs.begin(), d.probs.end(), 0.0);
  SoftmaxInPlace(d.probs);
  return d;
}

namespace {

struct Hyp {
  PartialTree state;
  double log_prob = 0;
  std::vector<std::string> keys;  // serialized actions, for tie-breaks
};

bool Better(double lp_a, const std::vector<std::string> &ka, double lp_b, const std::vector<std::string> &kb) {
  if (lp_a != lp_b) return lp_a > lp_b;
  return ka < kb;
}

Hypothesis Finish(const Hyp &h) { return {h.state.actions(), h.log_prob, h.state.ToSqlTree()}; }

}  // namespace

Hypothesis DecodeGreedy(const DecodeContext &ctx, const ActionScorer &scorer) {
  PartialTree state(ctx.grammar());
  double lp = 0;
  while (!state.IsComplete()) {
    if (state.actions().size() >= ctx.max_steps()) throw NoCompleteDerivation(ctx.max_steps());
    StepDistribution d = StepScores(state, ctx, scorer);
    size_t best = 0;
    std::string best_key = d.actions[0].ToString(ctx.grammar());
    for (size_t i = 1; i < d.actions.size(); ++i) {
      if (d.probs[i] < d.probs[best]) continue;
      std::string key = d.actions[i].ToString(ctx.grammar());
      if (d.probs[i] > d.probs[best] || key < best_key) {
        best = i;
        best_key = std::move(key);
      }
    }
    lp += std::log(d.probs[best]);
    state.Apply(d.actions[best]);
  }
  return {state.actions(), lp, state.ToSqlTree()};
}

std::vector<Hypothesis> DecodeBeam(const DecodeContext &ctx, const ActionScorer &scorer, size_t beam_size) {
  if (beam_size == 0) throw Error("beam size must be at least 1");
  std::vector<Hyp> beam;
  beam.push_back({PartialTree(ctx.grammar()), 0.0, {}});
  std::vector<Hyp> finished;
  struct Cand {
    size_t hyp;
    DecoderAction action;
    double log_prob;
    std::vector<std::string> keys;
  };
  while (!beam.empty()) {
    std::vector<Cand> cands;
    for (size_t h = 0; h < beam.size(); ++h) {
      if (beam[h].state.actions().size() >= ctx.max_steps()) continue;
      StepDistribution d = StepScores(beam[h].state, ctx, scorer);
      for (size_t i = 0; i < d.actions.size(); ++i) {
        if (d.probs[i] <= 0) continue;
        auto keys = beam[h].keys;
        keys.push_back(d.actions[i].ToString(ctx.grammar()));
        cands.push_back({h, d.actions[i], beam[h].log_prob + std::log(d.probs[i]), std::move(keys)});
      }
    }
    size_t keep = std::min(beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Cand &a, const Cand &b) { return Better(a.log_prob, a.keys, b.log_prob, b.keys); });
    std::vector<Hyp> next;
    for (size_t i = 0; i < keep; ++i) {
      Hyp h{beam[cands[i].hyp].state, cands[i].log_prob, std::move(cands[i].keys)};
      h.state.Apply(cands[i].action);
      if (h.state.IsComplete()) finished.push_back(std::move(h));
      else next.push_back(std::move(h));
    }
    beam = std::move(next);
  }
  std::vector<Hypothesis> out;
  if (finished.empty()) throw NoCompleteDerivation(ctx.max_steps());
  std::sort(finished.begin(), finished.end(),
            [](const Hyp &a, const Hyp &b) { return Better(a.log_prob, a.keys, b.log_prob, b.keys); });
  for (const auto &h : finished) out.push_back(Finish(h));
  if (beam_size > 1) {
    Hypothesis g = DecodeGreedy(ctx, scorer);
    bool present = std::any_of(out.begin(), out.end(), [&](const Hypothesis &h) { return h.actions == g.actions; });
    if (!present) {
      std::vector<std::string> gk;
      for (const auto &a : g.actions) gk.push_back(a.ToString(ctx.grammar()));
      auto pos = std::find_if(out.begin(), out.end(), [&](const Hypothesis &h) {
        std::vector<std::string> hk;
        for (const auto &a : h.actions) hk.push_back(a.ToString(ctx.grammar()));
        return Better(g.log_prob, gk, h.log_prob, hk);
      });
      out.insert(pos, std::move(g));
    }
  }
  if (out.size() > beam_size) out.resize(beam_size);
  return out;
}

double NspLossAndGradient(const LogLinearScorer &scorer, const DecodeContext &ctx,
                          std::span<const DecoderAction> gold, std::vector<double> *grad) {
  PartialTree state(ctx.grammar());
  double loss = 0;
  for (const auto &g : gold) {
    auto support = ctx.LegalActions(state);
    auto pos = std::find(support.begin(), support.end(), g);
    if (pos == support.end()) throw Error("gold action " + g.ToString(ctx.grammar()) + " is not legal");
    size_t gi = static_cast<size_t>(pos - support.begin());
    auto feats = scorer.Features(state, ctx, support);
    std::vector<double> z(support.size(), 0.0);
    for (size_t i = 0; i < support.size(); ++i) {
      for (uint32_t f : feats[i]) z[i] += scorer.weights()[f];
    }
    double z_gold = z[gi];
    loss += SoftmaxInPlace(z) - z_gold;
    if (grad) {
      for (size_t i = 0; i < support.size(); ++i) {
        double dz = z[i] - (i == gi ? 1.0 : 0.0);
        for (uint32_t f : feats[i]) (*grad)[f] += dz;
      }
    }
    state.Apply(g);
  }
  return loss;
}

namespace {

struct Prepared {
  const NspExample *ex;
  std::vector<DecoderAction> gold;
  std::unique_ptr<EncoderOutput> enc, enc_dropped;
};

std::vector<Prepared> Prepare(const Grammar &grammar, std::span<const NspExample> data, HarnessMode mode,
                              size_t max_steps, std::vector<std::string> *unreachable) {
  std::vector<Prepared> out;
  for (const auto &ex : data) {
    Prepared p{&ex, {}, nullptr, nullptr};
    try {
      p.gold = OracleActions(ex.gold, grammar);
    } catch (const RuleNotInGrammar &) {
      if (unreachable) unreachable->push_back(ex.record->record_id);
      continue;
    }
    p.enc = std::make_unique<EncoderOutput>(Encode(*ex.record, *ex.table, ex.inputs, mode, false));
    p.enc_dropped = std::make_unique<EncoderOutput>(Encode(*ex.record, *ex.table, ex.inputs, mode, true));
    DecodeContext ctx(grammar, *p.enc, max_steps);
    PartialTree state(grammar);
    bool ok = p.gold.size() <= max_steps;
    for (size_t i = 0; ok && i < p.gold.size(); ++i) {
      auto legal = ctx.LegalActions(state);
      ok = std::find(legal.begin(), legal.end(), p.gold[i]) != legal.end();
      if (ok) state.Apply(p.gold[i]);
    }
    if (!ok) {
      if (unreachable) unreachable->push_back(ex.record->record_id);
      continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

double MeanLoss(const LogLinearScorer &scorer, const Grammar &grammar, const std::vector<Prepared> &data,
                size_t max_steps) {
  double sum = 0;
  for (const auto &p : data) {
    DecodeContext ctx(grammar, *p.enc, max_steps);
    sum += NspLossAndGradient(scorer, ctx, p.gold, nullptr);
  }
  return data.empty() ? 0.0 : sum / static_cast<double>(data.size());
}

}  // namespace

double MeanNspLoss(const LogLinearScorer &scorer, const Grammar &grammar, std::span<const NspExample> data,
                   HarnessMode mode, size_t max_steps) {
  return MeanLoss(scorer, grammar, Prepare(grammar, data, mode, max_steps, nullptr), max_steps);
}

NspTrainReport TrainNsp(LogLinearScorer &scorer, const Grammar &grammar, std::span<const NspExample> train,
                        const NspTrainConfig &config) {
  NspTrainReport report;
  auto data = Prepare(grammar, train, config.mode, config.max_steps, &report.unreachable_ids);
  report.unreachable = report.unreachable_ids.size();
  report.trained = data.size();
  if (data.empty()) throw EmptyTrainingSet("nsp");
  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution drop(config.feature_dropout);
  std::vector<double> grad(scorer.weights().size());
  Adam adam(grad.size(), config.lr);
  report.loss_curve.push_back(MeanLoss(scorer, grammar, data, config.max_steps));
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = ShuffledIndices(data.size(), rng);
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      std::fill(grad.begin(), grad.end(), 0.0);
      size_t end = std::min(order.size(), start + config.batch_size);
      for (size_t k = start; k < end; ++k) {
        const Prepared &p = data[order[k]];
        bool dropped = drop(rng);
        DecodeContext ctx(grammar, dropped ? *p.enc_dropped : *p.enc, config.max_steps);
        NspLossAndGradient(scorer, ctx, p.gold, &grad);
      }
      for (double &g : grad) g /= static_cast<double>(end - start);
      adam.Step(scorer.weights(), grad);
    }
    report.loss_curve.push_back(MeanLoss(scorer, grammar, data, config.max_steps));
  }
  return report;
}

}  // namespace t2sql
