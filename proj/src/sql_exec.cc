#include "t2sql/sql_exec.h"

#include <algorithm>
#include <map>

#include "t2sql/errors.h"
#include "t2sql/sql_parser.h"
#include "t2sql/text.h"

namespace t2sql {

namespace {

// Total order used by sorting and min/max: null < number < string.
int CompareForSort(const Datum &a, const Datum &b) {
  if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind) ? -1 : 1;
  switch (a.kind) {
    case Datum::Kind::kNull: return 0;
    case Datum::Kind::kNumber: return a.number < b.number ? -1 : a.number > b.number ? 1 : 0;
    case Datum::Kind::kString: return a.text.compare(b.text) < 0 ? -1 : a.text == b.text ? 0 : 1;
  }
  return 0;
}

bool DatumLess(const Datum &a, const Datum &b) { return CompareForSort(a, b) < 0; }

class Executor {
 public:
  explicit Executor(const TableData &table) : table_(table) {}

  Denotation Run(const Stmt &s) {
    Validate(s);
    std::vector<CondPlan> plans;
    if (s.where) {
      for (const auto &c : s.where->conds) plans.push_back(Plan(c));
    }
    std::vector<size_t> rows;
    for (size_t r = 0; r < table_.rows.size(); ++r) {
      bool keep = true;
      for (const auto &p : plans) {
        if (!Matches(p, r)) {
          keep = false;
          break;
        }
      }
      if (keep) rows.push_back(r);
    }

    bool aggregate = s.group.has_value() || (s.order && s.order->key.agg);
    for (const auto &item : s.select) aggregate |= item.agg.has_value();

    std::vector<std::vector<size_t>> groups;
    if (s.group) {
      size_t gc = Col(s.group->column);
      std::vector<Datum> keys;
      for (size_t r : rows) {
        Datum key = CellDatum(r, gc);
        auto it = std::find(keys.begin(), keys.end(), key);
        if (it == keys.end()) {
          keys.push_back(key);
          groups.push_back({r});
        } else {
          groups[static_cast<size_t>(it - keys.begin())].push_back(r);
        }
      }
    } else if (aggregate) {
      groups.push_back(rows);
    } else {
      for (size_t r : rows) groups.push_back({r});
    }

    struct OutRow {
      std::vector<Datum> values;
      Datum key;
    };
    std::vector<OutRow> out;
    for (const auto &g : groups) {
      std::optional<size_t> rep = Representative(s, g);
      OutRow row;
      for (const auto &item : s.select) row.values.push_back(EvalItem(item, g, rep));
      if (s.order) row.key = EvalItem(s.order->key, g, rep);
      out.push_back(std::move(row));
    }
    if (s.order) {
      bool desc = s.order->dir == SortDir::kDesc;
      std::stable_sort(out.begin(), out.end(), [desc](const OutRow &a, const OutRow &b) {
        int c = CompareForSort(a.key, b.key);
        return desc ? c > 0 : c < 0;
      });
      if (s.order->limit && out.size() > static_cast<size_t>(*s.order->limit)) {
        out.resize(static_cast<size_t>(*s.order->limit));
      }
    }
    Denotation d;
    d.ordered = s.order.has_value();
    for (auto &row : out) d.rows.push_back(std::move(row.values));
    return d;
  }

 private:
  struct CondPlan {
    const Cond *cond;
    size_t column;
    std::vector<Datum> rhs;  // one value for comparisons, a set for membership
    bool rhs_has_null = false;
    bool empty_scalar = false;  // scalar subquery returned no rows
  };

  size_t Col(const ColRef &c) const {
    auto idx = table_.ColumnIndex(c.id);
    if (!idx) throw UnknownColumn(c.id);
    return *idx;
  }

  void Validate(const Stmt &s) const {
    for (const auto &item : s.select) {
      if (!item.is_star()) Col(item.column());
    }
    if (s.where) {
      for (const auto &c : s.where->conds) Col(c.column);
    }
    if (s.group) Col(s.group->column);
    if (s.order && !s.order->key.is_star()) Col(s.order->key.column());
  }

  Datum CellDatum(size_t row, size_t col) const {
    const Cell &cell = table_.rows[row][col];
    if (cell.is_null) return Datum::Null();
    if (table_.column_types[col] == ColumnType::kNumber) return Datum::Number(cell.number);
    return Datum::String(cell.text);
  }

  bool NumericColumn(size_t col) const { return table_.column_types[col] == ColumnType::kNumber; }

  // Literal typed against the column it is compared with.
  Datum LiteralDatum(const Value &v, size_t col, const Cond &c) const {
    if (NumericColumn(col)) {
      if (!v.is_number()) throw TypeMismatch("non-numeric literal '" + v.text() + "' against numeric column " + c.column.id);
      return Datum::Number(v.number());
    }
    return Datum::String(v.text());
  }

  // Subquery output datum coerced for comparison with the column.
  Datum CoerceForColumn(const Datum &d, size_t col, const Cond &c) const {
    if (d.is_null()) return d;
    if (NumericColumn(col)) {
      if (d.kind == Datum::Kind::kNumber) return d;
      auto v = ParseDecimal(d.text);
      if (!v) throw TypeMismatch("string subquery result against numeric column " + c.column.id);
      return Datum::Number(*v);
    }
    if (d.kind == Datum::Kind::kNumber) return Datum::String(FormatNumber(d.number));
    return d;
  }

  CondPlan Plan(const Cond &c) {
    CondPlan p{&c, Col(c.column), {}, false, false};
    bool membership = c.op == CompOp::kIn || c.op == CompOp::kNotIn;
    if (const auto *v = std::get_if<Value>(&c.rhs)) {
      if (membership) throw TypeMismatch("membership test needs a list or subquery");
      p.rhs.push_back(LiteralDatum(*v, p.column, c));
    } else if (const auto *list = std::get_if<ValueList>(&c.rhs)) {
      if (!membership) throw TypeMismatch("comparison against a value list");
      for (const auto &v : *list) p.rhs.push_back(LiteralDatum(v, p.column, c));
    } else {
      Denotation sub = Executor(table_).Run(*std::get<Subquery>(c.rhs));
      if (membership) {
        for (const auto &row : sub.rows) {
          if (row.size() != 1) throw NonScalarSubquery("membership subquery must return one column");
          Datum d = CoerceForColumn(row[0], p.column, c);
          if (d.is_null()) p.rhs_has_null = true;
          else p.rhs.push_back(std::move(d));
        }
      } else if (sub.rows.empty()) {
        p.empty_scalar = true;
      } else {
        if (!sub.is_scalar()) {
          throw NonScalarSubquery(std::to_string(sub.rows.size()) + " rows");
        }
        p.rhs.push_back(CoerceForColumn(sub.rows[0][0], p.column, c));
      }
    }
    return p;
  }

  bool Matches(const CondPlan &p, size_t row) const {
    Datum cell = CellDatum(row, p.column);
    CompOp op = p.cond->op;
    // Membership in an empty set is decided without looking at the cell.
    if ((op == CompOp::kIn || op == CompOp::kNotIn) && p.rhs.empty() && !p.rhs_has_null) {
      return op == CompOp::kNotIn;
    }
    if (cell.is_null()) return false;
    if (op == CompOp::kIn || op == CompOp::kNotIn) {
      bool member = std::any_of(p.rhs.begin(), p.rhs.end(),
                                [&](const Datum &d) { return CompareForSort(cell, d) == 0; });
      if (op == CompOp::kIn) return member;
      return !member && !p.rhs_has_null;
    }
    if (p.empty_scalar || p.rhs.empty() || p.rhs[0].is_null()) return false;
    int c = CompareForSort(cell, p.rhs[0]);
    switch (op) {
      case CompOp::kEq: return c == 0;
      case CompOp::kNe: return c != 0;
      case CompOp::kLt: return c < 0;
      case CompOp::kLe: return c <= 0;
      case CompOp::kGt: return c > 0;
      case CompOp::kGe: return c >= 0;
      default: return false;
    }
  }

  // Row supplying bare columns in an aggregated group: the row holding the
  // extreme when the select list has exactly one min/max, else the first.
  std::optional<size_t> Representative(const Stmt &s, const std::vector<size_t> &g) const {
    if (g.empty()) return std::nullopt;
    const SelectItem *extreme = nullptr;
    int n_extreme = 0;
    for (const auto &item : s.select) {
      if (item.agg && (*item.agg == AggOp::kMin || *item.agg == AggOp::kMax)) {
        extreme = &item;
        ++n_extreme;
      }
    }
    if (n_extreme != 1) return g.front();
    size_t col = Col(extreme->column());
    bool want_max = *extreme->agg == AggOp::kMax;
    std::optional<size_t> best;
    for (size_t r : g) {
      Datum d = CellDatum(r, col);
      if (d.is_null()) continue;
      if (!best) {
        best = r;
        continue;
      }
      int c = CompareForSort(d, CellDatum(*best, col));
      if (want_max ? c > 0 : c < 0) best = r;
    }
    return best ? best : std::optional<size_t>(g.front());
  }

  Datum EvalItem(const SelectItem &item, const std::vector<size_t> &g,
                 std::optional<size_t> rep) const {
    if (!item.agg) {
      if (item.is_star()) throw UnsupportedConstruct("bare * in projection");
      if (!rep) return Datum::Null();
      return CellDatum(*rep, Col(item.column()));
    }
    AggOp op = *item.agg;
    if (item.is_star()) return Datum::Number(static_cast<double>(g.size()));
    size_t col = Col(item.column());
    std::vector<Datum> values;
    for (size_t r : g) {
      Datum d = CellDatum(r, col);
      if (!d.is_null()) values.push_back(std::move(d));
    }
    switch (op) {
      case AggOp::kCount: return Datum::Number(static_cast<double>(values.size()));
      case AggOp::kSum:
      case AggOp::kAvg: {
        if (!NumericColumn(col)) throw TypeMismatch(std::string(AggName(op)) + " over non-numeric column " + item.column().id);
        if (values.empty()) return Datum::Null();
        double sum = 0;
        for (const auto &d : values) sum += d.number;
        return Datum::Number(op == AggOp::kSum ? sum : sum / static_cast<double>(values.size()));
      }
      case AggOp::kMin:
      case AggOp::kMax: {
        if (values.empty()) return Datum::Null();
        auto it = op == AggOp::kMin ? std::min_element(values.begin(), values.end(), DatumLess)
                                    : std::max_element(values.begin(), values.end(), DatumLess);
        return *it;
      }
    }
    return Datum::Null();
  }

  const TableData &table_;
};

}  // namespace

std::string Datum::ToString() const {
  switch (kind) {
    case Kind::kNull: return "";
    case Kind::kNumber: return FormatNumber(number);
    case Kind::kString: return text;
  }
  return "";
}

std::vector<std::string> Denotation::Flatten() const {
  std::vector<std::string> out;
  for (const auto &row : rows) {
    for (const auto &d : row) out.push_back(NormalizeAnswer(d.ToString()));
  }
  return out;
}

std::string NormalizeAnswer(const std::string &s) {
  if (auto v = ParseDecimal(s)) return FormatNumber(*v);
  return s;
}

Denotation Execute(const SqlTree &tree, const TableData &table) {
  return Executor(table).Run(tree.root);
}

bool DenotationEqual(const Denotation &a, std::span<const std::string> gold) {
  std::vector<std::string> got = a.Flatten();
  std::vector<std::string> want;
  for (const auto &g : gold) want.push_back(NormalizeAnswer(g));
  if (got.size() != want.size()) return false;
  if (!a.ordered) {
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
  }
  return got == want;
}

}  // namespace t2sql
