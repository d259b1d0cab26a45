#include "t2sql/dataset.h"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "t2sql/errors.h"
#include "t2sql/sql_parser.h"
#include "t2sql/text.h"

namespace t2sql {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kColumnTypeNames = {"number", "string", "date"};

Cell MakeCell(const std::string &text, bool is_null, ColumnType type, size_t row, size_t col) {
  Cell cell;
  cell.text = text;
  cell.is_null = is_null || text.empty();
  if (cell.is_null) return cell;
  if (type == ColumnType::kNumber) {
    auto v = ParseDecimal(text);
    if (!v) throw TypeCoercionFailure(row, col, text);
    cell.number = *v;
  } else if (type == ColumnType::kDate) {
    static const std::regex kDate("^[0-9]{4}(-[0-9]{2}(-[0-9]{2})?)?$");
    if (!std::regex_match(text, kDate)) throw TypeCoercionFailure(row, col, text);
  }
  return cell;
}

std::string JsonScalarText(const json &v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

// RFC 4180 style reader: quoted fields, doubled quotes, embedded newlines.
std::vector<std::vector<std::string>> ReadCsv(std::istream &in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get();
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field.push_back(c);
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

void CheckUniqueIds(const TableData &t) {
  std::set<std::string> seen;
  for (const auto &id : t.column_ids) {
    if (!IsColumnId(id)) throw Error("table " + t.table_id + ": invalid column id '" + id + "'");
    if (!seen.insert(id).second) throw Error("table " + t.table_id + ": duplicate column id '" + id + "'");
  }
}

template <typename T>
T Field(const json &j, const char *name, size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw SchemaViolation(line, name, "missing");
  try {
    return it->get<T>();
  } catch (const json::exception &) {
    throw SchemaViolation(line, name, "wrong type");
  }
}

}  // namespace

std::string_view ColumnTypeName(ColumnType type) {
  return kColumnTypeNames[static_cast<int>(type)];
}

std::optional<ColumnType> ColumnTypeFromName(std::string_view name) {
  for (size_t i = 0; i < kColumnTypeNames.size(); ++i) {
    if (kColumnTypeNames[i] == name) return static_cast<ColumnType>(i);
  }
  return std::nullopt;
}

std::optional<size_t> TableData::ColumnIndex(std::string_view id) const {
  for (size_t i = 0; i < column_ids.size(); ++i) {
    if (column_ids[i] == id) return i;
  }
  return std::nullopt;
}

std::vector<std::string> TableData::DistinctCells() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto &row : rows) {
    for (const auto &cell : row) {
      if (!cell.is_null && seen.insert(cell.text).second) out.push_back(cell.text);
    }
  }
  return out;
}

bool TableData::HasCell(std::string_view s) const {
  for (const auto &row : rows) {
    for (const auto &cell : row) {
      if (!cell.is_null && cell.text == s) return true;
    }
  }
  return false;
}

DatasetRecord ParseRecordJson(const json &j, size_t line) {
  if (!j.is_object()) throw SchemaViolation(line, "<line>", "not an object");
  DatasetRecord r;
  r.record_id = Field<std::string>(j, "id", line);
  r.table_id = Field<std::string>(j, "tbl", line);
  r.query_tokens = Field<std::vector<std::string>>(j, "question", line);
  if (r.query_tokens.empty()) throw SchemaViolation(line, "question", "empty");
  auto sql = Field<json>(j, "sql", line);
  if (!sql.is_array()) throw SchemaViolation(line, "sql", "not an array");
  for (const auto &tok : sql) {
    if (!tok.is_array() || tok.size() != 2 || !tok[0].is_string() || !tok[1].is_string()) {
      throw SchemaViolation(line, "sql", "token must be [kind, text]");
    }
    auto kind = SqlTokenKindFromName(tok[0].get<std::string>());
    if (!kind) throw SchemaViolation(line, "sql", "unknown token kind " + tok[0].get<std::string>());
    r.gold_sql_tokens.push_back({*kind, tok[1].get<std::string>()});
  }
  auto align = Field<json>(j, "align", line);
  if (!align.is_array()) throw SchemaViolation(line, "align", "not an array");
  for (const auto &a : align) {
    if (!a.is_array() || a.size() != 2 || !a[0].is_array() || a[0].size() != 2 ||
        !a[0][0].is_number_integer() || !a[0][1].is_number_integer() ||
        !a[1].is_number_integer()) {
      throw SchemaViolation(line, "align", "entry must be [[start, end], sql_index]");
    }
    long long start = a[0][0], end = a[0][1], sql_index = a[1];
    long long nq = static_cast<long long>(r.query_tokens.size());
    long long ns = static_cast<long long>(r.gold_sql_tokens.size());
    if (start < 0 || end < start || end >= nq) {
      throw IndexOutOfRange(line, "align",
                            "query range [" + std::to_string(start) + "," + std::to_string(end) +
                                "] with " + std::to_string(nq) + " tokens");
    }
    if (sql_index < 0 || sql_index >= ns) {
      throw IndexOutOfRange(line, "align",
                            "sql index " + std::to_string(sql_index) + " with " +
                                std::to_string(ns) + " tokens");
    }
    r.alignments.push_back({{static_cast<size_t>(start), static_cast<size_t>(end) + 1},
                            static_cast<size_t>(sql_index)});
  }
  r.gold_answer = Field<std::vector<std::string>>(j, "answer", line);
  return r;
}

json RecordToJson(const DatasetRecord &r) {
  json sql = json::array();
  for (const auto &t : r.gold_sql_tokens) sql.push_back({SqlTokenKindName(t.kind), t.text});
  json align = json::array();
  for (const auto &a : r.alignments) {
    align.push_back({{a.query.begin, a.query.end - 1}, a.sql_index});
  }
  return json{{"id", r.record_id}, {"tbl", r.table_id}, {"question", r.query_tokens},
              {"sql", sql},       {"align", align},    {"answer", r.gold_answer}};
}

std::vector<DatasetRecord> LoadDataset(const fs::path &path, std::string_view split) {
  fs::path file = path;
  if (fs::is_directory(path)) file = path / (std::string(split) + ".jsonl");
  std::ifstream in(file);
  if (!in) throw MissingFile(file.string());
  std::vector<DatasetRecord> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error &e) {
      throw SchemaViolation(line_no, "<json>", e.what());
    }
    out.push_back(ParseRecordJson(j, line_no));
  }
  return out;
}

TableData TableFromJson(const json &j, std::string table_id) {
  TableData t;
  t.table_id = std::move(table_id);
  t.table_name = j.value("name", std::string("w"));
  if (!j.contains("columns") || !j["columns"].is_array()) throw Error("table " + t.table_id + ": missing columns");
  for (const auto &c : j["columns"]) {
    t.column_ids.push_back(c.at("id").get<std::string>());
    t.column_display_names.push_back(c.value("display", c.at("id").get<std::string>()));
    auto type = ColumnTypeFromName(c.value("type", std::string("string")));
    if (!type) throw Error("table " + t.table_id + ": unknown column type");
    t.column_types.push_back(*type);
  }
  CheckUniqueIds(t);
  const auto &rows = j.contains("rows") ? j["rows"] : json::array();
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto &row = rows[r];
    if (!row.is_array() || row.size() != t.num_columns()) {
      throw RaggedRow(r, row.is_array() ? row.size() : 0, t.num_columns());
    }
    std::vector<Cell> cells;
    for (size_t c = 0; c < row.size(); ++c) {
      cells.push_back(MakeCell(JsonScalarText(row[c]), row[c].is_null(), t.column_types[c], r, c));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

json TableToJson(const TableData &t) {
  json cols = json::array();
  for (size_t i = 0; i < t.num_columns(); ++i) {
    cols.push_back({{"id", t.column_ids[i]},
                    {"display", t.column_display_names[i]},
                    {"type", ColumnTypeName(t.column_types[i])}});
  }
  json rows = json::array();
  for (const auto &row : t.rows) {
    json r = json::array();
    for (const auto &cell : row) {
      if (cell.is_null) r.push_back(nullptr);
      else r.push_back(cell.text);
    }
    rows.push_back(std::move(r));
  }
  return json{{"name", t.table_name}, {"columns", cols}, {"rows", rows}};
}

TableData LoadTable(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw MissingFile(path.string());
  std::string table_id = path.stem().string();
  if (path.extension() == ".csv") {
    fs::path sidecar = path.parent_path() / (table_id + ".types.json");
    std::ifstream meta_in(sidecar);
    if (!meta_in) throw MissingFile(sidecar.string());
    json meta = json::parse(meta_in);
    auto grid = ReadCsv(in);
    if (grid.empty()) throw Error("table " + table_id + ": missing header row");
    TableData t;
    t.table_id = table_id;
    t.table_name = meta.value("name", std::string("w"));
    t.column_display_names = grid[0];
    size_t n = t.column_display_names.size();
    auto types = meta.at("types").get<std::vector<std::string>>();
    if (types.size() != n) throw Error("table " + table_id + ": type count does not match header");
    for (const auto &name : types) {
      auto type = ColumnTypeFromName(name);
      if (!type) throw Error("table " + table_id + ": unknown column type " + name);
      t.column_types.push_back(*type);
    }
    if (meta.contains("ids")) {
      t.column_ids = meta["ids"].get<std::vector<std::string>>();
      if (t.column_ids.size() != n) throw Error("table " + table_id + ": id count does not match header");
    } else {
      for (size_t i = 0; i < n; ++i) t.column_ids.push_back("c" + std::to_string(i + 1));
    }
    CheckUniqueIds(t);
    for (size_t r = 1; r < grid.size(); ++r) {
      const auto &row = grid[r];
      if (row.size() == 1 && row[0].empty()) continue;  // blank line
      if (row.size() != n) throw RaggedRow(r - 1, row.size(), n);
      std::vector<Cell> cells;
      for (size_t c = 0; c < n; ++c) cells.push_back(MakeCell(row[c], false, t.column_types[c], r - 1, c));
      t.rows.push_back(std::move(cells));
    }
    return t;
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw Error("table " + table_id + ": " + e.what());
  }
  return TableFromJson(j, table_id);
}

const TableData &TableStore::Get(const std::string &table_id) {
  auto it = cache_.find(table_id);
  if (it != cache_.end()) return *it->second;
  fs::path json_path = dir_ / (table_id + ".json");
  fs::path csv_path = dir_ / (table_id + ".csv");
  fs::path path = fs::exists(json_path) ? json_path : csv_path;
  if (!fs::exists(path)) throw MissingFile(json_path.string());
  auto table = std::make_shared<const TableData>(LoadTable(path));
  return *cache_.emplace(table_id, std::move(table)).first->second;
}

void TableStore::Put(TableData table) {
  std::string id = table.table_id;
  cache_[id] = std::make_shared<const TableData>(std::move(table));
}

namespace {

enum class AlignKind { kColumn, kLiteral, kAgg };

struct Candidate {
  size_t sql_index;
  AlignKind kind;
  EntityLabel label;
  std::optional<std::string> target;
};

std::optional<std::string> MatchCell(const TableData &table, const std::string &literal) {
  if (table.HasCell(literal)) return literal;
  auto v = ParseDecimal(literal);
  if (!v) return std::nullopt;
  for (const auto &row : table.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      const Cell &cell = row[c];
      if (cell.is_null) continue;
      auto cv = ParseDecimal(cell.text);
      if (cv && *cv == *v) return cell.text;
    }
  }
  return std::nullopt;
}

}  // namespace

AnnotationResult DeriveAnnotations(const DatasetRecord &record, const TableData &table,
                                   const SqlTree &gold_tree) {
  ParseResult parsed = ParseSqlWithRoles(record.gold_sql_tokens);
  if (!(parsed.tree == gold_tree)) {
    throw Error("record " + record.record_id + ": gold_tree is not the parse of its SQL tokens");
  }
  AnnotationResult result;
  // Alignments grouped by query range, in first-seen order.
  std::vector<TokenRange> order;
  std::map<TokenRange, std::vector<Candidate>> by_range;
  for (const auto &a : record.alignments) {
    const SqlToken &tok = record.gold_sql_tokens[a.sql_index];
    const TokenRole &role = parsed.roles[a.sql_index];
    Candidate cand{a.sql_index, AlignKind::kColumn, EntityLabel::kNone, std::nullopt};
    auto report = [&](std::string why) {
      result.unalignable.push_back({a.sql_index, a.query, std::move(why)});
    };
    if (tok.kind == SqlTokenKind::kColumn) {
      switch (role.clause) {
        case Clause::kSelect: cand.label = EntityLabel::kSelectColumn; break;
        case Clause::kWhere: cand.label = EntityLabel::kWhereColumn; break;
        case Clause::kGroupBy: cand.label = EntityLabel::kGroupByColumn; break;
        case Clause::kOrderBy: cand.label = EntityLabel::kOrderByColumn; break;
        case Clause::kNone:
          report("column token has no clause ancestor");
          continue;
      }
      if (!table.ColumnIndex(tok.text)) {
        report("column " + tok.text + " not in table " + table.table_id);
        continue;
      }
      cand.target = tok.text;
    } else if (tok.kind == SqlTokenKind::kLiteral) {
      if (role.clause == Clause::kNone) {
        report("literal token has no clause ancestor");
        continue;
      }
      cand.kind = AlignKind::kLiteral;
      cand.label = EntityLabel::kLiteralValue;
      cand.target = MatchCell(table, tok.text);
    } else if (role.is_agg) {
      cand.kind = AlignKind::kAgg;
      cand.label = EntityLabel::kAggFunction;
    } else {
      ++result.skipped_keywords;
      continue;
    }
    if (!by_range.count(a.query)) order.push_back(a.query);
    by_range[a.query].push_back(std::move(cand));
  }
  for (const auto &range : order) {
    const auto &cands = by_range[range];
    bool mixed = false;
    for (const auto &c : cands) mixed |= c.kind != cands.front().kind;
    if (mixed) {
      for (const auto &c : cands) {
        result.unalignable.push_back({c.sql_index, range, "span aligned to tokens of different kinds"});
      }
      continue;
    }
    for (const auto &c : cands) {
      TypedSpan span{range.begin, range.end, c.label, c.target};
      if (std::find(result.spans.begin(), result.spans.end(), span) == result.spans.end()) {
        result.spans.push_back(std::move(span));
      }
    }
  }
  return result;
}

json SpanToJson(const TypedSpan &span) {
  json j{{"start", span.start}, {"end", span.end}, {"label", LabelName(span.label)}};
  if (span.link_target) j["link"] = *span.link_target;
  return j;
}

TypedSpan SpanFromJson(const json &j) {
  TypedSpan s;
  s.start = j.at("start").get<size_t>();
  s.end = j.at("end").get<size_t>();
  auto label = LabelFromName(j.at("label").get<std::string>());
  if (!label) throw Error("unknown entity label " + j.at("label").get<std::string>());
  s.label = *label;
  if (j.contains("link")) s.link_target = j["link"].get<std::string>();
  return s;
}

std::vector<DatasetRecord> ExtractNestedSubset(const std::vector<DatasetRecord> &records) {
  std::vector<DatasetRecord> out;
  for (const auto &r : records) {
    if (ContainsSubquery(ParseSql(r.gold_sql_tokens))) out.push_back(r);
  }
  return out;
}

}  // namespace t2sql
