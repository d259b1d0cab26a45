#ifndef T2SQL_DATASET_H_
#define T2SQL_DATASET_H_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2sql/labels.h"
#include "t2sql/sql_ast.h"

namespace t2sql {

enum class ColumnType { kNumber, kString, kDate };

std::string_view ColumnTypeName(ColumnType type);
std::optional<ColumnType> ColumnTypeFromName(std::string_view name);

struct Cell {
  std::string text;  // exactly as stored in the table file
  bool is_null = false;
  double number = 0;  // valid when the column is numeric and the cell not null
};

struct TableData {
  std::string table_id;
  std::string table_name = "w";
  std::vector<std::string> column_ids;
  std::vector<std::string> column_display_names;
  std::vector<ColumnType> column_types;
  std::vector<std::vector<Cell>> rows;

  size_t num_columns() const { return column_ids.size(); }
  std::optional<size_t> ColumnIndex(std::string_view id) const;
  // Distinct non-null cell strings in row-major first-seen order.
  std::vector<std::string> DistinctCells() const;
  // True if some non-null cell's text equals `s`.
  bool HasCell(std::string_view s) const;
};

// Half-open query token range.
struct TokenRange {
  size_t begin = 0;
  size_t end = 0;
  bool operator==(const TokenRange &) const = default;
  auto operator<=>(const TokenRange &) const = default;
};

struct Alignment {
  TokenRange query;  // stored inclusive [start, end] on disk
  size_t sql_index = 0;
};

struct DatasetRecord {
  std::string record_id;
  std::string table_id;
  std::vector<std::string> query_tokens;
  std::vector<SqlToken> gold_sql_tokens;
  std::vector<Alignment> alignments;
  std::vector<std::string> gold_answer;
};

struct TypedSpan {
  size_t start = 0;  // inclusive
  size_t end = 0;    // exclusive
  EntityLabel label = EntityLabel::kNone;
  std::optional<std::string> link_target;

  TokenRange range() const { return {start, end}; }
  bool operator==(const TypedSpan &) const = default;
};

// Loads a JSON-lines dataset. `path` is either the file itself or a
// directory holding `<split>.jsonl`. Malformed lines raise SchemaViolation.
std::vector<DatasetRecord> LoadDataset(const std::filesystem::path &path,
                                       std::string_view split);
DatasetRecord ParseRecordJson(const nlohmann::json &j, size_t line);
nlohmann::json RecordToJson(const DatasetRecord &record);

// Loads `<stem>.json` (single object) or `<stem>.csv` plus the sidecar
// `<stem>.types.json`.
TableData LoadTable(const std::filesystem::path &path);
TableData TableFromJson(const nlohmann::json &j, std::string table_id);
nlohmann::json TableToJson(const TableData &table);

// Directory of tables keyed by table id; loads lazily and caches.
class TableStore {
 public:
  explicit TableStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  const TableData &Get(const std::string &table_id);
  void Put(TableData table);

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::shared_ptr<const TableData>> cache_;
};

// One alignment that could not be turned into a labeled span.
struct AnnotationReport {
  size_t sql_index = 0;
  TokenRange query;
  std::string reason;
};

struct AnnotationResult {
  std::vector<TypedSpan> spans;
  std::vector<AnnotationReport> unalignable;
  size_t skipped_keywords = 0;  // non-aggregation keyword alignments
};

// Converts alignment annotations into typed spans. The label comes from the
// aligned SQL token's kind and its nearest clause ancestor in `gold_tree`;
// the link target is the column id or the matching canonical cell string.
AnnotationResult DeriveAnnotations(const DatasetRecord &record,
                                   const TableData &table,
                                   const SqlTree &gold_tree);

nlohmann::json SpanToJson(const TypedSpan &span);
TypedSpan SpanFromJson(const nlohmann::json &j);

// Records whose gold tree contains a Subquery node. Parse errors propagate.
std::vector<DatasetRecord> ExtractNestedSubset(
    const std::vector<DatasetRecord> &records);

}  // namespace t2sql

#endif  // T2SQL_DATASET_H_
