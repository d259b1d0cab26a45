#ifndef T2SQL_SYNTHETIC_CORPUS_H_
#define T2SQL_SYNTHETIC_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "t2sql/dataset.h"

namespace t2sql {

// Small generated corpus in the on-disk dataset format, for smoke runs and
// learning checks when the real data is not at hand. Tables come from a few
// fixed domains; questions come from templates with aligned mentions, some
// of them aliases (acronyms, last names, column synonyms) and some nested.
struct ToyCorpusConfig {
  size_t tables_per_domain = 12;
  size_t records_per_table = 12;
  size_t min_rows = 5;
  size_t max_rows = 9;
  double dev_table_fraction = 0.15;
  double test_table_fraction = 0.15;
  uint64_t seed = 7;
};

struct ToyCorpus {
  std::vector<TableData> tables;
  std::vector<DatasetRecord> train, dev, test;
};

// Splits are by table, so dev and test tables are unseen in training.
// Gold answers are the executed gold SQL.
ToyCorpus MakeToyCorpus(const ToyCorpusConfig &config);

// Writes train/dev/test.jsonl and tables/<id>.json under `dir`.
void WriteToyCorpus(const ToyCorpus &corpus, const std::filesystem::path &dir);

}  // namespace t2sql

#endif  // T2SQL_SYNTHETIC_CORPUS_H_
