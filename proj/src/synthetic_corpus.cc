#include "t2sql/synthetic_corpus.h"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "t2sql/errors.h"
#include "t2sql/sql_exec.h"
#include "t2sql/sql_parser.h"
#include "t2sql/text.h"

namespace t2sql {

namespace {

namespace fs = std::filesystem;
using Rng = std::mt19937_64;

size_t Pick(Rng &rng, size_t n) { return static_cast<size_t>(rng() % n); }
bool Chance(Rng &rng, double p) { return static_cast<double>(rng() % 10000) < p * 10000; }

template <typename T>
const T &OneOf(Rng &rng, const std::vector<T> &v) {
  return v[Pick(rng, v.size())];
}

struct ColumnSpec {
  std::string display;
  std::vector<std::string> synonyms;
};

struct Domain {
  std::string name;
  std::string plural;  // how questions refer to the rows
  ColumnSpec entity, category, num1, num2;
  std::vector<std::string> first, second;  // entity name parts
  std::vector<std::string> categories;
  bool category_short_ok = false;  // last word alone still names the category
  int n1_lo, n1_hi, n2_lo, n2_hi;
};

const std::vector<Domain> &Domains() {
  static const std::vector<Domain> kDomains = {
      {"players", "players",
       {"player", {"name", "athlete"}},
       {"team", {"club", "franchise"}},
       {"points", {"pts", "points scored"}},
       {"games played", {"games", "appearances"}},
       {"LeBron", "Kevin", "Stephen", "Chris", "Anthony", "Dwyane", "Tim", "Kobe", "Russell", "Damian",
        "Kyrie", "Jimmy", "Devin", "Luka", "Nikola", "Joel"},
       {"James", "Durant", "Curry", "Paul", "Davis", "Harden", "George", "Wade", "Duncan", "Bryant",
        "Westbrook", "Lillard", "Irving", "Butler", "Booker", "Jokic", "Embiid", "Love", "Green", "Howard"},
       {"Los Angeles Lakers", "Boston Celtics", "Golden State Warriors", "Chicago Bulls", "Miami Heat",
        "New York Knicks", "Phoenix Suns", "Dallas Mavericks"},
       true,
       4, 38, 10, 82},
      {"albums", "albums",
       {"album", {"title", "record"}},
       {"label", {"record label", "company"}},
       {"year", {"release year", "released"}},
       {"sales", {"copies sold", "units sold"}},
       {"Blue", "Silent", "Golden", "Broken", "Electric", "Midnight", "Wild", "Paper", "Crystal", "Velvet",
        "Hollow", "Burning"},
       {"Horizon", "River", "Hearts", "Garden", "Echoes", "Skies", "Road", "Machine", "Moon", "Letters",
        "Kingdom", "Signal"},
       {"Sony Music", "EMI", "Warner Bros Records", "Island Records", "Def Jam", "Atlantic Records"},
       false,
       1975, 2015, 1, 40},
      {"cities", "cities",
       {"city", {"town", "municipality"}},
       {"country", {"nation", "state"}},
       {"population", {"residents", "inhabitants"}},
       {"area", {"land area", "size"}},
       {"Port", "New", "North", "East", "Fort", "Lake", "Mount", "Saint"},
       {"Alden", "Brook", "Carver", "Dover", "Elling", "Fairview", "Granton", "Hale", "Ivory", "Juniper",
        "Kessel", "Linden"},
       {"United States", "United Kingdom", "New Zealand", "Canada", "South Africa", "Ireland"},
       false,
       2000, 90000, 12, 640},
      {"films", "films",
       {"film", {"movie", "title"}},
       {"director", {"filmmaker", "directed by"}},
       {"year", {"release year", "released"}},
       {"gross", {"box office", "earnings"}},
       {"The Last", "The Hidden", "The Long", "The Silver", "The Dark", "The First", "The Quiet"},
       {"Summer", "Voyage", "Empire", "Witness", "Harvest", "Frontier", "Promise", "Island", "Letter"},
       {"Steven Spielberg", "Martin Scorsese", "Sofia Coppola", "Christopher Nolan", "Greta Gerwig",
        "Kathryn Bigelow", "Denis Villeneuve"},
       true,
       1970, 2020, 3, 900},
      {"elections", "candidates",
       {"candidate", {"nominee", "name"}},
       {"party", {"affiliation", "political party"}},
       {"votes", {"vote count", "ballots"}},
       {"district", {"constituency", "ward"}},
       {"Maria", "John", "Alice", "Robert", "Linda", "Thomas", "Karen", "Daniel", "Susan", "Mark", "Helen",
        "Peter"},
       {"Garcia", "Smith", "Johnson", "Brown", "Miller", "Wilson", "Moore", "Taylor", "Clark", "Lewis",
        "Walker", "Young"},
       {"Democratic Party", "Republican Party", "Green Party", "Liberal Democrats", "Labour Party",
        "Conservative Party"},
       false,
       800, 95000, 1, 14},
  };
  return kDomains;
}

// Positions of the four roles inside one table; the order is shuffled per
// table so column ids carry no role information.
struct Layout {
  size_t entity, category, num1, num2;
};

struct ToyTable {
  const Domain *domain;
  TableData data;
  Layout at;
};

ToyTable MakeTable(const Domain &d, size_t index, size_t rows, Rng &rng) {
  std::vector<size_t> perm = {0, 1, 2, 3};
  std::shuffle(perm.begin(), perm.end(), rng);
  ToyTable t{&d, {}, {perm[0], perm[1], perm[2], perm[3]}};
  t.data.table_id = "toy_" + d.name + "_" + std::to_string(index);
  t.data.column_ids.resize(4);
  t.data.column_display_names.resize(4);
  t.data.column_types.resize(4);
  auto set = [&](size_t pos, const ColumnSpec &spec, ColumnType type) {
    t.data.column_ids[pos] = "c" + std::to_string(pos + 1) + (type == ColumnType::kNumber ? "_number" : "");
    t.data.column_display_names[pos] = spec.display;
    t.data.column_types[pos] = type;
  };
  set(t.at.entity, d.entity, ColumnType::kString);
  set(t.at.category, d.category, ColumnType::kString);
  set(t.at.num1, d.num1, ColumnType::kNumber);
  set(t.at.num2, d.num2, ColumnType::kNumber);

  std::vector<std::string> cats = d.categories;
  std::shuffle(cats.begin(), cats.end(), rng);
  cats.resize(std::min<size_t>(cats.size(), 2 + Pick(rng, 3)));
  std::set<std::string> names;
  while (names.size() < rows) names.insert(OneOf(rng, d.first) + " " + OneOf(rng, d.second));
  std::vector<std::string> ordered(names.begin(), names.end());
  std::shuffle(ordered.begin(), ordered.end(), rng);
  for (const auto &name : ordered) {
    std::vector<Cell> row(4);
    row[t.at.entity] = {name, false, 0};
    row[t.at.category] = {OneOf(rng, cats), false, 0};
    double n1 = d.n1_lo + static_cast<double>(Pick(rng, static_cast<size_t>(d.n1_hi - d.n1_lo + 1)));
    double n2 = d.n2_lo + static_cast<double>(Pick(rng, static_cast<size_t>(d.n2_hi - d.n2_lo + 1)));
    row[t.at.num1] = {FormatNumber(n1), false, n1};
    row[t.at.num2] = {FormatNumber(n2), false, n2};
    t.data.rows.push_back(std::move(row));
  }
  return t;
}

std::string Acronym(const std::vector<std::string> &words) {
  std::string out;
  for (const auto &w : words) {
    if (w == "The") continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(w[0]))));
  }
  return out;
}

// How a question refers to a cell value: the value itself, lowercased, or
// an alias that no string match recovers.
std::string CellMention(const std::string &value, bool short_ok, Rng &rng) {
  auto words = SplitWhitespace(value);
  double r = static_cast<double>(Pick(rng, 1000)) / 1000;
  if (words.size() < 2) return r < 0.6 ? value : ToLower(value);
  if (r < 0.3) return value;
  if (r < 0.45) return ToLower(value);
  if (r < 0.7 || !short_ok) return Acronym(words);
  return words.back();
}

std::string ColumnMention(const ColumnSpec &spec, Rng &rng) {
  return Chance(rng, 0.4) ? spec.display : OneOf(rng, spec.synonyms);
}

struct Ref {
  SqlTokenKind kind;
  std::string text;
  int nth = 0;
};

// Question under construction: plain words plus aligned mentions.
class Question {
 public:
  Question &Words(std::string_view s) {
    for (auto &w : SplitWhitespace(s)) tokens_.push_back(std::move(w));
    return *this;
  }
  Question &Mention(std::string_view surface, std::vector<Ref> refs) {
    size_t begin = tokens_.size();
    Words(surface);
    mentions_.push_back({{begin, tokens_.size()}, std::move(refs)});
    return *this;
  }
  const std::vector<std::string> &tokens() const { return tokens_; }
  const std::vector<std::pair<TokenRange, std::vector<Ref>>> &mentions() const { return mentions_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::pair<TokenRange, std::vector<Ref>>> mentions_;
};

struct Draft {
  Question q;
  std::string sql;
};

Ref Col(const std::string &id, int nth = 0) { return {SqlTokenKind::kColumn, id, nth}; }
Ref Lit(const std::string &v) { return {SqlTokenKind::kLiteral, v, 0}; }
Ref Kw(const std::string &k) { return {SqlTokenKind::kKeyword, k, 0}; }

constexpr size_t kNumTemplates = 17;

Draft Instantiate(const ToyTable &t, size_t which, Rng &rng) {
  const Domain &d = *t.domain;
  const TableData &tab = t.data;
  const std::string &E = tab.column_ids[t.at.entity];
  const std::string &C = tab.column_ids[t.at.category];
  bool first_num = Chance(rng, 0.5);
  size_t n_pos = first_num ? t.at.num1 : t.at.num2;
  const ColumnSpec &nspec = first_num ? d.num1 : d.num2;
  const std::string &N = tab.column_ids[n_pos];
  const auto &row = tab.rows[Pick(rng, tab.rows.size())];
  const auto &row2 = tab.rows[Pick(rng, tab.rows.size())];
  const std::string &ev = row[t.at.entity].text;
  const std::string &cv = row[t.at.category].text;
  const std::string &cv2 = row2[t.at.category].text;
  const Cell &nv = row[n_pos];

  Draft out;
  Question &q = out.q;
  switch (which) {
    case 0: {
      bool most = Chance(rng, 0.5);
      q.Words("which").Mention(ColumnMention(d.entity, rng), {Col(E)}).Words(most ? "had the most" : "had the fewest")
          .Mention(ColumnMention(nspec, rng), {Col(N)}).Words("?");
      out.sql = "select " + E + " from w order by " + N + (most ? " desc" : " asc") + " limit 1";
      break;
    }
    case 1:
      q.Mention("how many", {Kw("count")}).Words(d.plural + " have").Mention(ColumnMention(d.category, rng), {Col(C)})
          .Mention(CellMention(cv, d.category_short_ok, rng), {Lit(cv)}).Words("?");
      out.sql = "select count ( * ) from w where " + C + " = " + QuoteLiteral(cv);
      break;
    case 2:
      q.Words("what is the").Mention(ColumnMention(nspec, rng), {Col(N)}).Words("of")
          .Mention(CellMention(ev, true, rng), {Lit(ev)}).Words("?");
      out.sql = "select " + N + " from w where " + E + " = " + QuoteLiteral(ev);
      break;
    case 3:
      q.Words("which").Mention(ColumnMention(d.category, rng), {Col(C, 0), Col(C, 1)}).Words("has the")
          .Mention("most", {Kw("count")}).Words(d.plural + "?");
      out.sql = "select " + C + " from w group by " + C + " order by count ( * ) desc limit 1";
      break;
    case 4:
      q.Words("what is the").Mention("total", {Kw("sum")}).Mention(ColumnMention(nspec, rng), {Col(N)})
          .Words("for").Mention(CellMention(cv, d.category_short_ok, rng), {Lit(cv)}).Words("?");
      out.sql = "select sum ( " + N + " ) from w where " + C + " = " + QuoteLiteral(cv);
      break;
    case 5:
      q.Words("what is the").Mention("average", {Kw("avg")}).Mention(ColumnMention(nspec, rng), {Col(N)})
          .Words("?");
      out.sql = "select avg ( " + N + " ) from w";
      break;
    case 6:
      q.Words("which").Mention(ColumnMention(d.entity, rng), {Col(E)}).Words("had more")
          .Mention(ColumnMention(nspec, rng), {Col(N)}).Words("than").Mention(CellMention(ev, true, rng), {Lit(ev)})
          .Words("?");
      out.sql = "select " + E + " from w where " + N + " > ( select " + N + " from w where " + E + " = " +
                QuoteLiteral(ev) + " )";
      break;
    case 7:
      q.Words("which " + d.plural + " have").Mention(ColumnMention(nspec, rng), {Col(N)})
          .Words("above the").Mention("average", {Kw("avg")}).Words("?");
      out.sql = "select " + E + " from w where " + N + " > ( select avg ( " + N + " ) from w )";
      break;
    case 8:
      q.Words("list the " + d.plural + " with").Mention(ColumnMention(nspec, rng), {Col(N)}).Words("over")
          .Mention(nv.text, {Lit(nv.text)});
      out.sql = "select " + E + " from w where " + N + " > " + nv.text;
      break;
    case 9:
      q.Words("what").Mention(ColumnMention(d.entity, rng), {Col(E)}).Words("has")
          .Mention(ColumnMention(nspec, rng), {Col(N)}).Words("of").Mention(nv.text, {Lit(nv.text)}).Words("?");
      out.sql = "select " + E + " from w where " + N + " = " + nv.text;
      break;
    case 10:
      q.Mention("how many", {Kw("count")}).Words(d.plural + " are listed ?");
      out.sql = "select count ( * ) from w";
      break;
    case 11:
      q.Words("which").Mention(ColumnMention(d.entity, rng), {Col(E)}).Words("from")
          .Mention(CellMention(cv, d.category_short_ok, rng), {Lit(cv)}).Words("had").Mention(nv.text, {Lit(nv.text)})
          .Mention(ColumnMention(nspec, rng), {Col(N)}).Words("?");
      out.sql = "select " + E + " from w where " + C + " = " + QuoteLiteral(cv) + " and " + N + " = " + nv.text;
      break;
    case 12:
      q.Words("what").Mention(ColumnMention(d.category, rng), {Col(C)}).Words("is")
          .Mention(CellMention(ev, true, rng), {Lit(ev)}).Words("with ?");
      out.sql = "select " + C + " from w where " + E + " = " + QuoteLiteral(ev);
      break;
    case 13:
      q.Words("which " + d.plural + " have the same").Mention(ColumnMention(d.category, rng), {Col(C)})
          .Words("as").Mention(CellMention(ev, true, rng), {Lit(ev)}).Words("?");
      out.sql = "select " + E + " from w where " + C + " = ( select " + C + " from w where " + E + " = " +
                QuoteLiteral(ev) + " ) and " + E + " != " + QuoteLiteral(ev);
      break;
    case 14:
      q.Words("what is the").Mention("highest", {Kw("max")}).Mention(ColumnMention(nspec, rng), {Col(N)})
          .Words("among").Mention(CellMention(cv, d.category_short_ok, rng), {Lit(cv)}).Words("?");
      out.sql = "select max ( " + N + " ) from w where " + C + " = " + QuoteLiteral(cv);
      break;
    case 15:
      q.Words("which " + d.plural + " are not with").Mention(CellMention(cv, d.category_short_ok, rng), {Lit(cv)}).Words("?");
      out.sql = "select " + E + " from w where " + C + " != " + QuoteLiteral(cv);
      break;
    default:
      q.Words("which " + d.plural + " are with").Mention(CellMention(cv, d.category_short_ok, rng), {Lit(cv)}).Words("or")
          .Mention(CellMention(cv2, d.category_short_ok, rng), {Lit(cv2)}).Words("?");
      out.sql = "select " + E + " from w where " + C + " in ( " + QuoteLiteral(cv) + " , " + QuoteLiteral(cv2) + " )";
      break;
  }
  return out;
}

std::optional<DatasetRecord> Realize(const ToyTable &t, const Draft &draft, const std::string &id) {
  SqlTree tree = ParseSql(draft.sql);
  DatasetRecord r;
  r.record_id = id;
  r.table_id = t.data.table_id;
  r.query_tokens = draft.q.tokens();
  r.gold_sql_tokens = SerializeTyped(tree);
  for (const auto &[range, refs] : draft.q.mentions()) {
    for (const auto &ref : refs) {
      int seen = 0;
      std::optional<size_t> at;
      for (size_t i = 0; i < r.gold_sql_tokens.size() && !at; ++i) {
        const auto &tok = r.gold_sql_tokens[i];
        if (tok.kind == ref.kind && tok.text == ref.text && seen++ == ref.nth) at = i;
      }
      if (!at) throw Error("toy template references a missing SQL token: " + ref.text);
      r.alignments.push_back({range, *at});
    }
  }
  try {
    r.gold_answer = Execute(tree, t.data).Flatten();
  } catch (const Error &) {
    return std::nullopt;
  }
  return r;
}

}  // namespace

ToyCorpus MakeToyCorpus(const ToyCorpusConfig &config) {
  Rng rng(config.seed);
  ToyCorpus corpus;
  std::vector<ToyTable> tables;
  for (const auto &d : Domains()) {
    for (size_t i = 0; i < config.tables_per_domain; ++i) {
      size_t rows = config.min_rows + Pick(rng, config.max_rows - config.min_rows + 1);
      tables.push_back(MakeTable(d, i, rows, rng));
    }
  }
  std::vector<size_t> order(tables.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_dev = static_cast<size_t>(config.dev_table_fraction * static_cast<double>(tables.size()) + 0.5);
  size_t n_test = static_cast<size_t>(config.test_table_fraction * static_cast<double>(tables.size()) + 0.5);

  for (size_t k = 0; k < order.size(); ++k) {
    const ToyTable &t = tables[order[k]];
    auto &split = k < n_dev ? corpus.dev : k < n_dev + n_test ? corpus.test : corpus.train;
    std::string prefix = k < n_dev ? "dev" : k < n_dev + n_test ? "test" : "train";
    std::set<std::vector<std::string>> seen;
    for (size_t attempt = 0; seen.size() < config.records_per_table && attempt < 20 * config.records_per_table;
         ++attempt) {
      Draft draft = Instantiate(t, Pick(rng, kNumTemplates), rng);
      if (!seen.insert(draft.q.tokens()).second) continue;
      auto rec = Realize(t, draft, prefix + "-" + t.data.table_id + "-" + std::to_string(seen.size() - 1));
      if (rec) split.push_back(std::move(*rec));
    }
  }
  for (auto &t : tables) corpus.tables.push_back(std::move(t.data));
  return corpus;
}

void WriteToyCorpus(const ToyCorpus &corpus, const fs::path &dir) {
  fs::create_directories(dir / "tables");
  auto write = [&](const std::string &split, const std::vector<DatasetRecord> &records) {
    std::ofstream out(dir / (split + ".jsonl"));
    for (const auto &r : records) out << RecordToJson(r).dump() << "\n";
    if (!out) throw Error("cannot write " + (dir / (split + ".jsonl")).string());
  };
  write("train", corpus.train);
  write("dev", corpus.dev);
  write("test", corpus.test);
  for (const auto &t : corpus.tables) {
    std::ofstream out(dir / "tables" / (t.table_id + ".json"));
    out << TableToJson(t).dump(1) << "\n";
    if (!out) throw Error("cannot write table " + t.table_id);
  }
}

}  // namespace t2sql
