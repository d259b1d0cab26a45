#include "t2sql/text.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

namespace t2sql {

std::string ToLower(std::string_view s) {
  std::string out(s);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string NormalizeSurface(std::string_view s) {
  std::string collapsed;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed.push_back(' ');
    pending_space = false;
    collapsed.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  size_t b = 0, e = collapsed.size();
  while (b < e && (is_punct(collapsed[b]) || collapsed[b] == ' ')) ++b;
  while (e > b && (is_punct(collapsed[e - 1]) || collapsed[e - 1] == ' ')) --e;
  return collapsed.substr(b, e - b);
}

std::vector<std::string> SplitWhitespace(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string Join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

size_t Levenshtein(std::string_view a, std::string_view b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double FuzzyScore(std::string_view a, std::string_view b) {
  std::string na = NormalizeSurface(a), nb = NormalizeSurface(b);
  size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(Levenshtein(na, nb)) / static_cast<double>(longest);
}

double TokenJaccard(std::string_view a, std::string_view b) {
  auto ta = SplitWhitespace(NormalizeSurface(a));
  auto tb = SplitWhitespace(NormalizeSurface(b));
  std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  size_t inter = 0;
  for (const auto &t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

double PrefixOverlap(std::string_view a, std::string_view b) {
  std::string na = NormalizeSurface(a), nb = NormalizeSurface(b);
  size_t n = std::min(na.size(), nb.size());
  if (n == 0) return 0.0;
  size_t k = 0;
  while (k < n && na[k] == nb[k]) ++k;
  return static_cast<double>(k) / static_cast<double>(n);
}

double SuffixOverlap(std::string_view a, std::string_view b) {
  std::string na = NormalizeSurface(a), nb = NormalizeSurface(b);
  size_t n = std::min(na.size(), nb.size());
  if (n == 0) return 0.0;
  size_t k = 0;
  while (k < n && na[na.size() - 1 - k] == nb[nb.size() - 1 - k]) ++k;
  return static_cast<double>(k) / static_cast<double>(n);
}

bool IsAcronymOf(std::string_view mention, std::string_view candidate) {
  std::string m;
  for (char c : mention) {
    if (std::isalnum(static_cast<unsigned char>(c))) m.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (m.size() < 2) return false;
  std::string initials, capitals;
  bool at_word_start = true;
  for (char c : candidate) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (at_word_start) initials.push_back(static_cast<char>(std::tolower(u)));
      if (std::isupper(u)) capitals.push_back(static_cast<char>(std::tolower(u)));
      at_word_start = false;
    } else {
      at_word_start = true;
    }
  }
  if (initials.size() < 2) return false;
  return m == initials || m == capitals;
}

std::optional<double> ParseDecimal(std::string_view s) {
  size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  size_t int_digits = 0, frac_digits = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++int_digits;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++frac_digits;
  }
  if (i != s.size() || int_digits + frac_digits == 0) return std::nullopt;
  std::string_view body = s;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  if (ec != std::errc() || ptr != body.data() + body.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::string FormatNumber(double v) {
  if (v == 0) return "0";
  if (std::nearbyint(v) == v && std::fabs(v) < 1e15) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
    return std::string(buf, ptr);
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

uint64_t Hash64(std::string_view s, uint64_t seed) {
  uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace t2sql
