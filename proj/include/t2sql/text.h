#ifndef T2SQL_TEXT_H_
#define T2SQL_TEXT_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace t2sql {

std::string ToLower(std::string_view s);

// Gazetteer normalization: lowercase, collapse internal whitespace, strip
// leading and trailing punctuation.
std::string NormalizeSurface(std::string_view s);

std::vector<std::string> SplitWhitespace(std::string_view s);
std::string Join(std::span<const std::string> parts, std::string_view sep);

// Byte-level Levenshtein distance.
size_t Levenshtein(std::string_view a, std::string_view b);

// 1 - normalized Levenshtein distance over normalized strings; 1 for two
// empty strings.
double FuzzyScore(std::string_view a, std::string_view b);

// Jaccard overlap of the whitespace token sets of the normalized strings.
double TokenJaccard(std::string_view a, std::string_view b);

// Common prefix / suffix length over the shorter normalized string.
double PrefixOverlap(std::string_view a, std::string_view b);
double SuffixOverlap(std::string_view a, std::string_view b);

// True when `mention` spells the initials of `candidate`'s words, or the
// sequence of its upper-case letters ("LBJ" for "LeBron James").
bool IsAcronymOf(std::string_view mention, std::string_view candidate);

// Parses a finite decimal: optional sign, digits with optional fraction, no
// exponent. Returns nullopt otherwise.
std::optional<double> ParseDecimal(std::string_view s);

// Canonical number text: integers without a fraction, otherwise the shortest
// round-trip decimal without trailing zeros.
std::string FormatNumber(double v);

// 64-bit FNV-1a.
uint64_t Hash64(std::string_view s, uint64_t seed = 0);

}  // namespace t2sql

#endif  // T2SQL_TEXT_H_
