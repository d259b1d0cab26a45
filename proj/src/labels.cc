#include "t2sql/labels.h"

namespace t2sql {

namespace {
constexpr std::array<std::string_view, kNumEntityLabels> kNames = {
    "SELECT_COLUMN",  "WHERE_COLUMN",  "GROUPBY_COLUMN", "ORDERBY_COLUMN",
    "AGG_FUNCTION",   "LITERAL_VALUE", "NONE",
};
}  // namespace

std::string_view LabelName(EntityLabel label) {
  return kNames[LabelIndex(label)];
}

std::optional<EntityLabel> LabelFromName(std::string_view name) {
  for (int i = 0; i < kNumEntityLabels; ++i) {
    if (kNames[i] == name) return static_cast<EntityLabel>(i);
  }
  return std::nullopt;
}

}  // namespace t2sql
