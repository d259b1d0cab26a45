#ifndef T2SQL_LABELS_H_
#define T2SQL_LABELS_H_

#include <array>
#include <optional>
#include <string_view>

namespace t2sql {

// SQL-semantic entity tags. The enum order is also the argmax tie-break
// order: lower index wins.
enum class EntityLabel : int {
  kSelectColumn = 0,
  kWhereColumn,
  kGroupByColumn,
  kOrderByColumn,
  kAggFunction,
  kLiteralValue,
  kNone,
};

inline constexpr int kNumEntityLabels = 7;

inline constexpr std::array<EntityLabel, kNumEntityLabels> kAllEntityLabels = {
    EntityLabel::kSelectColumn,  EntityLabel::kWhereColumn,
    EntityLabel::kGroupByColumn, EntityLabel::kOrderByColumn,
    EntityLabel::kAggFunction,   EntityLabel::kLiteralValue,
    EntityLabel::kNone,
};

std::string_view LabelName(EntityLabel label);
std::optional<EntityLabel> LabelFromName(std::string_view name);

inline int LabelIndex(EntityLabel label) { return static_cast<int>(label); }

// True for the four column-role tags.
inline bool IsColumnLabel(EntityLabel label) {
  return LabelIndex(label) <= LabelIndex(EntityLabel::kOrderByColumn);
}

}  // namespace t2sql

#endif  // T2SQL_LABELS_H_
