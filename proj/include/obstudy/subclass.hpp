#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/table.hpp"

namespace obstudy {

/// Label given to units removed for lack of common support.
inline constexpr int kTrimmed = 0;

enum class SubclassMethod { equal_frequency, equal_width };

std::string_view to_string(SubclassMethod method);
SubclassMethod subclass_method_from_string(std::string_view text);

struct TrimLogEntry {
  int subclass = 0;
  std::string reason;
  std::string absent_arm;  // "treated" or "control"
  std::size_t n_dropped = 0;
};

/// Labels are 1..k, or kTrimmed. Subclass j (1-based) covers
/// [boundaries[j-2], boundaries[j-1]) with the first interval open below and
/// the last closed above, so labels = 1 + #(boundaries <= score).
struct SubclassAssignment {
  std::vector<int> labels;
  int k = 0;
  std::vector<double> boundaries;
  SubclassMethod method = SubclassMethod::equal_frequency;
  std::string score_name;
  std::vector<TrimLogEntry> trim_log;

  std::vector<std::size_t> members(int subclass) const;
  std::size_t n_trimmed() const;

  nlohmann::json to_json() const;
  static SubclassAssignment from_json(const nlohmann::json& j);
};

/// unit id,subclass with trimmed units written as TRIMMED.
std::string assignment_csv(const SubclassAssignment& assignment, const Column& unit_ids);

nlohmann::json trim_log_json(const SubclassAssignment& assignment);

/// Cut i (1..k-1) is the smallest score s with at least ceil(i*N/k) units at
/// or below s; ties at a cut go to the lower subclass.
SubclassAssignment subclassify_equal_frequency(std::span<const double> scores, int k,
                                               std::string score_name = "score");

SubclassAssignment subclassify_equal_width(std::span<const double> scores, int k,
                                           std::string score_name = "score");

/// Relabels every single-arm subclass as kTrimmed and logs it.
SubclassAssignment trim_nonoverlap(const SubclassAssignment& assignment, std::span<const int> w);

struct ExclusionLog {
  std::string column;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_below = 0;
  std::size_t n_above = 0;
  std::size_t n_retained = 0;
};

struct RangeRestriction {
  StudyTable table;
  ExclusionLog log;
};

/// Keeps rows with lo <= column <= hi.
RangeRestriction restrict_range(const StudyTable& table, std::string_view column, double lo, double hi);

}  // namespace obstudy
