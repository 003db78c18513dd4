#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/propensity.hpp"
#include "obstudy/subclass.hpp"

namespace obstudy {

/// (mean_t - mean_c) / sqrt((s_t^2 + s_c^2) / 2), sample variances (n-1).
double standardized_diff(std::span<const double> x, std::span<const int> w);

struct SubclassBalanceRow {
  int subclass = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  double mean_treated = 0.0;
  double mean_control = 0.0;
  double std_diff = 0.0;  // on the full-sample pooled SD
};

struct CovariateBalance {
  std::string name;
  Kind kind = Kind::numeric;
  bool is_score = false;
  double overall_std_diff = 0.0;
  double within_std_diff = 0.0;
  double t_statistic_overall = 0.0;
  double t_statistic_within = 0.0;
  double variance_ratio = 0.0;
  std::vector<SubclassBalanceRow> per_subclass;
};

struct BalanceReport {
  std::vector<CovariateBalance> rows;

  const CovariateBalance& row(std::string_view name) const;
  nlohmann::json to_json() const;
};

/// Name of the report row holding the linear propensity score.
inline constexpr std::string_view kScoreRowName = "linear_propensity_score";

/// Overall metrics use every unit; within metrics weight per-subclass mean
/// differences by subclass size over non-trimmed both-arm subclasses and
/// divide by the same full-sample pooled SD.
BalanceReport balance_report(const StudyTable& design_table, std::span<const double> linear_scores,
                             const SubclassAssignment& assignment);

BalanceReport balance_report(const StudyTable& design_table, const PropensityFit& fit,
                             const SubclassAssignment& assignment);

struct BalanceThresholds {
  double max_std_diff = 0.1;
  double max_abs_t = 2.0;
  /// Optional per-covariate multiplier applied to |within diff| and |t|.
  std::map<std::string, double> priority;

  nlohmann::json to_json() const;
  static BalanceThresholds from_json(const nlohmann::json& j);
};

struct BalanceVerdict {
  bool pass = true;
  std::vector<std::string> offending;
  std::vector<std::string> reasons;
};

/// Gates covariate rows; the propensity-score row is diagnostic only.
BalanceVerdict balance_gate(const BalanceReport& report, const BalanceThresholds& thresholds = {});

struct LovePlotFiles {
  std::filesystem::path csv;
  std::filesystem::path svg;
};

std::string love_plot_csv(const BalanceReport& report);
std::string love_plot_svg(const BalanceReport& report, double threshold = 0.1);

/// Writes `<stem>.csv` and `<stem>.svg`.
LovePlotFiles export_love_plot(const BalanceReport& report, const std::filesystem::path& stem,
                               double threshold = 0.1);

}  // namespace obstudy
