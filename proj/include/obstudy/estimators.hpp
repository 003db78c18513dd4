#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/subclass.hpp"

namespace obstudy {

struct SubclassEffect {
  int subclass = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  double mean_treated = 0.0;
  double mean_control = 0.0;
  double diff = 0.0;
  double weight = 0.0;
  std::optional<double> var_treated;
  std::optional<double> var_control;
};

/// Treated-minus-control effect. `std_error` is absent for summary-level
/// (grouped) input where within-cell variances are unknown.
struct EffectEstimate {
  double point = 0.0;
  std::optional<double> std_error;
  std::vector<SubclassEffect> per_subclass;
  std::size_t n_effective = 0;
  std::vector<int> single_arm_subclasses;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  /// One row per subclass plus a TOTAL row.
  std::string to_csv() const;
};

enum class StratumWeighting { total_size, treated_size };

struct StratifiedOptions {
  StratumWeighting weighting = StratumWeighting::total_size;
  std::size_t thin_cell_warning = 5;
};

EffectEstimate crude_difference(std::span<const double> y, std::span<const int> w);

/// Size-weighted average of within-subclass differences over non-trimmed
/// subclasses that contain both arms, with Neyman-style variance.
EffectEstimate stratified_difference(std::span<const double> y, std::span<const int> w,
                                     const SubclassAssignment& assignment, const StratifiedOptions& options = {});

/// Summary-level cell: `arm` is 1 for treated, 0 for control.
struct GroupedRow {
  int subclass = 0;
  int arm = 0;
  std::size_t n = 0;
  double mean = 0.0;
};

struct GroupedCell {
  std::size_t n = 0;
  double mean = 0.0;
};

struct GroupedData {
  /// subclass -> [control cell, treated cell]
  std::map<int, std::array<std::optional<GroupedCell>, 2>> cells;
  std::vector<int> single_arm_subclasses() const;
};

GroupedData grouped_ingest(std::span<const GroupedRow> rows);

EffectEstimate stratified_difference(const GroupedData& grouped, const StratifiedOptions& options = {});

}  // namespace obstudy
