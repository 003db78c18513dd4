#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/estimators.hpp"
#include "obstudy/subclass.hpp"

namespace obstudy {

/// Observed cells of an encouragement design. Assignment h is "l" (large,
/// coded 1) or "s" (small, coded 0); treatment received T is L (1) or S (0).
struct ComplianceCounts {
  std::size_t n_lL = 0;
  std::size_t n_lS = 0;
  std::size_t n_sL = 0;
  std::size_t n_sS = 0;

  std::size_t n_l() const { return n_lL + n_lS; }
  std::size_t n_s() const { return n_sL + n_sS; }
  void validate() const;

  static ComplianceCounts tally(std::span<const int> h, std::span<const int> t);
};

/// Principal-strata fractions under monotonicity (SL empty).
struct StrataProportions {
  double pi_LL = 0.0;
  double pi_LS = 0.0;
  double pi_SS = 0.0;
};

/// pi_SS = n_lS/n_l, pi_LL = n_sL/n_s, pi_LS = 1 - pi_SS - pi_LL.
StrataProportions estimate_strata(const ComplianceCounts& counts);

/// Whole-percent proportions as printed in strata tables: LL and SS rounded
/// half away from zero, LS by subtraction so the row sums to 100.
struct StrataPercents {
  int pct_LL = 0;
  int pct_LS = 0;
  int pct_SS = 0;
};

StrataPercents round_percent(const StrataProportions& pi);

struct ExpectedLsCounts {
  double ls_in_lL = 0.0;  // exact proportions
  double ls_in_sS = 0.0;
  long rounded_lL = 0;    // from whole-percent proportions, nearest integer
  long rounded_sS = 0;
};

ExpectedLsCounts expected_ls_counts(const ComplianceCounts& counts, const StrataProportions& pi);

/// ITT of assignment h, stratified exactly like stratified_difference.
EffectEstimate itt_by_assignment(std::span<const double> y, std::span<const int> h,
                                 const SubclassAssignment& assignment, const StratifiedOptions& options = {});

struct CaceEstimate {
  double itt = 0.0;
  double pi_LS = 0.0;
  double cace = 0.0;
  std::optional<double> std_error;
  std::optional<double> alternative_cace;  // pooled only: the other weighting
  std::vector<CaceEstimate> per_subclass;

  nlohmann::json to_json() const;
};

/// cace = itt / pi_LS; delta-method SE treats pi_LS as fixed.
CaceEstimate cace(const EffectEstimate& itt, const StrataProportions& pi);

enum class CacePooling { complier_mass, subclass_size };

struct SubclassCace {
  CaceEstimate estimate;
  double n_units = 0.0;
};

/// Weighted mean of per-subclass CACE, weights N_k * pi_LS,k by default.
CaceEstimate cace_pooled(std::span<const SubclassCace> per_subclass, CacePooling pooling = CacePooling::complier_mass);

/// Per-subclass ITT (difference in means by h) and strata proportions,
/// pooled across non-trimmed subclasses.
CaceEstimate cace_by_subclass(std::span<const double> y, std::span<const int> h, std::span<const int> t,
                              const SubclassAssignment& assignment,
                              CacePooling pooling = CacePooling::complier_mass);

/// Which principal stratum is assumed empty.
enum class MonotonicityDirection { no_SL, no_LS };

struct SubclassTransfers {
  int subclass = 0;
  ComplianceCounts counts;
  std::size_t defier_direction = 0;
};

struct MonotonicityAudit {
  MonotonicityDirection direction = MonotonicityDirection::no_SL;
  std::vector<SubclassTransfers> per_subclass;
  std::size_t total_l = 0;
  std::size_t total_s = 0;
  std::size_t transfers_l_to_S = 0;
  std::size_t transfers_s_to_L = 0;
  std::size_t defier_direction_total = 0;
  std::vector<int> subclasses_with_defier_direction;
  bool clean = true;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

/// Counts transfers in both directions per subclass. With SL assumed empty
/// the expected transfers run s->L; l->S transfers are reported as evidence
/// against that direction. Never fails.
MonotonicityAudit monotonicity_audit(std::span<const int> h, std::span<const int> t,
                                     const SubclassAssignment& assignment,
                                     MonotonicityDirection direction = MonotonicityDirection::no_SL);

/// Strata table rows: (assigned, treated, n, stratum, proportion, approx_LS_n).
std::string strata_table_csv(const std::vector<std::pair<int, ComplianceCounts>>& per_subclass);

}  // namespace obstudy
