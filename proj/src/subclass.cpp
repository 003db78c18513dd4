#include "obstudy/subclass.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "obstudy/error.hpp"

namespace obstudy {

std::string_view to_string(SubclassMethod method) {
  return method == SubclassMethod::equal_frequency ? "equal_frequency" : "equal_width";
}

SubclassMethod subclass_method_from_string(std::string_view text) {
  if (text == "equal_frequency" || text == "quantile") return SubclassMethod::equal_frequency;
  if (text == "equal_width" || text == "width") return SubclassMethod::equal_width;
  fail(ErrorKind::spec, "unknown subclass method '" + std::string(text) + "'");
}

std::vector<std::size_t> SubclassAssignment::members(int subclass) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == subclass) out.push_back(i);
  return out;
}

std::size_t SubclassAssignment::n_trimmed() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kTrimmed));
}

nlohmann::json trim_log_json(const SubclassAssignment& assignment) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : assignment.trim_log)
    log.push_back({{"subclass", e.subclass}, {"reason", e.reason}, {"absent_arm", e.absent_arm},
                   {"n_dropped", e.n_dropped}});
  return log;
}

nlohmann::json SubclassAssignment::to_json() const {
  return {{"k", k},
          {"method", std::string(to_string(method))},
          {"score_name", score_name},
          {"boundaries", boundaries},
          {"labels", labels},
          {"trim_log", trim_log_json(*this)}};
}

SubclassAssignment SubclassAssignment::from_json(const nlohmann::json& j) {
  SubclassAssignment a;
  a.k = j.at("k").get<int>();
  a.method = subclass_method_from_string(j.at("method").get<std::string>());
  a.score_name = j.at("score_name").get<std::string>();
  a.boundaries = j.at("boundaries").get<std::vector<double>>();
  a.labels = j.at("labels").get<std::vector<int>>();
  for (const auto& e : j.at("trim_log"))
    a.trim_log.push_back({e.at("subclass").get<int>(), e.at("reason").get<std::string>(),
                          e.at("absent_arm").get<std::string>(), e.at("n_dropped").get<std::size_t>()});
  return a;
}

namespace {

std::vector<int> label_by_boundaries(std::span<const double> scores, const std::vector<double>& boundaries) {
  std::vector<int> labels(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    labels[i] = 1 + static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), scores[i]) -
                                     boundaries.begin());
  return labels;
}

}  // namespace

SubclassAssignment subclassify_equal_frequency(std::span<const double> scores, int k, std::string score_name) {
  if (k < 1) fail(ErrorKind::domain, "number of subclasses must be >= 1");
  if (scores.empty()) fail(ErrorKind::domain, "no scores to subclassify");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<std::size_t>(k) > distinct.size())
    fail(ErrorKind::infeasible_k, "cannot form " + std::to_string(k) + " subclasses from " +
                                      std::to_string(distinct.size()) + " distinct score values");

  const std::size_t n = sorted.size();
  const std::size_t d = distinct.size();
  // Cut values are distinct observed scores; each cut leaves room for the
  // remaining subclasses above it.
  std::vector<double> cuts;
  std::size_t prev = 0;
  for (int i = 1; i < k; ++i) {
    std::size_t need = (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(k) - 1) / static_cast<std::size_t>(k);
    double cut = sorted[need - 1];
    std::size_t pos = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), cut) - distinct.begin());
    std::size_t min_pos = i == 1 ? 0 : prev + 1;
    std::size_t max_pos = d - static_cast<std::size_t>(k) + static_cast<std::size_t>(i) - 1;
    pos = std::clamp(pos, min_pos, max_pos);
    cuts.push_back(distinct[pos]);
    prev = pos;
  }

  SubclassAssignment a;
  a.k = k;
  a.method = SubclassMethod::equal_frequency;
  a.score_name = std::move(score_name);
  // Subclass i+1 starts at the first distinct score above cut i.
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    auto next = std::upper_bound(distinct.begin(), distinct.end(), cuts[i]);
    a.boundaries.push_back(*next);
  }
  a.labels = label_by_boundaries(scores, a.boundaries);
  return a;
}

SubclassAssignment subclassify_equal_width(std::span<const double> scores, int k, std::string score_name) {
  if (k < 2) fail(ErrorKind::domain, "equal-width subclassification needs k >= 2");
  if (scores.empty()) fail(ErrorKind::domain, "no scores to subclassify");
  auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (lo == hi) fail(ErrorKind::degenerate, "scores are constant; equal-width bins are undefined");

  SubclassAssignment a;
  a.k = k;
  a.method = SubclassMethod::equal_width;
  a.score_name = std::move(score_name);
  const double width = (hi - lo) / k;
  for (int i = 1; i < k; ++i) a.boundaries.push_back(lo + i * width);
  a.labels = label_by_boundaries(scores, a.boundaries);
  return a;
}

SubclassAssignment trim_nonoverlap(const SubclassAssignment& assignment, std::span<const int> w) {
  if (w.size() != assignment.labels.size()) fail(ErrorKind::domain, "labels and treatment differ in length");
  SubclassAssignment out = assignment;
  std::size_t both_arm = 0;
  for (int s = 1; s <= assignment.k; ++s) {
    std::size_t n_t = 0, n_c = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (assignment.labels[i] == s) (w[i] ? n_t : n_c)++;
    if (n_t + n_c == 0) continue;
    if (n_t && n_c) {
      ++both_arm;
      continue;
    }
    for (std::size_t i = 0; i < w.size(); ++i)
      if (out.labels[i] == s) out.labels[i] = kTrimmed;
    const bool no_treated = n_t == 0;
    out.trim_log.push_back({s, no_treated ? "no treated units" : "no control units",
                            no_treated ? "treated" : "control", n_t + n_c});
  }
  if (both_arm == 0) fail(ErrorKind::total_non_overlap, "no subclass contains both treated and control units");
  return out;
}

RangeRestriction restrict_range(const StudyTable& table, std::string_view column, double lo, double hi) {
  const Column& col = table.column(column);
  if (col.kind == Kind::categorical) fail(ErrorKind::domain, "column '" + col.name + "' is not numeric");
  if (lo > hi) fail(ErrorKind::domain, "restriction bounds are reversed");
  ExclusionLog log{col.name, lo, hi, 0, 0, 0};
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < col.size(); ++i) {
    double v = col.values[i];
    if (v < lo) ++log.n_below;
    else if (v > hi) ++log.n_above;
    else keep.push_back(i);
  }
  if (keep.empty()) fail(ErrorKind::empty_after_restriction, "no units remain within [" + format_number(lo) + ", " +
                                                                 format_number(hi) + "] on '" + col.name + "'");
  log.n_retained = keep.size();
  return {table.select_rows(keep), log};
}

std::string assignment_csv(const SubclassAssignment& assignment, const Column& unit_ids) {
  if (unit_ids.size() != assignment.labels.size())
    fail(ErrorKind::domain, "unit ids and subclass labels differ in length");
  std::string out = csv_escape(unit_ids.name) + ",subclass\n";
  for (std::size_t i = 0; i < unit_ids.size(); ++i) {
    const int l = assignment.labels[i];
    out += csv_escape(unit_ids.cell_text(i)) + "," + (l == kTrimmed ? std::string("TRIMMED") : std::to_string(l)) + "\n";
  }
  return out;
}

}  // namespace obstudy
