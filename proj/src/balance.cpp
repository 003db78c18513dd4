#include "obstudy/balance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "obstudy/error.hpp"

namespace obstudy {

namespace {

struct ArmStats {
  std::size_t n = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double var = 0.0;  // n-1 denominator; 0 when n < 2
};

template <typename Pred>
ArmStats arm_stats(std::span<const double> x, Pred include) {
  ArmStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (include(i)) {
      ++s.n;
      sum += x[i];
    }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (include(i)) ss += (x[i] - s.mean) * (x[i] - s.mean);
  s.var = ss / static_cast<double>(s.n - 1);
  return s;
}

double ratio_or_signed_inf(double num, double den) {
  if (den > 0) return num / den;
  if (num == 0) return 0.0;
  return num > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

CovariateBalance assess(std::string name, Kind kind, bool is_score, std::span<const double> x, std::span<const int> w,
                        const SubclassAssignment& assignment) {
  CovariateBalance row;
  row.name = std::move(name);
  row.kind = kind;
  row.is_score = is_score;

  ArmStats t = arm_stats(x, [&](std::size_t i) { return w[i] == 1; });
  ArmStats c = arm_stats(x, [&](std::size_t i) { return w[i] == 0; });
  const double pooled_sd = std::sqrt((t.var + c.var) / 2.0);
  const double diff = t.mean - c.mean;
  row.overall_std_diff = ratio_or_signed_inf(diff, pooled_sd);
  row.t_statistic_overall =
      ratio_or_signed_inf(diff, std::sqrt(t.var / static_cast<double>(t.n) + c.var / static_cast<double>(c.n)));
  row.variance_ratio = c.var > 0 ? t.var / c.var : (t.var > 0 ? std::numeric_limits<double>::infinity() : 1.0);

  double total = 0.0, weighted_diff = 0.0, weighted_var = 0.0;
  std::vector<std::pair<double, double>> cells;  // (N_k, d_k) for both-arm subclasses
  for (int s = 1; s <= assignment.k; ++s) {
    ArmStats ts = arm_stats(x, [&](std::size_t i) { return assignment.labels[i] == s && w[i] == 1; });
    ArmStats cs = arm_stats(x, [&](std::size_t i) { return assignment.labels[i] == s && w[i] == 0; });
    if (ts.n + cs.n == 0) continue;
    SubclassBalanceRow detail{s, ts.n, cs.n, ts.mean, cs.mean, std::numeric_limits<double>::quiet_NaN()};
    if (ts.n && cs.n) {
      const double d = ts.mean - cs.mean;
      detail.std_diff = ratio_or_signed_inf(d, pooled_sd);
      const double nk = static_cast<double>(ts.n + cs.n);
      total += nk;
      weighted_diff += nk * d;
      cells.emplace_back(nk, ts.var / static_cast<double>(ts.n) + cs.var / static_cast<double>(cs.n));
    }
    row.per_subclass.push_back(detail);
  }
  if (total == 0) fail(ErrorKind::total_non_overlap, "no subclass contains both arms");
  const double mean_diff = weighted_diff / total;
  for (const auto& [nk, v] : cells) weighted_var += (nk / total) * (nk / total) * v;
  row.within_std_diff = ratio_or_signed_inf(mean_diff, pooled_sd);
  row.t_statistic_within = ratio_or_signed_inf(mean_diff, std::sqrt(weighted_var));
  if (pooled_sd == 0) {
    row.overall_std_diff = 0.0;
    row.within_std_diff = 0.0;
  }
  return row;
}

std::string svg_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::vector<const CovariateBalance*> sorted_rows(const BalanceReport& report) {
  std::vector<const CovariateBalance*> rows;
  for (const auto& r : report.rows) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const CovariateBalance* a, const CovariateBalance* b) {
    return std::abs(a->overall_std_diff) > std::abs(b->overall_std_diff);
  });
  return rows;
}

}  // namespace

double standardized_diff(std::span<const double> x, std::span<const int> w) {
  if (x.size() != w.size()) fail(ErrorKind::domain, "covariate and treatment differ in length");
  ArmStats t = arm_stats(x, [&](std::size_t i) { return w[i] == 1; });
  ArmStats c = arm_stats(x, [&](std::size_t i) { return w[i] == 0; });
  if (t.n == 0 || c.n == 0) fail(ErrorKind::no_contrast, "standardized difference needs both arms");
  const double pooled_sd = std::sqrt((t.var + c.var) / 2.0);
  if (!(pooled_sd > 0)) fail(ErrorKind::constant_covariate, "covariate is constant within both arms");
  return (t.mean - c.mean) / pooled_sd;
}

const CovariateBalance& BalanceReport::row(std::string_view name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  fail(ErrorKind::schema, "balance report has no row '" + std::string(name) + "'");
}

nlohmann::json BalanceReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json detail = nlohmann::json::array();
    for (const auto& d : r.per_subclass)
      detail.push_back({{"subclass", d.subclass},
                        {"n_treated", d.n_treated},
                        {"n_control", d.n_control},
                        {"mean_treated", d.mean_treated},
                        {"mean_control", d.mean_control},
                        {"std_diff", d.std_diff}});
    out.push_back({{"covariate", r.name},
                   {"kind", std::string(to_string(r.kind))},
                   {"is_score", r.is_score},
                   {"overall_std_diff", r.overall_std_diff},
                   {"within_std_diff", r.within_std_diff},
                   {"t_statistic_overall", r.t_statistic_overall},
                   {"t_statistic_within", r.t_statistic_within},
                   {"variance_ratio", r.variance_ratio},
                   {"per_subclass", detail}});
  }
  return {{"rows", out}};
}

BalanceReport balance_report(const StudyTable& design_table, std::span<const double> linear_scores,
                             const SubclassAssignment& assignment) {
  design_table.require_no_outcomes("balance_report");
  if (linear_scores.size() != design_table.n_units() || assignment.labels.size() != design_table.n_units())
    fail(ErrorKind::domain, "scores, labels and table differ in length");
  const auto w = design_table.treatment_indicator();

  BalanceReport report;
  for (const Column* col : design_table.with_role(Role::covariate)) {
    if (col->kind != Kind::categorical) {
      report.rows.push_back(assess(col->name, col->kind, false, col->values, w, assignment));
      continue;
    }
    for (std::size_t level = 0; level < col->levels.size(); ++level) {
      std::vector<double> dummy(col->size());
      for (std::size_t i = 0; i < dummy.size(); ++i) dummy[i] = col->values[i] == static_cast<double>(level);
      report.rows.push_back(
          assess(col->name + "[" + col->levels[level] + "]", Kind::categorical, false, dummy, w, assignment));
    }
  }
  report.rows.push_back(assess(std::string(kScoreRowName), Kind::numeric, true, linear_scores, w, assignment));
  return report;
}

BalanceReport balance_report(const StudyTable& design_table, const PropensityFit& fit,
                             const SubclassAssignment& assignment) {
  return balance_report(design_table, fit.linear_scores, assignment);
}

nlohmann::json BalanceThresholds::to_json() const {
  return {{"max_std_diff", max_std_diff}, {"max_abs_t", max_abs_t}, {"priority", priority}};
}

BalanceThresholds BalanceThresholds::from_json(const nlohmann::json& j) {
  BalanceThresholds t;
  try {
    t.max_std_diff = j.value("max_std_diff", t.max_std_diff);
    t.max_abs_t = j.value("max_abs_t", t.max_abs_t);
    if (j.contains("priority")) t.priority = j.at("priority").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("malformed balance thresholds: ") + e.what());
  }
  return t;
}

BalanceVerdict balance_gate(const BalanceReport& report, const BalanceThresholds& thresholds) {
  if (!(thresholds.max_std_diff > 0) || !(thresholds.max_abs_t > 0))
    fail(ErrorKind::domain, "balance thresholds must be positive");
  BalanceVerdict verdict;
  for (const auto& row : report.rows) {
    if (row.is_score) continue;
    double weight = 1.0;
    if (auto it = thresholds.priority.find(row.name); it != thresholds.priority.end()) weight = it->second;
    const double d = weight * std::abs(row.within_std_diff);
    const double t = weight * std::abs(row.t_statistic_within);
    std::string reason;
    if (d > thresholds.max_std_diff) reason = "within std diff " + format_number(row.within_std_diff);
    if (t > thresholds.max_abs_t)
      reason += (reason.empty() ? "" : "; ") + std::string("within t ") + format_number(row.t_statistic_within);
    if (reason.empty()) continue;
    verdict.pass = false;
    verdict.offending.push_back(row.name);
    verdict.reasons.push_back(row.name + ": " + reason);
  }
  return verdict;
}

std::string love_plot_csv(const BalanceReport& report) {
  std::ostringstream out;
  out << "covariate,before,after,metric\n";
  for (const auto* r : sorted_rows(report))
    out << csv_escape(r->name) << ',' << format_number(std::abs(r->overall_std_diff)) << ','
        << format_number(std::abs(r->within_std_diff)) << ",abs_std_diff\n";
  return out.str();
}

std::string love_plot_svg(const BalanceReport& report, double threshold) {
  const auto rows = sorted_rows(report);
  const int width = 800;
  const int height = 40 + 20 * static_cast<int>(rows.size());
  const double x0 = 260.0, x1 = 780.0;
  double xmax = threshold;
  for (const auto* r : rows) {
    if (std::isfinite(r->overall_std_diff)) xmax = std::max(xmax, std::abs(r->overall_std_diff));
    if (std::isfinite(r->within_std_diff)) xmax = std::max(xmax, std::abs(r->within_std_diff));
  }
  xmax *= 1.1;
  auto px = [&](double v) { return x0 + (x1 - x0) * std::min(std::abs(v), xmax) / xmax; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"10\" y=\"14\" font-family=\"sans-serif\" font-size=\"12\">"
         "|standardized difference|: open = before, filled = after subclassification</text>\n";
  svg << "<line x1=\"" << px(threshold) << "\" y1=\"20\" x2=\"" << px(threshold) << "\" y2=\"" << height - 20
      << "\" stroke=\"red\" stroke-dasharray=\"4,3\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << height - 20 << "\" x2=\"" << x1 << "\" y2=\"" << height - 20
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << x0 << "\" y=\"" << height - 6 << "\" font-family=\"sans-serif\" font-size=\"10\">0</text>\n";
  svg << "<text x=\"" << x1 - 30 << "\" y=\"" << height - 6 << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_number(std::round(xmax * 1000) / 1000) << "</text>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double y = 30.0 + 20.0 * static_cast<double>(i);
    svg << "<text x=\"10\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << svg_escape(rows[i]->name) << "</text>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<circle cx=\"" << px(rows[i]->overall_std_diff) << "\" cy=\"" << y
        << "\" r=\"4\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<circle cx=\"" << px(rows[i]->within_std_diff) << "\" cy=\"" << y << "\" r=\"4\" fill=\"black\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

LovePlotFiles export_love_plot(const BalanceReport& report, const std::filesystem::path& stem, double threshold) {
  if (report.rows.empty()) fail(ErrorKind::domain, "balance report is empty");
  LovePlotFiles files;
  files.csv = stem;
  files.csv += ".csv";
  files.svg = stem;
  files.svg += ".svg";
  for (const auto& [path, body] : {std::pair{files.csv, love_plot_csv(report)},
                                   std::pair{files.svg, love_plot_svg(report, threshold)}}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    out << body;
    if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
  }
  return files;
}

}  // namespace obstudy
