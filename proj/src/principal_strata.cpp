#include "obstudy/principal_strata.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "obstudy/error.hpp"

namespace obstudy {

void ComplianceCounts::validate() const {
  if (n_l() < 1) fail(ErrorKind::domain, "no units assigned l");
  if (n_s() < 1) fail(ErrorKind::domain, "no units assigned s");
}

ComplianceCounts ComplianceCounts::tally(std::span<const int> h, std::span<const int> t) {
  if (h.size() != t.size()) fail(ErrorKind::domain, "assignment and treatment-received differ in length");
  ComplianceCounts c;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if ((h[i] != 0 && h[i] != 1) || (t[i] != 0 && t[i] != 1))
      fail(ErrorKind::domain, "assignment and treatment received must be coded 0/1");
    if (h[i]) (t[i] ? c.n_lL : c.n_lS)++;
    else (t[i] ? c.n_sL : c.n_sS)++;
  }
  return c;
}

StrataProportions estimate_strata(const ComplianceCounts& counts) {
  counts.validate();
  StrataProportions pi;
  pi.pi_SS = static_cast<double>(counts.n_lS) / static_cast<double>(counts.n_l());
  pi.pi_LL = static_cast<double>(counts.n_sL) / static_cast<double>(counts.n_s());
  pi.pi_LS = 1.0 - pi.pi_SS - pi.pi_LL;
  if (!(pi.pi_LS > 0))
    fail(ErrorKind::weak_instrument, "no compliers estimable: pi_SS = " + format_number(pi.pi_SS) +
                                         ", pi_LL = " + format_number(pi.pi_LL) +
                                         ", pi_LS = " + format_number(pi.pi_LS));
  return pi;
}

StrataPercents round_percent(const StrataProportions& pi) {
  StrataPercents p;
  p.pct_LL = static_cast<int>(std::round(100.0 * pi.pi_LL));
  p.pct_SS = static_cast<int>(std::round(100.0 * pi.pi_SS));
  p.pct_LS = 100 - p.pct_LL - p.pct_SS;
  return p;
}

ExpectedLsCounts expected_ls_counts(const ComplianceCounts& counts, const StrataProportions& pi) {
  if (!(pi.pi_LS > 0)) fail(ErrorKind::weak_instrument, "pi_LS must be positive");
  const double mix_l = pi.pi_LS + pi.pi_LL;
  const double mix_s = pi.pi_LS + pi.pi_SS;
  if (!(mix_l > 0) || !(mix_s > 0)) fail(ErrorKind::degenerate_mixture, "complier mixture share is zero");

  ExpectedLsCounts out;
  out.ls_in_lL = static_cast<double>(counts.n_lL) * pi.pi_LS / mix_l;
  out.ls_in_sS = static_cast<double>(counts.n_sS) * pi.pi_LS / mix_s;

  StrataPercents pct = round_percent(pi);
  const double ls = pct.pct_LS;
  const double pl = pct.pct_LS + pct.pct_LL;
  const double ps = pct.pct_LS + pct.pct_SS;
  out.rounded_lL = pl > 0 ? std::lround(static_cast<double>(counts.n_lL) * ls / pl) : 0;
  out.rounded_sS = ps > 0 ? std::lround(static_cast<double>(counts.n_sS) * ls / ps) : 0;
  return out;
}

EffectEstimate itt_by_assignment(std::span<const double> y, std::span<const int> h,
                                 const SubclassAssignment& assignment, const StratifiedOptions& options) {
  return stratified_difference(y, h, assignment, options);
}

CaceEstimate cace(const EffectEstimate& itt, const StrataProportions& pi) {
  if (!(pi.pi_LS > 0)) fail(ErrorKind::weak_instrument, "pi_LS must be positive to estimate CACE");
  CaceEstimate out;
  out.itt = itt.point;
  out.pi_LS = pi.pi_LS;
  out.cace = itt.point / pi.pi_LS;
  if (itt.std_error) out.std_error = *itt.std_error / pi.pi_LS;
  return out;
}

CaceEstimate cace_pooled(std::span<const SubclassCace> per_subclass, CacePooling pooling) {
  if (per_subclass.empty()) fail(ErrorKind::domain, "no subclass estimates to pool");
  std::string offenders;
  for (std::size_t k = 0; k < per_subclass.size(); ++k)
    if (!(per_subclass[k].estimate.pi_LS > 0))
      offenders += (offenders.empty() ? "" : ", ") + std::to_string(k + 1);
  if (!offenders.empty())
    fail(ErrorKind::weak_instrument, "weak instrument (pi_LS <= 0) in subclass(es) " + offenders);

  double n_total = 0.0, mass = 0.0, mass_cace = 0.0, size_cace = 0.0;
  double var_mass = 0.0, var_size = 0.0;
  bool have_se = true;
  for (const auto& s : per_subclass) {
    const double m = s.n_units * s.estimate.pi_LS;
    n_total += s.n_units;
    mass += m;
    mass_cace += m * s.estimate.cace;
    size_cace += s.n_units * s.estimate.cace;
    if (s.estimate.std_error) {
      var_mass += m * m * *s.estimate.std_error * *s.estimate.std_error;
      var_size += s.n_units * s.n_units * *s.estimate.std_error * *s.estimate.std_error;
    } else {
      have_se = false;
    }
  }
  if (!(n_total > 0)) fail(ErrorKind::domain, "subclass sizes must be positive");

  CaceEstimate out;
  out.pi_LS = mass / n_total;
  const double by_mass = mass_cace / mass;
  const double by_size = size_cace / n_total;
  if (pooling == CacePooling::complier_mass) {
    out.cace = by_mass;
    out.itt = mass_cace / n_total;
    out.alternative_cace = by_size;
    if (have_se) out.std_error = std::sqrt(var_mass) / mass;
  } else {
    out.cace = by_size;
    out.itt = by_size * out.pi_LS;
    out.alternative_cace = by_mass;
    if (have_se) out.std_error = std::sqrt(var_size) / n_total;
  }
  for (const auto& s : per_subclass) out.per_subclass.push_back(s.estimate);
  return out;
}

CaceEstimate cace_by_subclass(std::span<const double> y, std::span<const int> h, std::span<const int> t,
                              const SubclassAssignment& assignment, CacePooling pooling) {
  if (y.size() != h.size() || t.size() != h.size() || assignment.labels.size() != h.size())
    fail(ErrorKind::domain, "outcome, assignment, treatment received and labels differ in length");
  std::vector<SubclassCace> parts;
  for (int s = 1; s <= assignment.k; ++s) {
    auto rows = assignment.members(s);
    if (rows.empty()) continue;
    std::vector<double> ys;
    std::vector<int> hs, ts;
    for (auto i : rows) {
      ys.push_back(y[i]);
      hs.push_back(h[i]);
      ts.push_back(t[i]);
    }
    try {
      StrataProportions pi = estimate_strata(ComplianceCounts::tally(hs, ts));
      parts.push_back({cace(crude_difference(ys, hs), pi), static_cast<double>(rows.size())});
    } catch (const Error& e) {
      fail(e.kind(), "subclass " + std::to_string(s) + ": " + e.what());
    }
  }
  return cace_pooled(parts, pooling);
}

nlohmann::json CaceEstimate::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json detail = nlohmann::json::array();
  for (const auto& s : per_subclass) detail.push_back(s.to_json());
  return {{"itt", itt},
          {"pi_ls", pi_LS},
          {"cace", cace},
          {"std_error", opt(std_error)},
          {"alternative_cace", opt(alternative_cace)},
          {"per_subclass", detail}};
}

MonotonicityAudit monotonicity_audit(std::span<const int> h, std::span<const int> t,
                                     const SubclassAssignment& assignment, MonotonicityDirection direction) {
  if (h.size() != t.size() || h.size() != assignment.labels.size())
    fail(ErrorKind::domain, "assignment, treatment received and labels differ in length");
  MonotonicityAudit audit;
  audit.direction = direction;
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> by_subclass;
  for (std::size_t i = 0; i < h.size(); ++i) {
    auto& [hs, ts] = by_subclass[assignment.labels[i]];
    hs.push_back(h[i]);
    ts.push_back(t[i]);
  }
  for (const auto& [s, cells] : by_subclass) {
    SubclassTransfers row;
    row.subclass = s;
    row.counts = ComplianceCounts::tally(cells.first, cells.second);
    row.defier_direction = direction == MonotonicityDirection::no_SL ? row.counts.n_lS : row.counts.n_sL;
    audit.total_l += row.counts.n_l();
    audit.total_s += row.counts.n_s();
    audit.transfers_l_to_S += row.counts.n_lS;
    audit.transfers_s_to_L += row.counts.n_sL;
    audit.defier_direction_total += row.defier_direction;
    if (row.defier_direction > 0) audit.subclasses_with_defier_direction.push_back(s);
    audit.per_subclass.push_back(row);
  }
  audit.clean = audit.defier_direction_total == 0;
  audit.notes.push_back(std::to_string(audit.transfers_s_to_L) + " of the " + std::to_string(audit.total_s) +
                        " assigned s were treated L");
  audit.notes.push_back(std::to_string(audit.transfers_l_to_S) + " of the " + std::to_string(audit.total_l) +
                        " assigned l were treated S");
  if (!audit.clean) {
    std::string where;
    for (int s : audit.subclasses_with_defier_direction)
      where += (where.empty() ? "" : ", ") + (s == kTrimmed ? std::string("trimmed") : std::to_string(s));
    audit.notes.push_back(std::to_string(audit.defier_direction_total) +
                          " transfer(s) run against the assumed direction, only in subclass(es) " + where);
  }
  return audit;
}

nlohmann::json MonotonicityAudit::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : per_subclass)
    rows.push_back({{"subclass", r.subclass},
                    {"n_lL", r.counts.n_lL},
                    {"n_lS", r.counts.n_lS},
                    {"n_sL", r.counts.n_sL},
                    {"n_sS", r.counts.n_sS},
                    {"defier_direction", r.defier_direction}});
  return {{"assumed_empty_stratum", direction == MonotonicityDirection::no_SL ? "SL" : "LS"},
          {"transfers_l_to_s", transfers_l_to_S},
          {"transfers_s_to_l", transfers_s_to_L},
          {"total_l", total_l},
          {"total_s", total_s},
          {"defier_direction_total", defier_direction_total},
          {"subclasses_with_defier_direction", subclasses_with_defier_direction},
          {"clean", clean},
          {"notes", notes},
          {"per_subclass", rows}};
}

std::string strata_table_csv(const std::vector<std::pair<int, ComplianceCounts>>& per_subclass) {
  std::ostringstream out;
  out << "subclass,assigned,treated,n,stratum,proportion,approx_LS_n\n";
  for (const auto& [s, counts] : per_subclass) {
    StrataProportions pi = estimate_strata(counts);
    StrataPercents pct = round_percent(pi);
    ExpectedLsCounts ls = expected_ls_counts(counts, pi);
    auto row = [&](const char* a, const char* t, std::size_t n, const char* stratum, int p, std::string approx) {
      out << s << ',' << a << ',' << t << ',' << n << ',' << stratum << ',' << p << "%," << approx << '\n';
    };
    row("l", "L", counts.n_lL, "LL", pct.pct_LL, "");
    row("l", "L", counts.n_lL, "LS", pct.pct_LS, std::to_string(ls.rounded_lL));
    row("l", "S", counts.n_lS, "SS", pct.pct_SS, "");
    row("s", "L", counts.n_sL, "LL", pct.pct_LL, "");
    row("s", "S", counts.n_sS, "SS", pct.pct_SS, "");
    row("s", "S", counts.n_sS, "LS", pct.pct_LS, std::to_string(ls.rounded_sS));
  }
  return out.str();
}

}  // namespace obstudy
