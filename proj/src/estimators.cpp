#include "obstudy/estimators.hpp"

#include <cmath>
#include <sstream>

#include "obstudy/error.hpp"

namespace obstudy {

namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  if (m.n == 0) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(m.n);
  if (m.n > 1) {
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(m.n - 1);
  }
  return m;
}

void check_lengths(std::span<const double> y, std::span<const int> w) {
  if (y.size() != w.size()) fail(ErrorKind::domain, "outcome and treatment differ in length");
  for (int wi : w)
    if (wi != 0 && wi != 1) fail(ErrorKind::domain, "treatment indicator outside {0,1}");
}

}  // namespace

EffectEstimate crude_difference(std::span<const double> y, std::span<const int> w) {
  check_lengths(y, w);
  std::vector<double> yt, yc;
  for (std::size_t i = 0; i < y.size(); ++i) (w[i] ? yt : yc).push_back(y[i]);
  if (yt.empty() || yc.empty()) fail(ErrorKind::no_contrast, "crude difference needs both arms");
  Moments t = moments(yt), c = moments(yc);

  EffectEstimate est;
  est.point = t.mean - c.mean;
  est.std_error = std::sqrt(t.var / static_cast<double>(t.n) + c.var / static_cast<double>(c.n));
  est.per_subclass.push_back({1, t.n, c.n, t.mean, c.mean, est.point, 1.0, t.var, c.var});
  est.n_effective = y.size();
  return est;
}

EffectEstimate stratified_difference(std::span<const double> y, std::span<const int> w,
                                     const SubclassAssignment& assignment, const StratifiedOptions& options) {
  check_lengths(y, w);
  if (assignment.labels.size() != y.size()) fail(ErrorKind::domain, "subclass labels and outcome differ in length");

  std::map<int, std::array<std::vector<double>, 2>> groups;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (assignment.labels[i] != kTrimmed) groups[assignment.labels[i]][static_cast<std::size_t>(w[i])].push_back(y[i]);

  EffectEstimate est;
  double weight_total = 0.0;
  for (const auto& [s, arms] : groups) {
    if (arms[0].empty() || arms[1].empty()) {
      est.single_arm_subclasses.push_back(s);
      continue;
    }
    Moments t = moments(arms[1]), c = moments(arms[0]);
    SubclassEffect cell{s, t.n, c.n, t.mean, c.mean, t.mean - c.mean, 0.0, t.var, c.var};
    cell.weight = static_cast<double>(options.weighting == StratumWeighting::total_size ? t.n + c.n : t.n);
    weight_total += cell.weight;
    est.n_effective += t.n + c.n;
    if (t.n < options.thin_cell_warning || c.n < options.thin_cell_warning)
      est.warnings.push_back("subclass " + std::to_string(s) + " has a thin arm (n_t=" + std::to_string(t.n) +
                             ", n_c=" + std::to_string(c.n) + ")");
    if (t.n == 1 || c.n == 1)
      est.warnings.push_back("subclass " + std::to_string(s) +
                             " has a single-unit arm; its variance contribution is taken as 0");
    est.per_subclass.push_back(cell);
  }
  if (est.per_subclass.empty()) fail(ErrorKind::total_non_overlap, "no subclass contains both arms");
  for (int s : est.single_arm_subclasses)
    est.warnings.push_back("subclass " + std::to_string(s) + " has a single arm and is excluded");

  double point = 0.0, var = 0.0;
  for (auto& cell : est.per_subclass) {
    cell.weight /= weight_total;
    point += cell.weight * cell.diff;
    var += cell.weight * cell.weight *
           (*cell.var_treated / static_cast<double>(cell.n_treated) + *cell.var_control / static_cast<double>(cell.n_control));
  }
  est.point = point;
  est.std_error = std::sqrt(var);
  return est;
}

std::vector<int> GroupedData::single_arm_subclasses() const {
  std::vector<int> out;
  for (const auto& [s, arms] : cells)
    if (!arms[0] || !arms[1]) out.push_back(s);
  return out;
}

GroupedData grouped_ingest(std::span<const GroupedRow> rows) {
  GroupedData g;
  for (const auto& r : rows) {
    if (r.arm != 0 && r.arm != 1) fail(ErrorKind::schema, "grouped row arm must be 0 or 1");
    if (r.n < 1) fail(ErrorKind::schema, "grouped row for subclass " + std::to_string(r.subclass) + " has n < 1");
    auto& slot = g.cells[r.subclass][static_cast<std::size_t>(r.arm)];
    if (slot)
      fail(ErrorKind::schema, "duplicate grouped cell (subclass " + std::to_string(r.subclass) + ", arm " +
                                  std::to_string(r.arm) + ")");
    slot = GroupedCell{r.n, r.mean};
  }
  return g;
}

EffectEstimate stratified_difference(const GroupedData& grouped, const StratifiedOptions& options) {
  EffectEstimate est;
  double weight_total = 0.0;
  for (const auto& [s, arms] : grouped.cells) {
    if (!arms[0] || !arms[1]) {
      est.single_arm_subclasses.push_back(s);
      est.warnings.push_back("subclass " + std::to_string(s) + " has a single arm and is excluded");
      continue;
    }
    const auto& t = *arms[1];
    const auto& c = *arms[0];
    SubclassEffect cell{s, t.n, c.n, t.mean, c.mean, t.mean - c.mean, 0.0, std::nullopt, std::nullopt};
    cell.weight = static_cast<double>(options.weighting == StratumWeighting::total_size ? t.n + c.n : t.n);
    weight_total += cell.weight;
    est.n_effective += t.n + c.n;
    est.per_subclass.push_back(cell);
  }
  if (est.per_subclass.empty()) fail(ErrorKind::total_non_overlap, "no subclass contains both arms");
  for (auto& cell : est.per_subclass) {
    cell.weight /= weight_total;
    est.point += cell.weight * cell.diff;
  }
  return est;
}

nlohmann::json EffectEstimate::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : per_subclass)
    cells.push_back({{"subclass", c.subclass},
                     {"n_treated", c.n_treated},
                     {"n_control", c.n_control},
                     {"mean_treated", c.mean_treated},
                     {"mean_control", c.mean_control},
                     {"diff", c.diff},
                     {"weight", c.weight},
                     {"var_treated", opt(c.var_treated)},
                     {"var_control", opt(c.var_control)}});
  return {{"point", point},
          {"std_error", opt(std_error)},
          {"n_effective", n_effective},
          {"single_arm_subclasses", single_arm_subclasses},
          {"warnings", warnings},
          {"per_subclass", cells}};
}

std::string EffectEstimate::to_csv() const {
  std::ostringstream out;
  out << "subclass,n_treated,n_control,mean_treated,mean_control,diff,weight,std_error\n";
  for (const auto& c : per_subclass)
    out << c.subclass << ',' << c.n_treated << ',' << c.n_control << ',' << format_number(c.mean_treated) << ','
        << format_number(c.mean_control) << ',' << format_number(c.diff) << ',' << format_number(c.weight) << ",\n";
  std::size_t nt = 0, nc = 0;
  for (const auto& c : per_subclass) {
    nt += c.n_treated;
    nc += c.n_control;
  }
  out << "TOTAL," << nt << ',' << nc << ",,," << format_number(point) << ",1,"
      << (std_error ? format_number(*std_error) : std::string()) << '\n';
  return out.str();
}

}  // namespace obstudy
