#include "obstudy/workspace.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "obstudy/audit.hpp"
#include "obstudy/balance.hpp"
#include "obstudy/digest.hpp"
#include "obstudy/estimators.hpp"
#include "obstudy/principal_strata.hpp"
#include "obstudy/propensity.hpp"
#include "obstudy/protocol.hpp"
#include "obstudy/quarantine.hpp"
#include "obstudy/replicate.hpp"
#include "obstudy/subclass.hpp"

namespace obstudy {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::blinding_violation:
    case ErrorKind::tamper: return exit_code::blinding;
    case ErrorKind::separation:
    case ErrorKind::weak_instrument:
    case ErrorKind::collinearity:
    case ErrorKind::degenerate_mixture: return exit_code::numerical;
    default: return exit_code::input;
  }
}

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kState = "state.json";
constexpr const char* kDesign = "design.csv";
constexpr const char* kSchema = "schema.json";
constexpr const char* kSealed = "sealed.json";
constexpr const char* kAudit = "audit.jsonl";
constexpr const char* kFit = "fit.json";
constexpr const char* kOverlap = "overlap.json";
constexpr const char* kSubclass = "subclass.json";
constexpr const char* kBalance = "balance.json";
constexpr const char* kLovePlot = "love_plot";
constexpr const char* kProtocol = "protocol.json";
constexpr const char* kResults = "results";
constexpr const char* kLock = ".lock";

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// One writer per workspace: the lock file is created exclusively and
/// removed when the command finishes.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(fs::path dir) : path_(std::move(dir) / kLock) {
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      fail(ErrorKind::io, "workspace is locked by another command (" + path_.string() +
                              "); remove the file if no other command is running");
    std::fclose(f);
  }
  ~WorkspaceLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  fs::path path_;
};

struct Context {
  fs::path dir;
  std::ostream& out;
  std::ostream& err;
  AuditRecord record;

  fs::path at(const char* name) const { return dir / name; }
  void input_file(const std::string& key, const fs::path& p) { record.input_digests[key] = sha256_file(p); }
  void output_file(const std::string& key, const fs::path& p) { record.output_digests[key] = sha256_file(p); }
};

Phase load_phase(const Context& ctx) {
  if (!fs::exists(ctx.at(kState)))
    fail(ErrorKind::phase, "'" + ctx.dir.string() + "' is not a workspace (run ingest first)");
  try {
    return phase_from_string(read_json(ctx.at(kState)).at("phase").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::schema, std::string("malformed workspace state: ") + e.what());
  }
}

void save_phase(Context& ctx, Phase phase) {
  write_json(ctx.at(kState), {{"phase", std::string(to_string(phase))}});
  ctx.record.phase = phase;
}

void require_design_phase(const Context& ctx) {
  Phase p = load_phase(ctx);
  if (p != Phase::design)
    fail(ErrorKind::protocol_frozen,
         "the design protocol is frozen (phase " + std::string(to_string(p)) + "); design commands are closed");
}

StudyTable load_design(Context& ctx) {
  Schema schema = Schema::from_json(read_json(ctx.at(kSchema)));
  ctx.input_file("design_table", ctx.at(kDesign));
  StudyTable table = load_csv(ctx.at(kDesign), schema);
  table.require_no_outcomes("design");
  return table;
}

std::vector<int> binary_column(const StudyTable& table, const std::string& name) {
  const Column& c = table.column(name);
  if (c.kind != Kind::binary) fail(ErrorKind::schema, "column '" + name + "' must be binary");
  std::vector<int> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = static_cast<int>(c.values[i]);
  return out;
}

const Column& outcome_column(const StudyTable& table, const std::string& name) {
  if (!name.empty()) {
    const Column& c = table.column(name);
    if (c.role != Role::outcome) fail(ErrorKind::schema, "column '" + name + "' is not an outcome");
    return c;
  }
  auto outs = table.with_role(Role::outcome);
  if (outs.empty()) fail(ErrorKind::schema, "no outcome column");
  return *outs.front();
}

void remove_if_exists(const fs::path& p) {
  std::error_code ec;
  fs::remove(p, ec);
}

json fit_json(const PropensityFit& fit, const ModelSpec& spec) {
  return {{"model_spec", spec.to_json()},
          {"labels", fit.labels},
          {"coefficients", fit.coefficients},
          {"standardized_coefficients", fit.standardized_coefficients},
          {"log_likelihood", fit.log_likelihood},
          {"log_likelihood_trace", fit.log_likelihood_trace},
          {"iterations", fit.iterations},
          {"converged", fit.converged},
          {"linear_scores", fit.linear_scores},
          {"probabilities", fit.probabilities}};
}

json overlap_json(const OverlapReport& r) {
  json bins = json::array(), ranges = json::array();
  for (const auto& b : r.bins)
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n_treated", b.n_treated}, {"n_control", b.n_control},
                    {"tag", std::string(to_string(b.tag))}});
  for (const auto& s : r.no_inference_ranges)
    ranges.push_back({{"lo", s.lo}, {"hi", s.hi}, {"tag", std::string(to_string(s.tag))}});
  return {{"bins", bins}, {"no_inference_ranges", ranges}, {"degenerate", r.degenerate}};
}

// ---- commands -------------------------------------------------------------

struct IngestArgs {
  std::string csv;
  std::string schema;
  std::string restrict;
};

int cmd_ingest(Context& ctx, const IngestArgs& a) {
  if (fs::exists(ctx.at(kState)))
    fail(ErrorKind::phase, "'" + ctx.dir.string() + "' already holds a workspace");
  ctx.input_file("csv", a.csv);
  ctx.input_file("schema", a.schema);
  Schema schema = Schema::from_json(read_json(a.schema));
  StudyTable table = load_csv(a.csv, schema);

  std::optional<ExclusionLog> exclusion;
  if (!a.restrict.empty()) {
    // column:lo:hi
    auto first = a.restrict.find(':'), last = a.restrict.rfind(':');
    if (first == std::string::npos || first == last)
      fail(ErrorKind::schema, "--restrict expects column:lo:hi");
    double lo = 0, hi = 0;
    try {
      lo = std::stod(a.restrict.substr(first + 1, last - first - 1));
      hi = std::stod(a.restrict.substr(last + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::schema, "--restrict bounds must be numbers");
    }
    RangeRestriction r = restrict_range(table, a.restrict.substr(0, first), lo, hi);
    table = std::move(r.table);
    exclusion = r.log;
  }

  Quarantine q = quarantine_outcomes(table);
  save_csv(ctx.at(kDesign), q.design_table);
  write_json(ctx.at(kSchema), schema_of(q.design_table).to_json());
  write_json(ctx.at(kSealed), q.sealed.to_json());
  ctx.output_file("design_table", ctx.at(kDesign));
  ctx.output_file("schema", ctx.at(kSchema));
  ctx.record.output_digests["sealed_outcomes"] = q.sealed.payload_digest();
  if (exclusion) {
    json ex{{"column", exclusion->column},         {"lo", exclusion->lo},
            {"hi", exclusion->hi},                 {"n_below", exclusion->n_below},
            {"n_above", exclusion->n_above},       {"n_retained", exclusion->n_retained}};
    write_json(ctx.at("exclusions.json"), ex);
    ctx.output_file("exclusions", ctx.at("exclusions.json"));
  }
  save_phase(ctx, Phase::design);

  ctx.out << "ingested " << q.design_table.n_units() << " units into " << ctx.dir.string() << "\n";
  if (exclusion)
    ctx.out << "restriction " << exclusion->column << " in [" << format_number(exclusion->lo) << ", "
            << format_number(exclusion->hi) << "] dropped " << exclusion->n_below + exclusion->n_above
            << " units\n";
  ctx.out << "sealed outcome columns:";
  for (const auto& n : q.sealed.column_names()) ctx.out << ' ' << n;
  ctx.out << "\nseal digest " << q.sealed.payload_digest() << "\n";
  return exit_code::ok;
}

struct FitArgs {
  std::string model;
  int bins = 10;
};

int cmd_fit(Context& ctx, const FitArgs& a) {
  require_design_phase(ctx);
  StudyTable table = load_design(ctx);
  ModelSpec spec;
  if (!a.model.empty()) {
    ctx.input_file("model", a.model);
    spec = ModelSpec::from_json(read_json(a.model));
  } else {
    for (const Column* c : table.with_role(Role::covariate)) spec.terms.push_back(Term::main(c->name));
  }
  spec.validate(table);
  PropensityFit fit = fit_propensity(table, spec);
  SeparationReport sep = detect_separation(fit);
  if (sep.flagged) {
    std::string terms;
    for (const auto& t : sep.suspect_terms) terms += (terms.empty() ? "" : ", ") + t;
    fail(ErrorKind::separation, "complete or quasi-complete separation: " + std::to_string(sep.degenerate_units.size()) +
                                    " units with fitted propensity at 0 or 1; suspect terms: " + terms);
  }
  auto w = table.treatment_indicator();
  OverlapReport overlap = overlap_histogram(fit, w, a.bins);

  write_json(ctx.at(kFit), fit_json(fit, spec));
  write_text(ctx.at("fit.csv"), fit_summary_csv(fit));
  ctx.output_file("fit_csv", ctx.at("fit.csv"));
  write_json(ctx.at(kOverlap), overlap_json(overlap));
  ctx.output_file("fit", ctx.at(kFit));
  ctx.output_file("overlap", ctx.at(kOverlap));
  remove_if_exists(ctx.at(kSubclass));
  remove_if_exists(ctx.at(kBalance));
  ctx.record.phase = Phase::design;

  ctx.out << "propensity fit: " << fit.iterations << " iterations, "
          << (fit.converged ? "converged" : "NOT converged") << ", log-likelihood "
          << format_number(fit.log_likelihood) << "\n";
  for (std::size_t j = 0; j < fit.labels.size(); ++j)
    ctx.out << "  " << std::left << std::setw(28) << fit.labels[j] << format_number(fit.coefficients[j]) << "\n";
  for (const auto& r : overlap.no_inference_ranges)
    ctx.out << "no common support on linear score [" << format_number(r.lo) << ", " << format_number(r.hi) << "] ("
            << to_string(r.tag) << ")\n";
  if (!fit.converged) ctx.err << "warning: the propensity fit did not converge\n";
  return exit_code::ok;
}

struct SubclassArgs {
  std::string method = "quantile";
  int k = 5;
  std::string score_col;
  bool no_trim = false;
};

int cmd_subclass(Context& ctx, const SubclassArgs& a) {
  require_design_phase(ctx);
  StudyTable table = load_design(ctx);
  std::vector<double> scores;
  std::string score_name;
  if (!a.score_col.empty()) {
    const Column& c = table.column(a.score_col);
    if (c.role != Role::covariate || c.kind == Kind::categorical)
      fail(ErrorKind::schema, "score column '" + a.score_col + "' must be a numeric covariate");
    scores = c.values;
    score_name = a.score_col;
  } else {
    if (!fs::exists(ctx.at(kFit))) fail(ErrorKind::phase, "no propensity fit; run design fit or pass --score-col");
    ctx.input_file("fit", ctx.at(kFit));
    scores = read_json(ctx.at(kFit)).at("linear_scores").get<std::vector<double>>();
    score_name = std::string(kScoreRowName);
  }
  if (scores.size() != table.n_units()) fail(ErrorKind::tamper, "stored scores do not match the design table");

  SubclassMethod method = subclass_method_from_string(a.method);
  SubclassAssignment sa = method == SubclassMethod::equal_frequency
                              ? subclassify_equal_frequency(scores, a.k, score_name)
                              : subclassify_equal_width(scores, a.k, score_name);
  auto w = table.treatment_indicator();
  if (!a.no_trim) sa = trim_nonoverlap(sa, w);

  write_json(ctx.at(kSubclass), sa.to_json());
  ctx.output_file("subclass", ctx.at(kSubclass));
  for (const Column* id : table.with_role(Role::unit_id)) {
    write_text(ctx.at("subclass.csv"), assignment_csv(sa, *id));
    ctx.output_file("subclass_csv", ctx.at("subclass.csv"));
    break;
  }
  write_json(ctx.at("trim_log.json"), trim_log_json(sa));
  ctx.output_file("trim_log", ctx.at("trim_log.json"));
  remove_if_exists(ctx.at(kBalance));

  ctx.out << "subclass,n_treated,n_control\n";
  for (int s = 1; s <= sa.k; ++s) {
    std::size_t nt = 0, nc = 0;
    for (auto i : sa.members(s)) (w[i] ? nt : nc)++;
    if (nt + nc) ctx.out << s << ',' << nt << ',' << nc << "\n";
  }
  for (const auto& t : sa.trim_log)
    ctx.out << "trimmed subclass " << t.subclass << " (" << t.n_dropped << " units): " << t.reason << "\n";
  return exit_code::ok;
}

struct BalanceArgs {
  std::string thresholds;
};

int cmd_balance(Context& ctx, const BalanceArgs& a) {
  require_design_phase(ctx);
  StudyTable table = load_design(ctx);
  if (!fs::exists(ctx.at(kSubclass))) fail(ErrorKind::phase, "no subclassification; run design subclass first");
  ctx.input_file("subclass", ctx.at(kSubclass));
  SubclassAssignment sa = SubclassAssignment::from_json(read_json(ctx.at(kSubclass)));
  std::vector<double> scores;
  if (sa.score_name == kScoreRowName) {
    ctx.input_file("fit", ctx.at(kFit));
    scores = read_json(ctx.at(kFit)).at("linear_scores").get<std::vector<double>>();
  } else {
    scores = table.column(sa.score_name).values;
  }
  BalanceThresholds thresholds;
  if (!a.thresholds.empty()) {
    ctx.input_file("thresholds", a.thresholds);
    thresholds = BalanceThresholds::from_json(read_json(a.thresholds));
  }

  BalanceReport report = balance_report(table, scores, sa);
  BalanceVerdict verdict = balance_gate(report, thresholds);
  LovePlotFiles plot = export_love_plot(report, ctx.dir / kLovePlot, thresholds.max_std_diff);
  write_json(ctx.at(kBalance), {{"thresholds", thresholds.to_json()},
                                {"report", report.to_json()},
                                {"verdict", {{"pass", verdict.pass}, {"offending", verdict.offending},
                                             {"reasons", verdict.reasons}}}});
  ctx.output_file("balance", ctx.at(kBalance));
  ctx.output_file("love_plot_csv", plot.csv);
  ctx.output_file("love_plot_svg", plot.svg);

  ctx.out << "covariate,overall_std_diff,within_std_diff,t_within\n";
  for (const auto& r : report.rows)
    ctx.out << r.name << ',' << format_number(r.overall_std_diff) << ',' << format_number(r.within_std_diff) << ','
            << format_number(r.t_statistic_within) << "\n";
  if (verdict.pass) {
    ctx.out << "balance gate: pass\n";
    return exit_code::ok;
  }
  ctx.out << "balance gate: FAIL\n";
  for (const auto& r : verdict.reasons) ctx.out << "  " << r << "\n";
  ctx.record.note = "balance gate failed";
  return exit_code::balance_fail;
}

struct FreezeArgs {
  bool allow_imbalance = false;
};

int cmd_freeze(Context& ctx, const FreezeArgs& a) {
  require_design_phase(ctx);
  if (!fs::exists(ctx.at(kSubclass))) fail(ErrorKind::phase, "no subclassification to freeze");
  ctx.input_file("subclass", ctx.at(kSubclass));
  SubclassAssignment sa = SubclassAssignment::from_json(read_json(ctx.at(kSubclass)));

  DesignProtocol protocol;
  if (sa.score_name == kScoreRowName) {
    ctx.input_file("fit", ctx.at(kFit));
    protocol.set_model_spec(ModelSpec::from_json(read_json(ctx.at(kFit)).at("model_spec")));
  } else {
    protocol.set_model_spec(ModelSpec{{Term::main(sa.score_name)}, false});
  }
  protocol.set_subclass_plan({sa.method, sa.k, sa.score_name});
  if (fs::exists(ctx.at(kBalance))) {
    ctx.input_file("balance", ctx.at(kBalance));
    json b = read_json(ctx.at(kBalance));
    protocol.set_thresholds(BalanceThresholds::from_json(b.at("thresholds")));
    if (!b.at("verdict").at("pass").get<bool>() && !a.allow_imbalance) {
      ctx.err << "obstudy: the last balance check failed; rerun the design or pass --allow-imbalance\n";
      ctx.record.note = "freeze refused: balance gate failed";
      return exit_code::balance_fail;
    }
  }
  protocol.freeze(sa.labels);
  write_json(ctx.at(kProtocol), protocol.to_json());
  ctx.record.output_digests["protocol"] = protocol.freeze_digest();
  save_phase(ctx, Phase::frozen);
  ctx.out << "frozen " << protocol.freeze_digest() << "\n";
  return exit_code::ok;
}

struct Frozen {
  DesignProtocol protocol;
  SubclassAssignment assignment;
  StudyTable table;
};

/// Shared prologue of every analyze command: refuses (and records a
/// violation) unless the protocol is frozen, then verifies the frozen
/// artifacts and optionally unseals the outcomes.
Frozen open_frozen(Context& ctx, bool unseal) {
  Phase p = load_phase(ctx);
  if (p == Phase::design)
    fail(ErrorKind::blinding_violation, "analysis requested before the design protocol was frozen");
  ctx.input_file("protocol", ctx.at(kProtocol));
  DesignProtocol protocol = DesignProtocol::from_json(read_json(ctx.at(kProtocol)));
  ctx.input_file("subclass", ctx.at(kSubclass));
  SubclassAssignment sa = SubclassAssignment::from_json(read_json(ctx.at(kSubclass)));
  if (sa.labels != protocol.labels())
    fail(ErrorKind::tamper, "subclass assignment differs from the frozen protocol");
  StudyTable table = load_design(ctx);
  if (unseal) {
    SealedOutcomes sealed = SealedOutcomes::from_json(read_json(ctx.at(kSealed)));
    auto cols = unseal_outcomes(sealed, protocol, ctx.record);
    table = table.with_columns(std::move(cols));
  }
  fs::create_directories(ctx.dir / kResults);
  save_phase(ctx, Phase::analysis);
  return {std::move(protocol), std::move(sa), std::move(table)};
}

void emit(Context& ctx, const std::string& key, const json& j) {
  fs::path p = ctx.dir / kResults / (key + ".json");
  write_json(p, j);
  ctx.output_file(key, p);
  ctx.out << j.dump(2) << "\n";
}

void emit_text(Context& ctx, const std::string& file, const std::string& text) {
  fs::path p = ctx.dir / kResults / file;
  write_text(p, text);
  ctx.output_file(file, p);
}

struct AnalyzeArgs {
  std::string outcome;
  std::string assignment_col;
  std::string treated_col;
  std::string weighting = "total";
  std::string pooling = "mass";
  std::string direction = "no_SL";
};

std::vector<int> assignment_of(const StudyTable& table, const AnalyzeArgs& a) {
  return a.assignment_col.empty() ? table.treatment_indicator() : binary_column(table, a.assignment_col);
}

int cmd_estimate(Context& ctx, const AnalyzeArgs& a) {
  Frozen f = open_frozen(ctx, true);
  const Column& y = outcome_column(f.table, a.outcome);
  auto w = f.table.treatment_indicator();
  StratifiedOptions opts;
  if (a.weighting == "treated") opts.weighting = StratumWeighting::treated_size;
  else if (a.weighting != "total") fail(ErrorKind::schema, "--weighting must be total or treated");
  EffectEstimate strat = stratified_difference(y.values, w, f.assignment, opts);
  EffectEstimate crude = crude_difference(y.values, w);
  emit_text(ctx, "estimate.csv", strat.to_csv());
  emit(ctx, "estimate", {{"outcome", y.name}, {"stratified", strat.to_json()}, {"crude", crude.to_json()}});
  for (const auto& wmsg : strat.warnings) ctx.err << "warning: " << wmsg << "\n";
  return exit_code::ok;
}

int cmd_itt(Context& ctx, const AnalyzeArgs& a) {
  Frozen f = open_frozen(ctx, true);
  const Column& y = outcome_column(f.table, a.outcome);
  auto h = assignment_of(f.table, a);
  EffectEstimate itt = itt_by_assignment(y.values, h, f.assignment);
  emit_text(ctx, "itt.csv", itt.to_csv());
  emit(ctx, "itt", {{"outcome", y.name}, {"itt", itt.to_json()}});
  return exit_code::ok;
}

MonotonicityDirection direction_of(const std::string& d) {
  if (d == "no_SL" || d == "no_sl") return MonotonicityDirection::no_SL;
  if (d == "no_LS" || d == "no_ls") return MonotonicityDirection::no_LS;
  fail(ErrorKind::schema, "--direction must be no_SL or no_LS");
}

int cmd_strata(Context& ctx, const AnalyzeArgs& a) {
  Frozen f = open_frozen(ctx, false);
  auto h = assignment_of(f.table, a);
  auto t = binary_column(f.table, a.treated_col);
  MonotonicityAudit audit = monotonicity_audit(h, t, f.assignment, direction_of(a.direction));

  std::vector<std::pair<int, ComplianceCounts>> per;
  json strata = json::array();
  for (const auto& row : audit.per_subclass) {
    if (row.subclass == kTrimmed) continue;
    per.emplace_back(row.subclass, row.counts);
    StrataProportions pi = estimate_strata(row.counts);
    StrataPercents pct = round_percent(pi);
    ExpectedLsCounts ls = expected_ls_counts(row.counts, pi);
    strata.push_back({{"subclass", row.subclass},
                      {"pi_ll", pi.pi_LL}, {"pi_ls", pi.pi_LS}, {"pi_ss", pi.pi_SS},
                      {"pct_ll", pct.pct_LL}, {"pct_ls", pct.pct_LS}, {"pct_ss", pct.pct_SS},
                      {"approx_ls_in_lL", ls.rounded_lL}, {"approx_ls_in_sS", ls.rounded_sS}});
  }
  std::string csv = strata_table_csv(per);
  emit_text(ctx, "strata.csv", csv);
  fs::path mp = ctx.dir / kResults / "monotonicity.json";
  write_json(mp, audit.to_json());
  ctx.output_file("monotonicity", mp);
  fs::path sp = ctx.dir / kResults / "strata.json";
  write_json(sp, strata);
  ctx.output_file("strata", sp);
  ctx.out << csv;
  for (const auto& n : audit.notes) ctx.out << "# " << n << "\n";
  return exit_code::ok;
}

int cmd_cace(Context& ctx, const AnalyzeArgs& a) {
  Frozen f = open_frozen(ctx, true);
  const Column& y = outcome_column(f.table, a.outcome);
  auto h = assignment_of(f.table, a);
  auto t = binary_column(f.table, a.treated_col);
  CacePooling pooling = CacePooling::complier_mass;
  if (a.pooling == "size") pooling = CacePooling::subclass_size;
  else if (a.pooling != "mass") fail(ErrorKind::schema, "--pooling must be mass or size");
  CaceEstimate c = cace_by_subclass(y.values, h, t, f.assignment, pooling);
  json j = c.to_json();
  j["outcome"] = y.name;
  j["pooling"] = a.pooling;
  emit(ctx, "cace", j);
  return exit_code::ok;
}

struct SimulateArgs {
  std::string spec;
  int reps = 100;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  unsigned threads = 0;
};

int cmd_simulate(std::ostream& out, const SimulateArgs& a) {
  Recipe recipe = study_recipe(read_json(a.spec));
  ReplicationRun run = replicate(recipe, a.reps, a.seed, a.threads);
  fs::create_directories(a.out_dir);
  write_text(fs::path(a.out_dir) / "replications.csv", run.to_csv());
  json summary = run.summary_json();
  write_json(fs::path(a.out_dir) / "summary.json", summary);
  out << summary.dump(2) << "\n";
  return exit_code::ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Design-then-analyze workflow for observational studies", "obstudy"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string workspace = ".";
  app.add_option("-w,--workspace", workspace, "Workspace directory (one study per directory)");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Load a CSV, seal its outcome columns and create the workspace");
  c_ingest->add_option("csv", ingest.csv, "Input CSV")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--schema", ingest.schema, "Schema JSON (column roles)")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--restrict", ingest.restrict, "Keep rows with lo <= column <= hi (column:lo:hi)");

  auto* c_design = app.add_subcommand("design", "Design-phase commands (outcomes stay sealed)");
  c_design->require_subcommand(1);
  c_design->fallthrough();
  FitArgs fit;
  auto* c_fit = c_design->add_subcommand("fit", "Fit the propensity score model");
  c_fit->add_option("--model", fit.model, "Model spec JSON (default: main effects of every covariate)")
      ->check(CLI::ExistingFile);
  c_fit->add_option("--bins", fit.bins, "Overlap histogram bins")->capture_default_str();
  SubclassArgs sub;
  auto* c_sub = c_design->add_subcommand("subclass", "Subclassify on the linear propensity score");
  c_sub->add_option("--method", sub.method, "quantile or width")
      ->check(CLI::IsMember({"quantile", "width"}))
      ->capture_default_str();
  c_sub->add_option("--k", sub.k, "Number of subclasses")->capture_default_str();
  c_sub->add_option("--score-col", sub.score_col, "Subclassify on this covariate instead of the fitted score");
  c_sub->add_flag("--no-trim", sub.no_trim, "Keep single-arm subclasses");
  BalanceArgs bal;
  auto* c_bal = c_design->add_subcommand("balance", "Balance diagnostics, Love plot and gate");
  c_bal->add_option("--thresholds", bal.thresholds, "Threshold JSON")->check(CLI::ExistingFile);
  FreezeArgs frz;
  auto* c_frz = c_design->add_subcommand("freeze", "Freeze the design protocol");
  c_frz->add_flag("--allow-imbalance", frz.allow_imbalance, "Freeze even though the balance gate failed");

  auto* c_an = app.add_subcommand("analyze", "Analysis-phase commands (require a frozen protocol)");
  c_an->require_subcommand(1);
  c_an->fallthrough();
  AnalyzeArgs an;
  auto* c_est = c_an->add_subcommand("estimate", "Stratified treatment effect");
  c_est->add_option("--outcome", an.outcome, "Outcome column (default: first)");
  c_est->add_option("--weighting", an.weighting, "total or treated")->capture_default_str();
  auto* c_itt = c_an->add_subcommand("itt", "Intention-to-treat effect of an assignment column");
  c_itt->add_option("--assignment-col", an.assignment_col, "Binary assignment column (default: treatment)");
  c_itt->add_option("--outcome", an.outcome, "Outcome column (default: first)");
  auto* c_str = c_an->add_subcommand("strata", "Principal strata table and monotonicity audit");
  c_str->add_option("--treated-col", an.treated_col, "Treatment-received column")->required();
  c_str->add_option("--assignment-col", an.assignment_col, "Binary assignment column (default: treatment)");
  c_str->add_option("--direction", an.direction, "Stratum assumed empty: no_SL or no_LS")->capture_default_str();
  auto* c_cace = c_an->add_subcommand("cace", "Complier average causal effect pooled over subclasses");
  c_cace->add_option("--treated-col", an.treated_col, "Treatment-received column")->required();
  c_cace->add_option("--assignment-col", an.assignment_col, "Binary assignment column (default: treatment)");
  c_cace->add_option("--outcome", an.outcome, "Outcome column (default: first)");
  c_cace->add_option("--pooling", an.pooling, "mass (N_k * pi_LS,k) or size (N_k)")->capture_default_str();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Replicated simulation study from a JSON spec");
  c_sim->add_option("spec", sim.spec, "Study spec JSON")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--reps", sim.reps, "Replications")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "Base seed")->required();
  c_sim->add_option("--out", sim.out_dir, "Output directory")->capture_default_str();
  c_sim->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_code::ok : exit_code::input;
  }

  if (c_sim->parsed()) {
    try {
      return cmd_simulate(out, sim);
    } catch (const Error& e) {
      err << "obstudy: " << to_string(e.kind()) << ": " << e.what() << "\n";
      return exit_code_for(e.kind());
    }
  }

  Context ctx{workspace, out, err, {}};
  ctx.record.timestamp = utc_timestamp();
  ctx.record.command = args;
  std::optional<WorkspaceLock> lock;
  int code = exit_code::ok;
  try {
    if (c_ingest->parsed()) fs::create_directories(ctx.dir);
    if (!fs::is_directory(ctx.dir)) fail(ErrorKind::io, "workspace '" + workspace + "' does not exist");
    lock.emplace(ctx.dir);
    if (fs::exists(ctx.at(kState))) ctx.record.phase = load_phase(ctx);

    if (c_ingest->parsed()) code = cmd_ingest(ctx, ingest);
    else if (c_fit->parsed()) code = cmd_fit(ctx, fit);
    else if (c_sub->parsed()) code = cmd_subclass(ctx, sub);
    else if (c_bal->parsed()) code = cmd_balance(ctx, bal);
    else if (c_frz->parsed()) code = cmd_freeze(ctx, frz);
    else if (c_est->parsed()) code = cmd_estimate(ctx, an);
    else if (c_itt->parsed()) code = cmd_itt(ctx, an);
    else if (c_str->parsed()) code = cmd_strata(ctx, an);
    else if (c_cace->parsed()) code = cmd_cace(ctx, an);
  } catch (const Error& e) {
    err << "obstudy: " << to_string(e.kind()) << ": " << e.what() << "\n";
    code = exit_code_for(e.kind());
    ctx.record.note = std::string(to_string(e.kind())) + ": " + e.what();
    if (e.kind() == ErrorKind::blinding_violation || e.kind() == ErrorKind::tamper) {
      ctx.record.violation = true;
      ctx.record.outcome_access = OutcomeAccess::refused;
    }
  } catch (const std::exception& e) {
    err << "obstudy: " << e.what() << "\n";
    code = exit_code::input;
    ctx.record.note = e.what();
  }
  ctx.record.exit_code = code;
  // A lock held by someone else means this command never touched the workspace.
  if (lock) {
    try {
      AuditLog::open(ctx.at(kAudit)).append(ctx.record);
    } catch (const std::exception& e) {
      err << "obstudy: could not write the audit record: " << e.what() << "\n";
      if (code == exit_code::ok) code = exit_code::input;
    }
  }
  return code;
}

}  // namespace obstudy
