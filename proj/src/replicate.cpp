#include "obstudy/replicate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include "obstudy/error.hpp"
#include "obstudy/estimators.hpp"
#include "obstudy/principal_strata.hpp"
#include "obstudy/propensity.hpp"
#include "obstudy/rng.hpp"
#include "obstudy/simulation.hpp"
#include "obstudy/subclass.hpp"

namespace obstudy {

nlohmann::json EstimatorSummary::to_json() const {
  return {{"estimator", estimator}, {"n_ok", n_ok},     {"n_failed", n_failed},
          {"mean", mean},           {"sd", sd},         {"mean_truth", mean_truth},
          {"bias", bias},           {"mc_se", mc_se},
          {"coverage", coverage ? nlohmann::json(*coverage) : nlohmann::json(nullptr)}};
}

const EstimatorSummary& ReplicationRun::at(const std::string& estimator) const {
  auto it = summary.find(estimator);
  if (it == summary.end()) fail(ErrorKind::domain, "no replication summary for estimator '" + estimator + "'");
  return it->second;
}

std::string ReplicationRun::to_csv() const {
  std::ostringstream out;
  out << "replication,seed,estimator,estimate,truth,std_error,error\n";
  for (const auto& rec : records) {
    for (const auto& [name, d] : rec.outcome.draws)
      out << rec.replication << ',' << rec.seed << ',' << name << ',' << format_number(d.estimate) << ','
          << format_number(d.truth) << ',' << (d.std_error ? format_number(*d.std_error) : "") << ",\n";
    for (const auto& [name, msg] : rec.outcome.errors)
      out << rec.replication << ',' << rec.seed << ',' << name << ",,,," << csv_escape(msg) << '\n';
  }
  return out.str();
}

nlohmann::json ReplicationRun::summary_json() const {
  nlohmann::json est = nlohmann::json::array();
  for (const auto& [name, s] : summary) est.push_back(s.to_json());
  return {{"replications", replications}, {"base_seed", base_seed}, {"generator", generator},
          {"estimators", est}};
}

ReplicationRun replicate(const Recipe& recipe, int replications, std::uint64_t base_seed, unsigned threads) {
  if (replications < 2) fail(ErrorKind::domain, "replicate needs R >= 2");
  ReplicationRun run;
  run.replications = replications;
  run.base_seed = base_seed;
  run.generator = std::string(Rng::kIdentity);
  run.records.resize(static_cast<std::size_t>(replications));

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(replications));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r; (r = next.fetch_add(1)) < replications;) {
      ReplicationRecord& rec = run.records[static_cast<std::size_t>(r)];
      rec.replication = r + 1;
      rec.seed = base_seed + static_cast<std::uint64_t>(r + 1);
      try {
        rec.outcome = recipe(rec.seed);
      } catch (const std::exception& e) {
        rec.outcome = {};
        rec.outcome.errors["*"] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::set<std::string> names;
  for (const auto& rec : run.records) {
    for (const auto& [n, d] : rec.outcome.draws) names.insert(n);
    for (const auto& [n, e] : rec.outcome.errors)
      if (n != "*") names.insert(n);
  }
  for (const auto& name : names) {
    EstimatorSummary s;
    s.estimator = name;
    double sum = 0, sum_truth = 0;
    std::vector<double> errs;
    int with_se = 0, covered = 0;
    for (const auto& rec : run.records) {
      auto it = rec.outcome.draws.find(name);
      if (it == rec.outcome.draws.end()) {
        ++s.n_failed;
        continue;
      }
      const Draw& d = it->second;
      ++s.n_ok;
      sum += d.estimate;
      sum_truth += d.truth;
      errs.push_back(d.estimate - d.truth);
      if (d.std_error) {
        ++with_se;
        if (std::abs(d.estimate - d.truth) <= 1.959963984540054 * *d.std_error) ++covered;
      }
    }
    if (s.n_ok > 0) {
      s.mean = sum / s.n_ok;
      s.mean_truth = sum_truth / s.n_ok;
      double mean_err = 0;
      for (double e : errs) mean_err += e;
      mean_err /= s.n_ok;
      s.bias = mean_err;
      double ss = 0, ss_est = 0;
      for (const auto& rec : run.records) {
        auto it = rec.outcome.draws.find(name);
        if (it != rec.outcome.draws.end()) ss_est += std::pow(it->second.estimate - s.mean, 2);
      }
      for (double e : errs) ss += (e - mean_err) * (e - mean_err);
      if (s.n_ok > 1) {
        s.sd = std::sqrt(ss_est / (s.n_ok - 1));
        s.mc_se = std::sqrt(ss / (s.n_ok - 1)) / std::sqrt(static_cast<double>(s.n_ok));
      }
      if (with_se == s.n_ok) s.coverage = static_cast<double>(covered) / s.n_ok;
    }
    run.summary[name] = s;
  }
  return run;
}

namespace {

struct Analysis {
  std::string score = "fitted";
  std::optional<ModelSpec> model;
  SubclassMethod method = SubclassMethod::equal_frequency;
  int k = 5;
  std::vector<std::string> estimators;
};

ModelSpec default_model(const StudyTable& table) {
  ModelSpec m;
  for (const Column* c : table.with_role(Role::covariate)) m.terms.push_back(Term::main(c->name));
  return m;
}

std::vector<double> subclass_scores(const Analysis& a, const StudyTable& table, const std::vector<double>& e) {
  if (a.score == "fitted") {
    StudyTable design = table.without_role(Role::outcome);
    PropensityFit fit = fit_propensity(design, a.model ? *a.model : default_model(design));
    if (fit.separation_flag) fail(ErrorKind::separation, "propensity fit separated");
    return fit.linear_scores;
  }
  if (a.score == "true") {
    std::vector<double> out(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = std::log(e[i] / (1.0 - e[i]));
    return out;
  }
  return table.column(a.score).values;
}

SubclassAssignment make_subclasses(const Analysis& a, const std::vector<double>& scores, std::span<const int> w) {
  SubclassAssignment sa = a.method == SubclassMethod::equal_frequency
                              ? subclassify_equal_frequency(scores, a.k, a.score)
                              : subclassify_equal_width(scores, a.k, a.score);
  return trim_nonoverlap(sa, w);
}

template <class F>
void attempt(ReplicationOutcome& out, const std::string& name, F&& f) {
  try {
    out.draws[name] = f();
  } catch (const std::exception& e) {
    out.errors[name] = e.what();
  }
}

Draw from_estimate(const EffectEstimate& e, double truth) { return {e.point, truth, e.std_error}; }

}  // namespace

Recipe study_recipe(const nlohmann::json& study) {
  ScienceSpec science;
  MechanismSpec mechanism;
  std::optional<NoncomplianceSpec> noncompliance;
  Analysis analysis;
  try {
    science = ScienceSpec::from_json(study.at("science"));
    mechanism = MechanismSpec::from_json(study.at("mechanism"));
    if (study.contains("noncompliance")) noncompliance = NoncomplianceSpec::from_json(study.at("noncompliance"));
    const auto a = study.value("analysis", nlohmann::json::object());
    analysis.score = a.value("score", analysis.score);
    if (a.contains("model")) analysis.model = ModelSpec::from_json(a.at("model"));
    analysis.method = subclass_method_from_string(a.value("method", std::string("quantile")));
    analysis.k = a.value("k", analysis.k);
    std::vector<std::string> defaults = noncompliance ? std::vector<std::string>{"itt", "cace"}
                                                      : std::vector<std::string>{"crude", "stratified"};
    analysis.estimators = a.value("estimators", defaults);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("malformed study spec: ") + e.what());
  }
  const std::set<std::string> allowed = noncompliance ? std::set<std::string>{"itt", "cace", "cace_overall"}
                                                      : std::set<std::string>{"crude", "stratified"};
  for (const auto& e : analysis.estimators)
    if (!allowed.count(e)) fail(ErrorKind::spec, "estimator '" + e + "' is not available for this study");

  return [=](std::uint64_t seed) {
    ScienceSpec sci = science;
    MechanismSpec mech = mechanism;
    sci.seed = derive_seed(seed, 101);
    mech.seed = derive_seed(seed, 202);
    ReplicationOutcome out;
    auto wants = [&](const char* n) {
      return std::find(analysis.estimators.begin(), analysis.estimators.end(), n) != analysis.estimators.end();
    };

    if (!noncompliance) {
      Science s = generate_science(sci);
      AssignmentDraw a = assign(s, mech);
      StudyTable obs = reveal(s, a.w);
      const auto& y = obs.column("y").values;
      const double truth = s.average_effect();
      if (wants("crude")) attempt(out, "crude", [&] { return from_estimate(crude_difference(y, a.w), truth); });
      if (wants("stratified"))
        attempt(out, "stratified", [&] {
          auto sa = make_subclasses(analysis, subclass_scores(analysis, obs, a.e), a.w);
          return from_estimate(stratified_difference(y, a.w, sa), truth);
        });
      return out;
    }

    EncouragementData d = generate_encouragement(sci, *noncompliance, mech);
    const auto& y = d.observed.column("y").values;
    std::vector<int> h = d.observed.treatment_indicator();
    std::vector<int> t(h.size());
    const auto& tv = d.observed.column("T").values;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<int>(tv[i]);
    double itt_truth = 0;
    for (std::size_t i = 0; i < h.size(); ++i) itt_truth += d.y_l[i] - d.y_s[i];
    itt_truth /= static_cast<double>(h.size());

    std::vector<double> e(h.size(), 0.5);
    if (wants("itt"))
      attempt(out, "itt", [&] { return from_estimate(crude_difference(y, h), itt_truth); });
    if (wants("cace_overall"))
      attempt(out, "cace_overall", [&] {
        auto c = cace(crude_difference(y, h), estimate_strata(ComplianceCounts::tally(h, t)));
        return Draw{c.cace, d.true_cace, c.std_error};
      });
    if (wants("cace"))
      attempt(out, "cace", [&] {
        auto sa = make_subclasses(analysis, subclass_scores(analysis, d.observed, e), h);
        auto c = cace_by_subclass(y, h, t, sa);
        if (std::abs(c.cace * c.pi_LS - c.itt) > 1e-10)
          fail(ErrorKind::degenerate, "pooled CACE does not reproduce the pooled ITT");
        return Draw{c.cace, d.true_cace, c.std_error};
      });
    return out;
  };
}

}  // namespace obstudy
