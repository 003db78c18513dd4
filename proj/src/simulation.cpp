#include "obstudy/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obstudy/error.hpp"
#include "obstudy/rng.hpp"

namespace obstudy {

namespace {

enum Streams : std::uint64_t { kCovariates = 1, kNoise = 2, kAssign = 3, kStrata = 4 };

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::standard_normal: return "standard_normal";
    case Distribution::bernoulli: return "bernoulli";
    case Distribution::uniform: return "uniform";
  }
  return "?";
}

Distribution distribution_from_string(std::string_view s) {
  if (s == "standard_normal" || s == "normal") return Distribution::standard_normal;
  if (s == "bernoulli") return Distribution::bernoulli;
  if (s == "uniform") return Distribution::uniform;
  fail(ErrorKind::spec, "unknown covariate distribution '" + std::string(s) + "'");
}

std::string_view to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::completely_randomized: return "completely_randomized";
    case MechanismKind::unconfounded_logistic: return "unconfounded_logistic";
    case MechanismKind::confounded: return "confounded";
  }
  return "?";
}

MechanismKind mechanism_from_string(std::string_view s) {
  if (s == "completely_randomized") return MechanismKind::completely_randomized;
  if (s == "unconfounded_logistic") return MechanismKind::unconfounded_logistic;
  if (s == "confounded") return MechanismKind::confounded;
  fail(ErrorKind::spec, "unknown mechanism kind '" + std::string(s) + "'");
}

template <class F>
auto spec_json(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("malformed ") + what + ": " + e.what());
  }
}

std::vector<double> checked(const LinearPredictor& lp, const StudyTable& frame, const char* what) {
  for (const auto& [term, coef] : lp.terms) {
    const Column* c = frame.find(term.column);
    if (!c || c->role != Role::covariate)
      fail(ErrorKind::spec, std::string(what) + " references unknown covariate '" + term.column + "'");
  }
  return lp.evaluate(frame);
}

std::vector<double> draw_covariates(const ScienceSpec& spec, std::vector<Column>& cols) {
  Rng rng(spec.seed, kCovariates);
  for (const auto& cs : spec.covariates) {
    Column c;
    c.name = cs.name;
    c.role = Role::covariate;
    c.kind = cs.distribution == Distribution::bernoulli ? Kind::binary : Kind::numeric;
    c.values.resize(spec.n_units);
    for (auto& v : c.values) {
      switch (cs.distribution) {
        case Distribution::standard_normal: v = rng.normal(); break;
        case Distribution::bernoulli: v = rng.bernoulli(cs.p) ? 1.0 : 0.0; break;
        case Distribution::uniform: v = cs.a + (cs.b - cs.a) * rng.uniform(); break;
      }
    }
    cols.push_back(std::move(c));
  }
  Rng noise(spec.seed, kNoise);
  std::vector<double> eps(spec.n_units);
  for (auto& e : eps) e = spec.sigma * noise.normal();
  return eps;
}

StudyTable science_frame(const ScienceSpec& spec, std::vector<Column> covariates) {
  Column id{"id", Role::unit_id, Kind::numeric, {}, {}};
  id.values.resize(spec.n_units);
  std::iota(id.values.begin(), id.values.end(), 1.0);
  Column w{"w", Role::treatment, Kind::binary, std::vector<double>(spec.n_units, 0.0), {}};
  std::vector<Column> cols;
  cols.push_back(std::move(id));
  for (auto& c : covariates) cols.push_back(std::move(c));
  cols.push_back(std::move(w));
  return StudyTable("science", std::move(cols));
}

std::vector<Column> covariate_columns(const StudyTable& frame) {
  std::vector<Column> out;
  for (const Column* c : frame.with_role(Role::covariate)) out.push_back(*c);
  return out;
}

double clip(double e, std::size_t& n_clipped) {
  constexpr double lo = 1e-12;
  if (e < lo || e > 1.0 - lo) {
    ++n_clipped;
    return std::clamp(e, lo, 1.0 - lo);
  }
  return e;
}

}  // namespace

void ScienceSpec::validate() const {
  if (n_units < 1) fail(ErrorKind::spec, "science needs n_units >= 1");
  if (!(sigma >= 0) || !std::isfinite(sigma)) fail(ErrorKind::spec, "noise sigma must be finite and >= 0");
  for (const auto& c : covariates) {
    if (c.name.empty() || c.name == "id" || c.name == "w" || c.name == "y")
      fail(ErrorKind::spec, "covariate name '" + c.name + "' is empty or reserved");
    if (c.distribution == Distribution::bernoulli && !(c.p >= 0 && c.p <= 1))
      fail(ErrorKind::spec, "bernoulli p for '" + c.name + "' must lie in [0,1]");
    if (c.distribution == Distribution::uniform && !(c.a < c.b && std::isfinite(c.a) && std::isfinite(c.b)))
      fail(ErrorKind::spec, "uniform bounds for '" + c.name + "' need a < b");
  }
}

nlohmann::json ScienceSpec::to_json() const {
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& c : covariates) {
    nlohmann::json j{{"name", c.name}, {"distribution", std::string(to_string(c.distribution))}};
    if (c.distribution == Distribution::bernoulli) j["p"] = c.p;
    if (c.distribution == Distribution::uniform) {
      j["a"] = c.a;
      j["b"] = c.b;
    }
    covs.push_back(j);
  }
  return {{"n_units", n_units}, {"covariates", covs}, {"g0", g0.to_json()},
          {"tau", tau.to_json()}, {"sigma", sigma},   {"seed", seed}};
}

ScienceSpec ScienceSpec::from_json(const nlohmann::json& j) {
  ScienceSpec s = spec_json("science spec", [&] {
    ScienceSpec s;
    s.n_units = j.at("n_units").get<std::size_t>();
    for (const auto& c : j.at("covariates")) {
      CovariateSpec cs;
      cs.name = c.at("name").get<std::string>();
      cs.distribution = distribution_from_string(c.value("distribution", std::string("standard_normal")));
      cs.p = c.value("p", 0.5);
      cs.a = c.value("a", 0.0);
      cs.b = c.value("b", 1.0);
      s.covariates.push_back(cs);
    }
    s.g0 = LinearPredictor::from_json(j.value("g0", nlohmann::json(0.0)));
    s.tau = LinearPredictor::from_json(j.value("tau", nlohmann::json(0.0)));
    s.sigma = j.value("sigma", 1.0);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
  });
  s.validate();
  return s;
}

std::vector<double> Science::unit_effects() const {
  std::vector<double> t(y0.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = y1[i] - y0[i];
  return t;
}

double Science::average_effect() const {
  auto t = unit_effects();
  return std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
}

Science generate_science(const ScienceSpec& spec) {
  spec.validate();
  std::vector<Column> covs;
  auto eps = draw_covariates(spec, covs);
  StudyTable frame = science_frame(spec, std::move(covs));
  auto g0 = checked(spec.g0, frame, "g0");
  auto tau = checked(spec.tau, frame, "tau");
  Science s{std::move(frame), {}, {}};
  s.y0.resize(spec.n_units);
  s.y1.resize(spec.n_units);
  for (std::size_t i = 0; i < spec.n_units; ++i) {
    s.y0[i] = g0[i] + eps[i];
    s.y1[i] = s.y0[i] + tau[i];
  }
  return s;
}

nlohmann::json MechanismSpec::to_json() const {
  nlohmann::json j{{"kind", std::string(to_string(kind))}, {"seed", seed}};
  if (kind == MechanismKind::completely_randomized) j["n_treated"] = n_treated;
  else j["gamma"] = gamma.to_json();
  if (kind == MechanismKind::confounded) j["lambda"] = lambda;
  return j;
}

MechanismSpec MechanismSpec::from_json(const nlohmann::json& j) {
  return spec_json("mechanism spec", [&] {
    MechanismSpec m;
    m.kind = mechanism_from_string(j.at("kind").get<std::string>());
    m.n_treated = j.value("n_treated", std::size_t{0});
    m.gamma = LinearPredictor::from_json(j.value("gamma", nlohmann::json(0.0)));
    m.lambda = j.value("lambda", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    if (m.kind == MechanismKind::completely_randomized && !j.contains("n_treated"))
      fail(ErrorKind::spec, "completely_randomized needs n_treated");
    return m;
  });
}

AssignmentDraw assign(const Science& science, const MechanismSpec& mech) {
  const std::size_t n = science.n_units();
  AssignmentDraw out;
  out.w.assign(n, 0);
  out.e.assign(n, 0.0);
  Rng rng(mech.seed, kAssign);

  if (mech.kind == MechanismKind::completely_randomized) {
    if (mech.n_treated > n) fail(ErrorKind::spec, "n_treated exceeds n_units");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (std::size_t i = 0; i < mech.n_treated; ++i) out.w[idx[i]] = 1;
    std::fill(out.e.begin(), out.e.end(), static_cast<double>(mech.n_treated) / static_cast<double>(n));
    return out;
  }

  auto eta = checked(mech.gamma, science.frame, "mechanism");
  std::size_t n_clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double lin = eta[i];
    if (mech.kind == MechanismKind::confounded) lin += mech.lambda * science.y0[i];
    double e = clip(1.0 / (1.0 + std::exp(-lin)), n_clipped);
    out.e[i] = e;
    out.w[i] = rng.bernoulli(e) ? 1 : 0;
  }
  if (n_clipped)
    out.warnings.push_back(std::to_string(n_clipped) + " propensities clipped to [1e-12, 1-1e-12]");
  return out;
}

StudyTable reveal(const Science& science, std::span<const int> w) {
  const std::size_t n = science.n_units();
  if (w.size() != n) fail(ErrorKind::domain, "assignment length does not match the science");
  std::vector<Column> cols;
  cols.push_back(science.frame.column("id"));
  for (auto& c : covariate_columns(science.frame)) cols.push_back(std::move(c));
  Column wc{"w", Role::treatment, Kind::binary, std::vector<double>(n), {}};
  Column y{"y", Role::outcome, Kind::numeric, std::vector<double>(n), {}};
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] != 0 && w[i] != 1) fail(ErrorKind::domain, "assignment must be coded 0/1");
    wc.values[i] = w[i];
    y.values[i] = w[i] ? science.y1[i] : science.y0[i];
  }
  cols.push_back(std::move(wc));
  cols.push_back(std::move(y));
  return StudyTable("observed", std::move(cols));
}

std::string_view to_string(Stratum g) {
  switch (g) {
    case Stratum::LL: return "LL";
    case Stratum::LS: return "LS";
    case Stratum::SS: return "SS";
  }
  return "?";
}

nlohmann::json NoncomplianceSpec::to_json() const {
  return {{"pi_ll", pi_LL.to_json()},   {"pi_ls", pi_LS.to_json()}, {"pi_ss", pi_SS.to_json()},
          {"tau_ls", tau_LS.to_json()}, {"tau_ll", tau_LL},         {"tau_ss", tau_SS},
          {"exclusion_restrictions", exclusion_restrictions}};
}

NoncomplianceSpec NoncomplianceSpec::from_json(const nlohmann::json& j) {
  NoncomplianceSpec s = spec_json("noncompliance spec", [&] {
    NoncomplianceSpec s;
    s.pi_LL = LinearPredictor::from_json(j.at("pi_ll"));
    s.pi_LS = LinearPredictor::from_json(j.at("pi_ls"));
    s.pi_SS = LinearPredictor::from_json(j.at("pi_ss"));
    s.tau_LS = LinearPredictor::from_json(j.value("tau_ls", nlohmann::json(0.0)));
    s.tau_LL = j.value("tau_ll", 0.0);
    s.tau_SS = j.value("tau_ss", 0.0);
    s.exclusion_restrictions = j.value("exclusion_restrictions", true);
    return s;
  });
  if (s.exclusion_restrictions && (s.tau_LL != 0.0 || s.tau_SS != 0.0))
    fail(ErrorKind::spec, "exclusion restrictions require tau_ll = tau_ss = 0");
  return s;
}

EncouragementData generate_encouragement(const ScienceSpec& spec, const NoncomplianceSpec& nc,
                                         const MechanismSpec& encouragement) {
  if (nc.exclusion_restrictions && (nc.tau_LL != 0.0 || nc.tau_SS != 0.0))
    fail(ErrorKind::spec, "exclusion restrictions require tau_ll = tau_ss = 0");
  // Y(s) comes from the science's control arm; the science's tau is unused here.
  ScienceSpec base = spec;
  base.tau = LinearPredictor::constant(0.0);
  Science science = generate_science(base);
  const std::size_t n = science.n_units();

  EncouragementData d{science.frame, {}, {}, {}, {}, {}, {}, 0.0};
  d.pi_LL = checked(nc.pi_LL, science.frame, "pi_ll");
  d.pi_LS = checked(nc.pi_LS, science.frame, "pi_ls");
  d.pi_SS = checked(nc.pi_SS, science.frame, "pi_ss");
  auto tau_ls = checked(nc.tau_LS, science.frame, "tau_ls");
  for (std::size_t i = 0; i < n; ++i) {
    const double a = d.pi_LL[i], b = d.pi_LS[i], c = d.pi_SS[i];
    if (a < 0 || b < 0 || c < 0 || std::abs(a + b + c - 1.0) > 1e-9)
      fail(ErrorKind::spec, "strata membership probabilities for unit " + std::to_string(i + 1) +
                                " must be non-negative and sum to 1 (got " + format_number(a + b + c) + ")");
  }

  AssignmentDraw h = assign(science, encouragement);
  Rng rng(spec.seed, kStrata);
  d.strata.resize(n);
  d.y_s = science.y0;
  d.y_l.resize(n);
  Column hc{"h", Role::treatment, Kind::binary, std::vector<double>(n), {}};
  Column tc{"T", Role::intermediate, Kind::binary, std::vector<double>(n), {}};
  Column y{"y", Role::outcome, Kind::numeric, std::vector<double>(n), {}};
  double ls_sum = 0.0;
  std::size_t ls_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    Stratum g = u < d.pi_LL[i] ? Stratum::LL : (u < d.pi_LL[i] + d.pi_LS[i] ? Stratum::LS : Stratum::SS);
    d.strata[i] = g;
    double effect = g == Stratum::LS ? tau_ls[i] : (g == Stratum::LL ? nc.tau_LL : nc.tau_SS);
    d.y_l[i] = d.y_s[i] + effect;
    if (g == Stratum::LS) {
      ls_sum += effect;
      ++ls_n;
    }
    const int hi = h.w[i];
    const int t = g == Stratum::LL ? 1 : (g == Stratum::SS ? 0 : hi);
    hc.values[i] = hi;
    tc.values[i] = t;
    y.values[i] = hi ? d.y_l[i] : d.y_s[i];
  }
  d.true_cace = ls_n ? ls_sum / static_cast<double>(ls_n) : 0.0;

  std::vector<Column> cols;
  cols.push_back(science.frame.column("id"));
  for (auto& c : covariate_columns(science.frame)) cols.push_back(std::move(c));
  cols.push_back(std::move(hc));
  cols.push_back(std::move(tc));
  cols.push_back(std::move(y));
  d.observed = StudyTable("encouragement", std::move(cols));
  return d;
}

}  // namespace obstudy
