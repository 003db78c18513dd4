#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obstudy/error.hpp"
#include "obstudy/model_spec.hpp"
#include "obstudy/propensity.hpp"
#include "obstudy/rng.hpp"

using namespace obstudy;

namespace {

StudyTable make_table(std::vector<Column> covariates, std::vector<double> w) {
  covariates.push_back({"w", Role::treatment, Kind::binary, std::move(w), {}});
  return StudyTable("t", std::move(covariates));
}

Column num(std::string name, std::vector<double> v) { return {std::move(name), Role::covariate, Kind::numeric, std::move(v), {}}; }

// Random design with a logistic assignment; deterministic per seed.
StudyTable simulated(std::uint64_t seed, std::size_t n, double slope = 1.0) {
  Rng rng(seed);
  std::vector<double> x1(n), x2(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.uniform() * 4 - 2;
    double eta = -0.3 + slope * x1[i] - 0.5 * x2[i];
    w[i] = rng.bernoulli(1 / (1 + std::exp(-eta))) ? 1 : 0;
  }
  return make_table({num("x1", x1), num("x2", x2)}, w);
}

ModelSpec mains(std::initializer_list<const char*> cols) {
  ModelSpec m;
  for (auto c : cols) m.terms.push_back(Term::main(c));
  return m;
}

}  // namespace

TEST_CASE("design matrix expansion") {
  StudyTable t = make_table({num("age", {40, 50, 60}), {"married", Role::covariate, Kind::binary, {1, 0, 1}, {}}},
                            {0, 1, 1});
  SUBCASE("intercept first") {
    DesignMatrix dm = expand_design_matrix(t, mains({"age"}));
    CHECK(dm.labels == std::vector<std::string>{"(intercept)", "age"});
    Eigen::MatrixXd expected(3, 2);
    expected << 1, 40, 1, 50, 1, 60;
    CHECK(dm.values == expected);
  }
  SUBCASE("power term") {
    ModelSpec m{{Term::main("age"), Term::power("age", 2)}, true};
    DesignMatrix dm = expand_design_matrix(t, m);
    CHECK(dm.values(2, 2) == 3600);
    CHECK(dm.labels[2] == "age^2");
  }
  SUBCASE("interaction term is the elementwise product") {
    ModelSpec m{{Term::main("age"), Term::main("married"), Term::interaction("age", "married")}, true};
    DesignMatrix dm = expand_design_matrix(t, m);
    REQUIRE(dm.values.cols() == 4);
    for (int i = 0; i < 3; ++i) CHECK(dm.values(i, 3) == dm.values(i, 1) * dm.values(i, 2));
  }
  SUBCASE("categorical main uses the first sorted level as reference") {
    StudyTable c = make_table({{"g", Role::covariate, Kind::categorical, {0, 1, 2, 1}, {"a", "b", "c"}}}, {0, 1, 0, 1});
    DesignMatrix dm = expand_design_matrix(c, mains({"g"}));
    CHECK(dm.labels == std::vector<std::string>{"(intercept)", "g[b]", "g[c]"});
    CHECK(dm.values(2, 2) == 1);
    CHECK(dm.values(0, 1) == 0);
  }
  SUBCASE("constant covariate") {
    StudyTable c = make_table({num("k", {3, 3, 3})}, {0, 1, 0});
    CHECK_THROWS_WITH_AS(expand_design_matrix(c, mains({"k"})), doctest::Contains("constant"), Error);
  }
}

TEST_CASE("model spec validation and JSON") {
  StudyTable t = make_table({num("age", {40, 50, 60})}, {0, 1, 1});
  CHECK_THROWS_AS(mains({"w"}).validate(t), Error);
  CHECK_THROWS_AS(mains({"nope"}).validate(t), Error);
  CHECK_THROWS_AS((ModelSpec{{Term::main("age"), Term::main("age")}, true}.validate(t)), Error);
  ModelSpec m{{Term::main("age"), Term::interaction("age", "sex"), Term::power("age", 3)}, false};
  ModelSpec back = ModelSpec::from_json(m.to_json());
  CHECK(back.terms == m.terms);
  CHECK_FALSE(back.include_intercept);
  CHECK(Term::interaction("a", "b") == Term::interaction("b", "a"));
}

TEST_CASE("intercept-only fit recovers the treated share") {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(10, 1);
  std::vector<int> w = {1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  PropensityFit fit = fit_logistic(ones, w, {"(intercept)"});
  CHECK(std::abs(fit.coefficients[0] - (-0.8472978603872036)) < 1e-10);
  for (double e : fit.probabilities) CHECK(std::abs(e - 0.3) < 1e-12);
  CHECK(fit.converged);
  CHECK_FALSE(detect_separation(fit).flagged);
}

TEST_CASE("eight-row fixture matches the frozen brute-force MLE") {
  // grid search + refinement and Nelder-Mead both give (-0.232310, 1.074621)
  const std::vector<double> x = {-2, -1.2, -0.5, 0.1, 0.4, 1.0, 1.5, 2.3};
  const std::vector<int> w = {0, 0, 1, 0, 1, 0, 1, 1};
  Eigen::MatrixXd m(8, 2);
  for (int i = 0; i < 8; ++i) m(i, 0) = 1, m(i, 1) = x[static_cast<std::size_t>(i)];
  PropensityFit fit = fit_logistic(m, w, {"(intercept)", "x"});
  CHECK(std::abs(fit.coefficients[0] - (-0.232310)) < 1e-3);
  CHECK(std::abs(fit.coefficients[1] - 1.074621) < 1e-3);
  CHECK(fit_summary_csv(fit).rfind("term,coefficient\n(intercept),", 0) == 0);
}

TEST_CASE("flipping W negates every coefficient") {
  StudyTable t = simulated(3, 300);
  PropensityFit a = fit_propensity(t, mains({"x1", "x2"}));
  std::vector<double> flipped(t.n_units());
  for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] = 1 - t.treatment().values[i];
  StudyTable f = make_table({t.column("x1"), t.column("x2")}, flipped);
  PropensityFit b = fit_propensity(f, mains({"x1", "x2"}));
  for (std::size_t j = 0; j < a.coefficients.size(); ++j) CHECK(b.coefficients[j] == doctest::Approx(-a.coefficients[j]).epsilon(1e-8));
}

TEST_CASE("fit invariants over seeded designs") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    StudyTable t = simulated(seed, 80 + 20 * seed);
    ModelSpec m{{Term::main("x1"), Term::main("x2"), Term::power("x1", 2), Term::interaction("x1", "x2")}, true};
    DesignMatrix dm = expand_design_matrix(t, m);
    auto w = t.treatment_indicator();
    PropensityFit fit = fit_logistic(dm, w);
    REQUIRE(fit.converged);
    REQUIRE_FALSE(fit.separation_flag);
    CHECK(max_score_component(dm.values, w, fit) < 1e-6);
    double se = std::accumulate(fit.probabilities.begin(), fit.probabilities.end(), 0.0);
    CHECK(std::abs(se - std::accumulate(w.begin(), w.end(), 0.0)) < 1e-6);
    for (std::size_t i = 0; i < w.size(); ++i)
      CHECK(std::abs(fit.probabilities[i] - 1 / (1 + std::exp(-fit.linear_scores[i]))) < 1e-12);
    for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k)
      CHECK(fit.log_likelihood_trace[k] >= fit.log_likelihood_trace[k - 1] - 1e-12);
  }
}

TEST_CASE("rescaling a covariate leaves the score ranking unchanged") {
  StudyTable t = simulated(9, 400);
  std::vector<double> scaled = t.column("x1").values;
  for (double& v : scaled) v *= 1000;
  StudyTable s = make_table({num("x1", scaled), t.column("x2")}, t.treatment().values);
  auto a = fit_propensity(t, mains({"x1", "x2"})).linear_scores;
  auto b = fit_propensity(s, mains({"x1", "x2"})).linear_scores;
  std::vector<std::size_t> ra(a.size()), rb(b.size());
  std::iota(ra.begin(), ra.end(), 0);
  std::iota(rb.begin(), rb.end(), 0);
  std::sort(ra.begin(), ra.end(), [&](auto i, auto j) { return a[i] < a[j]; });
  std::sort(rb.begin(), rb.end(), [&](auto i, auto j) { return b[i] < b[j]; });
  CHECK(ra == rb);
}

TEST_CASE("fit errors") {
  StudyTable t = make_table({num("x", {1, 2, 3, 4})}, {1, 1, 1, 1});
  CHECK_THROWS_WITH_AS(fit_propensity(t, mains({"x"})), doctest::Contains("one treatment arm"), Error);

  StudyTable c = make_table({num("a", {1, 2, 3, 4, 5}), num("b", {2, 4, 6, 8, 10})}, {0, 1, 0, 1, 1});
  try {
    fit_propensity(c, mains({"a", "b"}));
    FAIL("expected collinearity");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::collinearity);
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("separation is flagged, never penalized away") {
  SUBCASE("perfectly separated covariate") {
    StudyTable t = make_table({num("x", {-3, -2, -1, -0.5, 0.5, 1, 2, 3})}, {0, 0, 0, 0, 1, 1, 1, 1});
    PropensityFit fit = fit_propensity(t, mains({"x"}));
    SeparationReport r = detect_separation(fit);
    CHECK(r.flagged);
    CHECK(r.suspect_terms == std::vector<std::string>{"x"});
  }
  SUBCASE("quasi-separated categorical level") {
    // level c is always treated; the rest is mixed
    std::vector<double> g = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2};
    std::vector<double> w = {0, 1, 0, 1, 1, 0, 0, 1, 1, 1, 1};
    std::vector<double> z = {0.3, -1, 0.2, 1.1, -0.4, 0.8, -0.9, 0.1, 0.5, -0.2, 0.7};
    StudyTable t = make_table({{"g", Role::covariate, Kind::categorical, g, {"a", "b", "c"}}, num("z", z)}, w);
    PropensityFit fit = fit_propensity(t, mains({"g", "z"}));
    SeparationReport r = detect_separation(fit);
    CHECK(r.flagged);
    CHECK(std::find(r.suspect_terms.begin(), r.suspect_terms.end(), "g[c]") != r.suspect_terms.end());
    CHECK(std::find(r.suspect_terms.begin(), r.suspect_terms.end(), "z") == r.suspect_terms.end());
    CHECK_FALSE(r.degenerate_units.empty());
  }
}

TEST_CASE("overlap histogram") {
  SUBCASE("score equal to W") {
    std::vector<double> eta = {0, 0, 1, 1, 1};
    std::vector<int> w = {0, 0, 1, 1, 1};
    OverlapReport r = overlap_histogram(eta, w, 2);
    REQUIRE(r.bins.size() == 2);
    CHECK(r.bins[0].tag == BinTag::control_only);
    CHECK(r.bins[1].tag == BinTag::treated_only);
    CHECK(r.no_inference_ranges.size() == 2);
  }
  SUBCASE("identical arm distributions") {
    std::vector<double> eta;
    std::vector<int> w;
    for (int i = 0; i < 50; ++i)
      for (int a = 0; a < 2; ++a) eta.push_back(i * 0.1), w.push_back(a);
    OverlapReport r = overlap_histogram(eta, w, 7);
    for (const auto& b : r.bins)
      if (b.n_treated + b.n_control > 0) CHECK(b.tag == BinTag::both_arms);
    CHECK(r.no_inference_ranges.empty());
  }
  SUBCASE("constant score is degenerate") {
    std::vector<double> eta = {2, 2, 2};
    std::vector<int> w = {0, 1, 0};
    OverlapReport r = overlap_histogram(eta, w, 4);
    CHECK(r.degenerate);
    CHECK(r.bins.size() == 1);
  }
  SUBCASE("strong logistic assignment leaves single-arm tails") {
    int tails = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      StudyTable t = simulated(100 + seed, 1000, 3.0);
      PropensityFit fit = fit_propensity(t, mains({"x1", "x2"}));
      OverlapReport r = overlap_histogram(fit, t.treatment_indicator(), 15);
      bool low = r.bins.front().tag == BinTag::control_only;
      bool high = r.bins.back().tag == BinTag::treated_only;
      if (low && high) ++tails;
      for (std::size_t b = 5; b < 10; ++b) CHECK(r.bins[b].tag == BinTag::both_arms);
    }
    CHECK(tails >= 16);
  }
  CHECK_THROWS_AS(overlap_histogram(std::vector<double>{1, 2}, std::vector<int>{0, 1}, 1), Error);
}
