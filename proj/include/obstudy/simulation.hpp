#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/model_spec.hpp"
#include "obstudy/table.hpp"

namespace obstudy {

enum class Distribution { standard_normal, bernoulli, uniform };

struct CovariateSpec {
  std::string name;
  Distribution distribution = Distribution::standard_normal;
  double p = 0.5;  // bernoulli
  double a = 0.0;  // uniform lower
  double b = 1.0;  // uniform upper
};

struct ScienceSpec {
  std::size_t n_units = 0;
  std::vector<CovariateSpec> covariates;
  LinearPredictor g0;
  LinearPredictor tau;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ScienceSpec from_json(const nlohmann::json& j);
};

/// The full array [X, Y(0), Y(1)]. `frame` holds an `id` column, the
/// covariates and a placeholder all-zero treatment column so linear
/// predictors can be evaluated against it.
struct Science {
  StudyTable frame;
  std::vector<double> y0;
  std::vector<double> y1;

  std::size_t n_units() const { return y0.size(); }
  std::vector<double> unit_effects() const;
  double average_effect() const;
};

Science generate_science(const ScienceSpec& spec);

enum class MechanismKind { completely_randomized, unconfounded_logistic, confounded };

struct MechanismSpec {
  MechanismKind kind = MechanismKind::unconfounded_logistic;
  std::size_t n_treated = 0;   // completely_randomized
  LinearPredictor gamma;       // logit over covariate terms
  double lambda = 0.0;         // confounded: coefficient on Y(0)
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static MechanismSpec from_json(const nlohmann::json& j);
};

struct AssignmentDraw {
  std::vector<int> w;
  std::vector<double> e;  // true propensities (n_t/N for completely randomized)
  std::vector<std::string> warnings;
};

AssignmentDraw assign(const Science& science, const MechanismSpec& mechanism);

/// Observed view: id, covariates, w (treatment) and y (outcome) with
/// y_i = Y_i(1) if w_i = 1 else Y_i(0).
StudyTable reveal(const Science& science, std::span<const int> w);

enum class Stratum { LL, LS, SS };

std::string_view to_string(Stratum g);

/// Membership probabilities are given on the probability scale as linear
/// predictors over covariates; SL is empty by construction.
struct NoncomplianceSpec {
  LinearPredictor pi_LL;
  LinearPredictor pi_LS;
  LinearPredictor pi_SS;
  LinearPredictor tau_LS;
  double tau_LL = 0.0;
  double tau_SS = 0.0;
  bool exclusion_restrictions = true;

  nlohmann::json to_json() const;
  static NoncomplianceSpec from_json(const nlohmann::json& j);
};

struct EncouragementData {
  /// id, covariates, h (treatment role: 1 = l), T (intermediate: 1 = L), y.
  StudyTable observed;
  // oracle only
  std::vector<Stratum> strata;
  std::vector<double> pi_LL, pi_LS, pi_SS;
  std::vector<double> y_s, y_l;
  /// Mean of Y(l) - Y(s) over the sampled LS units.
  double true_cace = 0.0;
};

/// Y(s) follows the science's g0 plus noise; Y(l) = Y(s) + tau_G. T is L
/// for LL, S for SS, and follows h for LS.
EncouragementData generate_encouragement(const ScienceSpec& science, const NoncomplianceSpec& noncompliance,
                                         const MechanismSpec& encouragement);

}  // namespace obstudy
